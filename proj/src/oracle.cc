// Copyright 2026 The redcb Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "redcb/oracle.h"

#include <string>

#include "redcb/errors.h"

namespace redcb {

namespace {

constexpr std::array<std::string_view, 5> kKindNames = {
    "single", "region_src", "region_ablate", "global_src", "global_ablate"};

std::size_t CeilSqrt(std::size_t n) {
  std::size_t r = 0;
  while (r * r < n) ++r;
  return r;
}

}  // namespace

std::string_view ToString(RequestKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

RequestKind ParseRequestKind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<RequestKind>(i);
  }
  throw InvalidInput("unknown request kind '" + std::string(name) + "'");
}

PromptKind PromptFor(RequestKind kind) {
  switch (kind) {
    case RequestKind::kSingle:
      return PromptKind::kDescribeSingleToken;
    case RequestKind::kRegionSrc:
    case RequestKind::kRegionAblate:
      return PromptKind::kDescribeRegion;
    case RequestKind::kGlobalSrc:
    case RequestKind::kGlobalAblate:
      return PromptKind::kDescribeImage;
  }
  return PromptKind::kDescribeImage;
}

std::string RequestKey::ToString() const {
  std::string s = image_id;
  s += '|';
  s += redcb::ToString(kind);
  s += '|';
  s += std::to_string(target_idx);
  s += '|';
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(region[i]);
  }
  return s;
}

void VisualInput::Validate() const {
  const std::size_t n = tokens.rows();
  for (std::size_t i = 0; i < newline_after.size(); ++i) {
    if (newline_after[i] >= n || (i > 0 && newline_after[i] <= newline_after[i - 1])) {
      throw InvalidInput("newline positions must be strictly increasing and < L");
    }
  }
  if (grid && grid->first * grid->second != n) {
    throw InvalidInput("grid " + std::to_string(grid->first) + "x" +
                       std::to_string(grid->second) + " does not cover " +
                       std::to_string(n) + " tokens");
  }
}

void LiveOracle::CheckDim(const VisualInput& input) const {
  if (input.tokens.rows() > 0 && input.tokens.dim() != capabilities().embed_dim) {
    throw ShapeError("visual tokens have d=" + std::to_string(input.tokens.dim()) +
                     ", oracle expects d=" + std::to_string(capabilities().embed_dim));
  }
}

OracleResponse LiveOracle::FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                           const RequestKey& /*key*/) const {
  CheckDim(input);
  input.Validate();
  OracleResponse first = Forward(input, prompt, {});
  first.step = 1;
  first.article_skipped = false;
  const TokenId greedy = ArgmaxId(first.logits);
  if (!capabilities().article_ids.contains(greedy)) return first;

  const TokenId generated[] = {greedy};
  OracleResponse second = Forward(input, prompt, generated);
  second.step = 2;
  second.article_skipped = true;
  return second;
}

VisualInput BuildSingleTokenInput(std::span<const double> v, const OracleCapabilities& caps,
                                  std::size_t reference_length) {
  VisualInput input;
  const std::size_t repeats =
      caps.repeat_for_single_input ? std::max<std::size_t>(1, CeilSqrt(reference_length)) : 1;
  for (std::size_t i = 0; i < repeats; ++i) input.tokens.AppendRow(v);
  if (caps.repeat_for_single_input && caps.uses_image_newline) {
    input.newline_after.push_back(repeats - 1);
  }
  return input;
}

OracleResponse CountingOracle::FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                               const RequestKey& key) const {
  counts_[static_cast<std::size_t>(key.kind)].fetch_add(1);
  return inner_.FirstStepLogits(input, prompt, key);
}

std::size_t CountingOracle::count(RequestKind kind) const {
  return counts_[static_cast<std::size_t>(kind)].load();
}

std::size_t CountingOracle::total() const {
  std::size_t t = 0;
  for (const auto& c : counts_) t += c.load();
  return t;
}

}  // namespace redcb
