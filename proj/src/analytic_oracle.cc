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

#include "redcb/analytic_oracle.h"

#include "redcb/errors.h"

namespace redcb {

AnalyticOracle::AnalyticOracle(const Matrix& class_directions, double beta)
    : classes_(L2NormalizeRows(class_directions)), beta_(beta) {
  if (classes_.rows() == 0) throw InvalidInput("analytic oracle needs at least one class");
  const std::size_t d = classes_.dim();
  caps_.vocab_size = classes_.rows() + 1;
  caps_.embed_dim = d;
  pad_.assign(d, 0.0);
  query_.assign(d, 0.0);
  for (std::size_t c = 0; c < classes_.rows(); ++c) {
    for (std::size_t j = 0; j < d; ++j) query_[j] += classes_(c, j);
  }
  const double n = Norm(query_);
  if (n > 0.0) {
    for (double& v : query_) v /= n;
  }
}

OracleResponse AnalyticOracle::Forward(const VisualInput& input, PromptKind /*prompt*/,
                                       std::span<const TokenId> /*generated*/) const {
  const std::size_t d = caps_.embed_dim;
  const std::size_t n = input.tokens.rows();
  EmbeddingVector mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = input.tokens.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  if (n > 0) {
    for (double& v : mean) v /= static_cast<double>(n);
  }

  OracleResponse out;
  const std::size_t c = classes_.rows();
  for (std::size_t k = 0; k < c; ++k) {
    out.logits.ids.push_back(static_cast<TokenId>(k));
    out.logits.logits.push_back(beta_ * Dot(classes_.row(k), mean));
  }
  out.logits.ids.push_back(static_cast<TokenId>(c));
  out.logits.logits.push_back(0.0);

  std::vector<double> attn(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    attn[i] = std::max(0.0, Cosine(input.tokens.row(i), query_));
    sum += attn[i];
  }
  for (double& a : attn) a = sum > 0.0 ? a / sum : 1.0 / static_cast<double>(n);
  out.attention = AttentionRecord{{{attn}}, {{1.0}}};
  return out;
}

}  // namespace redcb
