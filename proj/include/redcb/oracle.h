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

// Query surface of a multimodal model as seen by the redundancy analysis:
// logits for a visual input plus a prompt, the pad embedding used for
// ablation, capability flags and (optionally) attention maps.

#ifndef REDCB_ORACLE_H_
#define REDCB_ORACLE_H_

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "redcb/numerics.h"

namespace redcb {

enum class PromptKind { kDescribeSingleToken, kDescribeRegion, kDescribeImage };

// Which experiment a query belongs to. Together with the image id, target
// token and region it names a query in the replay wire format.
enum class RequestKind { kSingle, kRegionSrc, kRegionAblate, kGlobalSrc, kGlobalAblate };

std::string_view ToString(RequestKind kind);
// Throws InvalidInput for unknown names.
RequestKind ParseRequestKind(std::string_view name);
PromptKind PromptFor(RequestKind kind);

struct RequestKey {
  std::string image_id;
  RequestKind kind = RequestKind::kSingle;
  // Target token for single and region queries, -1 for global ones.
  std::int64_t target_idx = -1;
  // Sorted token indices of the region, empty for single and global_src.
  std::vector<std::size_t> region;

  // Canonical "image|kind|target|i,j,k" form used as a lookup key.
  std::string ToString() const;
  bool operator==(const RequestKey&) const = default;
};

struct OracleCapabilities {
  bool repeat_for_single_input = false;
  bool uses_image_newline = false;
  std::set<TokenId> article_ids;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
};

struct VisualInput {
  Matrix tokens;
  // Positions after which an image-newline marker follows. Strictly
  // increasing, each < tokens.rows().
  std::vector<std::size_t> newline_after;
  // (rows, cols) with rows * cols == tokens.rows(), when known.
  std::optional<std::pair<std::size_t, std::size_t>> grid;

  // Throws InvalidInput on a malformed newline list or grid.
  void Validate() const;
};

// Final position's softmaxed attention over the visual positions, indexed
// [layer][head][visual position].
struct AttentionRecord {
  std::vector<std::vector<std::vector<double>>> scores;
  // [layer][head] attention mass over every key position, visual or not.
  // Empty when the oracle does not report it.
  std::vector<std::vector<double>> row_mass;

  std::size_t layers() const { return scores.size(); }
  std::size_t heads() const { return scores.empty() ? 0 : scores.front().size(); }
};

struct OracleResponse {
  SparseLogits logits;
  int step = 1;
  bool article_skipped = false;
  std::optional<AttentionRecord> attention;
};

class ModelOracle {
 public:
  virtual ~ModelOracle() = default;

  virtual std::string model_id() const = 0;
  virtual const OracleCapabilities& capabilities() const = 0;
  virtual const EmbeddingVector& pad_embedding() const = 0;

  // Logits at the first informative decoding step. When the greedy step-1
  // token is an article, it is appended once and the step-2 logits are
  // returned instead. `key` identifies the query; live oracles ignore it.
  virtual OracleResponse FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                         const RequestKey& key) const = 0;
};

// Oracle that computes logits from the input content. Implements the single
// article skip on top of Forward().
class LiveOracle : public ModelOracle {
 public:
  OracleResponse FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                 const RequestKey& key) const final;

 protected:
  // Full-vocabulary logits after the visual input, the prompt and any
  // already generated tokens.
  virtual OracleResponse Forward(const VisualInput& input, PromptKind prompt,
                                 std::span<const TokenId> generated) const = 0;

  void CheckDim(const VisualInput& input) const;
};

// Builds the model input for probing one token. Models that cannot answer
// for a lone token get a synthesized image line: the token repeated
// ceil(sqrt(reference_length)) times, followed by an image newline when the
// model uses them.
VisualInput BuildSingleTokenInput(std::span<const double> v, const OracleCapabilities& caps,
                                  std::size_t reference_length);

// Forwards to another oracle and counts queries per RequestKind.
class CountingOracle : public ModelOracle {
 public:
  explicit CountingOracle(const ModelOracle& inner) : inner_(inner) {}

  std::string model_id() const override { return inner_.model_id(); }
  const OracleCapabilities& capabilities() const override { return inner_.capabilities(); }
  const EmbeddingVector& pad_embedding() const override { return inner_.pad_embedding(); }
  OracleResponse FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                 const RequestKey& key) const override;

  std::size_t count(RequestKind kind) const;
  std::size_t total() const;

 private:
  const ModelOracle& inner_;
  mutable std::array<std::atomic<std::size_t>, 5> counts_{};
};

}  // namespace redcb

#endif  // REDCB_ORACLE_H_
