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

#ifndef REDCB_TOY_TRANSFORMER_H_
#define REDCB_TOY_TRANSFORMER_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "redcb/oracle.h"

namespace redcb {

struct ToyTransformerConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 32;
  std::size_t vocab = 64;
  std::size_t mlp_hidden = 64;
  std::uint64_t seed = 1234;
  std::set<TokenId> article_ids = {60, 61, 62};
  // Its embedding row doubles as the pad embedding.
  TokenId pad_id = 63;
  bool repeat_for_single_input = true;
  bool uses_image_newline = true;
};

// Small untrained causal transformer with deterministic seeded weights.
//
// Sequence layout: visual tokens (an image-newline row after each marked
// position), then a fixed prompt id sequence per PromptKind, then generated
// ids. Pre-norm blocks (weightless RMSNorm), multi-head causal attention,
// a ReLU MLP and sinusoidal positions. Input and output embeddings are
// tied. All weights are N(0, 1/d) draws from Rng(seed).
class ToyTransformerOracle : public LiveOracle {
 public:
  explicit ToyTransformerOracle(ToyTransformerConfig config = {});

  std::string model_id() const override;
  const OracleCapabilities& capabilities() const override { return caps_; }
  const EmbeddingVector& pad_embedding() const override { return pad_; }

  const ToyTransformerConfig& config() const { return config_; }
  static std::vector<TokenId> PromptIds(PromptKind prompt);

 protected:
  OracleResponse Forward(const VisualInput& input, PromptKind prompt,
                         std::span<const TokenId> generated) const override;

 private:
  struct Layer {
    Matrix wq, wk, wv, wo;  // d x d
    Matrix w1;              // d x hidden
    Matrix w2;              // hidden x d
  };

  ToyTransformerConfig config_;
  OracleCapabilities caps_;
  Matrix embedding_;  // vocab x d
  EmbeddingVector newline_;
  EmbeddingVector pad_;
  std::vector<Layer> layers_;
};

}  // namespace redcb

#endif  // REDCB_TOY_TRANSFORMER_H_
