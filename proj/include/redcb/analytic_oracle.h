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

#ifndef REDCB_ANALYTIC_ORACLE_H_
#define REDCB_ANALYTIC_ORACLE_H_

#include <string>

#include "redcb/oracle.h"

namespace redcb {

// Closed-form stand-in for a model.
//
// logits = beta * A^T * meanpool(tokens), where A holds the C unit class
// directions plus an "other" column fixed at zero, so token id c < C is
// class c and id C is "other". The pad embedding is the zero vector and
// there are no articles.
//
// The attention record is synthetic: the cosine of each token to the
// normalized sum of class directions, clipped at zero and renormalized to a
// distribution (uniform if every cosine is <= 0). One layer, one head.
class AnalyticOracle : public LiveOracle {
 public:
  // Rows of class_directions are normalized on construction.
  explicit AnalyticOracle(const Matrix& class_directions, double beta = 5.0);

  std::string model_id() const override { return "analytic"; }
  const OracleCapabilities& capabilities() const override { return caps_; }
  const EmbeddingVector& pad_embedding() const override { return pad_; }

  std::size_t num_classes() const { return classes_.rows(); }
  double beta() const { return beta_; }
  const EmbeddingVector& query_direction() const { return query_; }

 protected:
  OracleResponse Forward(const VisualInput& input, PromptKind prompt,
                         std::span<const TokenId> generated) const override;

 private:
  Matrix classes_;
  double beta_;
  OracleCapabilities caps_;
  EmbeddingVector pad_;
  EmbeddingVector query_;
};

}  // namespace redcb

#endif  // REDCB_ANALYTIC_ORACLE_H_
