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

// Dense small-matrix helpers, probability distributions and divergences.
//
// Every accumulation is done in double precision even when the embeddings
// originate from float32 blobs. Divergences use the natural logarithm, so
// JSD values live in [0, ln 2].

#ifndef REDCB_NUMERICS_H_
#define REDCB_NUMERICS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace redcb {

using TokenId = std::int32_t;
using EmbeddingVector = std::vector<double>;

// Row-major real matrix. Used both for token embeddings (rows are tokens in
// spatial order) and for similarity matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t dim);
  // Throws InvalidInput if data.size() != rows * dim or an entry is not finite.
  Matrix(std::size_t rows, std::size_t dim, std::vector<double> data);

  static Matrix FromRows(const std::vector<EmbeddingVector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return rows_ == 0; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }

  const std::vector<double>& data() const { return data_; }

  // Appends a row; the first appended row fixes dim() for an empty matrix.
  void AppendRow(std::span<const double> values);

  // Rows selected by index, in the given order.
  Matrix SelectRows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

using TokenMatrix = Matrix;

// Logits over a subset of the vocabulary (or all of it).
struct SparseLogits {
  std::vector<TokenId> ids;
  std::vector<double> logits;

  std::size_t size() const { return ids.size(); }
  // Throws InvalidInput when empty, misaligned, non-finite or ids repeat.
  void Validate() const;
};

struct ProbDist {
  std::vector<TokenId> ids;
  std::vector<double> probs;
};

double Dot(std::span<const double> a, std::span<const double> b);
double Norm(std::span<const double> a);
double EuclideanDistance(std::span<const double> a, std::span<const double> b);
double Cosine(std::span<const double> a, std::span<const double> b);

// Max-shifted softmax. Throws InvalidInput on empty or non-finite input.
std::vector<double> Softmax(std::span<const double> logits);

// All-zero rows are passed through unchanged.
Matrix L2NormalizeRows(const Matrix& m);

// (i, j) = cos(t_i, c_j). Zero rows give 0. Throws ShapeError when the
// column counts differ.
Matrix CosineSimilarityMatrix(const Matrix& t, const Matrix& c);

// Sum of m_i * ln(m_i / q_i) with the 0 * ln(0 / q) = 0 convention.
// Throws AlignmentError when the id lists differ.
double KlDivergence(const ProbDist& m, const ProbDist& q);

// Jensen-Shannon divergence, symmetric, in [0, ln 2].
double Jsd(const ProbDist& m, const ProbDist& n);

// Positions (into logits.ids) of the m highest logits, best first. Ties go
// to the lower token id.
std::vector<std::size_t> TopRanked(const SparseLogits& logits, std::size_t m);

// Restricts both logit sets to the m top-ranked ids of `src` and softmaxes
// each independently. The returned distributions share the same id order.
std::pair<ProbDist, ProbDist> HeadVocabDistributions(const SparseLogits& src,
                                                     const SparseLogits& ablated,
                                                     std::size_t m);

// Probability of the rank-1 candidate after a softmax over the m top-ranked
// logits. m is clipped to the number of available candidates.
double Top1Probability(const SparseLogits& logits, std::size_t m);

// Id with the highest logit, ties to the lower id.
TokenId ArgmaxId(const SparseLogits& logits);

}  // namespace redcb

#endif  // REDCB_NUMERICS_H_
