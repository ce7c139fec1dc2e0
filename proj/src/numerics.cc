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

#include "redcb/numerics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "redcb/errors.h"

namespace redcb {

Matrix::Matrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t dim, std::vector<double> data)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows_ * dim_) {
    throw InvalidInput("matrix data has " + std::to_string(data_.size()) +
                       " entries, expected " + std::to_string(rows_ * dim_));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw InvalidInput("matrix entry is not finite");
  }
}

Matrix Matrix::FromRows(const std::vector<EmbeddingVector>& rows) {
  Matrix m;
  for (const auto& r : rows) m.AppendRow(r);
  return m;
}

void Matrix::AppendRow(std::span<const double> values) {
  if (rows_ == 0 && data_.empty()) {
    dim_ = values.size();
  } else if (values.size() != dim_) {
    throw ShapeError("row has " + std::to_string(values.size()) +
                     " columns, matrix has " + std::to_string(dim_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidInput("matrix entry is not finite");
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::SelectRows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), dim_);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows_) throw InvalidInput("row index out of range");
    auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void SparseLogits::Validate() const {
  if (ids.empty()) throw InvalidInput("logits are empty");
  if (ids.size() != logits.size()) {
    throw InvalidInput("candidate ids and logits differ in length");
  }
  std::unordered_set<TokenId> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!std::isfinite(logits[i])) throw InvalidInput("logit is not finite");
    if (!seen.insert(ids[i]).second) {
      throw InvalidInput("duplicate candidate id " + std::to_string(ids[i]));
    }
  }
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

double EuclideanDistance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return std::sqrt(s);
}

double Cosine(std::span<const double> a, std::span<const double> b) {
  const double na = Norm(a);
  const double nb = Norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return Dot(a, b) / (na * nb);
}

std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("softmax of empty input");
  double max = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInput("softmax input is not finite");
    max = std::max(max, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix L2NormalizeRows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double n = Norm(r);
    if (n == 0.0) continue;
    for (double& v : r) v /= n;
  }
  return out;
}

Matrix CosineSimilarityMatrix(const Matrix& t, const Matrix& c) {
  if (t.dim() != c.dim()) {
    throw ShapeError("cosine similarity between d=" + std::to_string(t.dim()) +
                     " and d=" + std::to_string(c.dim()));
  }
  const Matrix tn = L2NormalizeRows(t);
  const Matrix cn = L2NormalizeRows(c);
  Matrix sim(t.rows(), c.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < c.rows(); ++j) sim(i, j) = Dot(tn.row(i), cn.row(j));
  }
  return sim;
}

namespace {

void CheckAligned(const ProbDist& a, const ProbDist& b) {
  if (a.ids != b.ids || a.probs.size() != a.ids.size() ||
      b.probs.size() != b.ids.size()) {
    throw AlignmentError("distributions are not over the same candidate ids");
  }
}

}  // namespace

double KlDivergence(const ProbDist& m, const ProbDist& q) {
  CheckAligned(m, q);
  double sum = 0.0;
  for (std::size_t i = 0; i < m.probs.size(); ++i) {
    if (m.probs[i] <= 0.0) continue;
    if (q.probs[i] <= 0.0) return std::numeric_limits<double>::infinity();
    sum += m.probs[i] * std::log(m.probs[i] / q.probs[i]);
  }
  return sum;
}

double Jsd(const ProbDist& m, const ProbDist& n) {
  CheckAligned(m, n);
  ProbDist q{m.ids, std::vector<double>(m.probs.size())};
  for (std::size_t i = 0; i < q.probs.size(); ++i) {
    q.probs[i] = 0.5 * (m.probs[i] + n.probs[i]);
  }
  return 0.5 * (KlDivergence(m, q) + KlDivergence(n, q));
}

std::vector<std::size_t> TopRanked(const SparseLogits& logits, std::size_t m) {
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  m = std::min(m, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (logits.logits[a] != logits.logits[b]) return logits.logits[a] > logits.logits[b];
    return logits.ids[a] < logits.ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m),
                    order.end(), better);
  order.resize(m);
  return order;
}

std::pair<ProbDist, ProbDist> HeadVocabDistributions(const SparseLogits& src,
                                                     const SparseLogits& ablated,
                                                     std::size_t m) {
  src.Validate();
  ablated.Validate();
  if (m == 0 || m > src.size()) {
    throw InvalidInput("head vocabulary of " + std::to_string(m) + " from " +
                       std::to_string(src.size()) + " candidates");
  }
  std::unordered_map<TokenId, double> ablated_by_id;
  ablated_by_id.reserve(ablated.size());
  for (std::size_t i = 0; i < ablated.size(); ++i) {
    ablated_by_id.emplace(ablated.ids[i], ablated.logits[i]);
  }

  std::vector<TokenId> head;
  std::vector<double> src_logits;
  std::vector<double> abl_logits;
  for (std::size_t pos : TopRanked(src, m)) {
    const TokenId id = src.ids[pos];
    auto it = ablated_by_id.find(id);
    if (it == ablated_by_id.end()) {
      throw MissingCandidateError("ablated logits lack head candidate id " +
                                  std::to_string(id));
    }
    head.push_back(id);
    src_logits.push_back(src.logits[pos]);
    abl_logits.push_back(it->second);
  }
  return {ProbDist{head, Softmax(src_logits)}, ProbDist{head, Softmax(abl_logits)}};
}

double Top1Probability(const SparseLogits& logits, std::size_t m) {
  logits.Validate();
  if (m == 0) throw InvalidInput("top-1 probability over zero candidates");
  std::vector<double> head;
  for (std::size_t pos : TopRanked(logits, m)) head.push_back(logits.logits[pos]);
  return Softmax(head).front();
}

TokenId ArgmaxId(const SparseLogits& logits) {
  logits.Validate();
  return logits.ids[TopRanked(logits, 1).front()];
}

}  // namespace redcb
