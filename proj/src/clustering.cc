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

#include "redcb/clustering.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "redcb/errors.h"
#include "redcb/parallel.h"

namespace redcb {

namespace {

void DistancesFrom(const Matrix& x, std::size_t i, std::vector<double>& out) {
  out.resize(x.rows());
  for (std::size_t j = 0; j < x.rows(); ++j) out[j] = EuclideanDistance(x.row(i), x.row(j));
}

// Order of points by density, densest first; ties to the lower index.
std::vector<std::size_t> DensityOrder(std::span<const double> rho) {
  std::vector<std::size_t> order(rho.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rho[a] > rho[b]; });
  return order;
}

}  // namespace

std::size_t DefaultClusterCount(std::size_t count, std::size_t k) {
  if (k == 0) throw InvalidInput("k must be positive");
  return std::max<std::size_t>(1, (count + k - 1) / k);
}

std::vector<double> DpcLocalDensity(const Matrix& x, std::size_t k, int jobs) {
  const std::size_t n = x.rows();
  if (k < 1 || k + 1 > n) {
    throw InvalidInput("kNN size k=" + std::to_string(k) + " outside [1, " +
                       std::to_string(n == 0 ? 0 : n - 1) + "]");
  }
  std::vector<double> rho(n);
  ParallelFor(n, jobs, [&](std::size_t i) {
    std::vector<double> d;
    DistancesFrom(x, i, d);
    d.erase(d.begin() + static_cast<std::ptrdiff_t>(i));
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    std::sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += d[j];
    rho[i] = std::exp(-sum / static_cast<double>(k));
  });
  return rho;
}

std::vector<double> DpcDelta(const Matrix& x, std::span<const double> rho, int jobs) {
  const std::size_t n = x.rows();
  if (rho.size() != n) throw InvalidInput("density vector length mismatch");
  const std::vector<std::size_t> order = DensityOrder(rho);
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::vector<double> delta(n, 0.0);
  ParallelFor(n, jobs, [&](std::size_t i) {
    std::vector<double> d;
    DistancesFrom(x, i, d);
    if (rank[i] == 0) {
      delta[i] = n > 1 ? *std::max_element(d.begin(), d.end()) : 0.0;
      return;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (rank[j] < rank[i]) best = std::min(best, d[j]);
    }
    delta[i] = best;
  });
  return delta;
}

ClusterResult DpcCluster(const Matrix& x, std::size_t k, std::size_t n_clusters,
                         int jobs) {
  const std::size_t n = x.rows();
  if (n_clusters < 1 || n_clusters > n) {
    throw InvalidInput("n_clusters=" + std::to_string(n_clusters) + " outside [1, " +
                       std::to_string(n) + "]");
  }
  ClusterResult result;
  if (n == 1) {
    result.center_indices = {0};
    result.assignment = {0};
    result.sizes = {1};
    return result;
  }
  const std::vector<double> rho = DpcLocalDensity(x, k, jobs);
  const std::vector<double> delta = DpcDelta(x, rho, jobs);
  const std::size_t top = DensityOrder(rho).front();

  std::vector<std::size_t> by_gamma(n);
  std::iota(by_gamma.begin(), by_gamma.end(), std::size_t{0});
  std::stable_sort(by_gamma.begin(), by_gamma.end(), [&](std::size_t a, std::size_t b) {
    return rho[a] * delta[a] > rho[b] * delta[b];
  });
  for (std::size_t i : by_gamma) {
    if (result.center_indices.size() == n_clusters) break;
    if (i == top || delta[i] > 0.0) result.center_indices.push_back(i);
  }

  const std::size_t c = result.center_indices.size();
  std::vector<std::size_t> center_pos(n, c);
  for (std::size_t p = 0; p < c; ++p) center_pos[result.center_indices[p]] = p;

  result.assignment.assign(n, 0);
  ParallelFor(n, jobs, [&](std::size_t i) {
    if (center_pos[i] < c) {
      result.assignment[i] = center_pos[i];
      return;
    }
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_pos = 0;
    for (std::size_t p = 0; p < c; ++p) {
      const double d = EuclideanDistance(x.row(i), x.row(result.center_indices[p]));
      if (d < best) {
        best = d;
        best_pos = p;
      }
    }
    result.assignment[i] = best_pos;
  });
  result.sizes.assign(c, 0);
  for (std::size_t a : result.assignment) ++result.sizes[a];
  return result;
}

}  // namespace redcb
