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

// Density peaks clustering with k-nearest-neighbour density (DPC-kNN).
//
//   rho_i   = exp(-(1/k) * sum of distances to the k nearest other points)
//   delta_i = distance to the nearest point ranked above i by density,
//             or the largest distance to any point for the top-ranked point
//
// Points are ranked by (rho descending, index ascending), so exactly one
// point takes the max-distance branch even when densities tie. Centers are
// the points with the largest rho * delta; every other point joins its
// Euclidean-nearest center.

#ifndef REDCB_CLUSTERING_H_
#define REDCB_CLUSTERING_H_

#include <cstddef>
#include <span>
#include <vector>

#include "redcb/numerics.h"

namespace redcb {

struct ClusterResult {
  // Point indices of the centers, in selection order (best rho * delta first).
  std::vector<std::size_t> center_indices;
  // For each point, the position of its center within center_indices.
  std::vector<std::size_t> assignment;
  // Members per center, aligned with center_indices.
  std::vector<std::size_t> sizes;

  std::size_t num_clusters() const { return center_indices.size(); }
  // Size of the cluster that `point` belongs to.
  std::size_t SizeOf(std::size_t point) const { return sizes[assignment[point]]; }

  bool operator==(const ClusterResult&) const = default;
};

// Throws InvalidInput unless 1 <= k <= rows - 1.
std::vector<double> DpcLocalDensity(const Matrix& x, std::size_t k, int jobs = 1);

std::vector<double> DpcDelta(const Matrix& x, std::span<const double> rho,
                             int jobs = 1);

// Requires 1 <= n_clusters <= rows and 1 <= k <= rows - 1 (k is ignored
// for a single point). Points whose delta is zero sit exactly on a denser
// point and are never promoted to centers, so duplicated inputs may yield
// fewer than n_clusters clusters.
ClusterResult DpcCluster(const Matrix& x, std::size_t k, std::size_t n_clusters,
                         int jobs = 1);

// ceil(count / k), at least 1.
std::size_t DefaultClusterCount(std::size_t count, std::size_t k);

}  // namespace redcb

#endif  // REDCB_CLUSTERING_H_
