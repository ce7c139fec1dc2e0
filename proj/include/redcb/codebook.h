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

// Redundancy codebook: construction from per-token analysis records,
// persistence, and pruning of token sequences by their maximum cosine
// similarity to the stored prototypes.

#ifndef REDCB_CODEBOOK_H_
#define REDCB_CODEBOOK_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "redcb/analysis.h"
#include "redcb/numerics.h"
#include "redcb/oracle.h"
#include "redcb/store.h"

namespace redcb {

inline constexpr std::uint32_t kCodebookFormatVersion = 1;

// A token is a redundant candidate iff p1 < tau_prob, its per-image cluster
// has fewer than tau_out members and jsd_final < tau_jsd. A candidate
// becomes a prototype iff its pooled cluster has more than tau_in members.
struct Thresholds {
  double tau_prob = 0.1;
  std::size_t tau_out = 8;
  double tau_jsd = 2e-3;
  std::size_t tau_in = 64;

  void Validate() const;
  bool operator==(const Thresholds&) const = default;
};

struct ThresholdProfile {
  std::string name;
  Thresholds thresholds;
  std::size_t k_pool = 64;
  std::string description;
};

// Named presets: "llava-1.5", "llava-next", "llava-onevision" for exported
// real-model data and "synthetic" for the generated corpus.
const std::vector<ThresholdProfile>& ThresholdProfiles();
// Throws InvalidInput for unknown names.
const ThresholdProfile& FindProfile(const std::string& name);

using Provenance = std::pair<std::string, std::size_t>;  // (image_id, token_idx)

struct CandidateSet {
  Matrix embeddings;
  std::vector<Provenance> provenance;

  std::size_t size() const { return provenance.size(); }
};

// Applies the three per-image filters. Output is ordered by (image_id,
// token_idx). Throws ConsistencyError when a record has no embedding.
CandidateSet SelectCandidates(const std::vector<AnalysisRecord>& records,
                              const std::vector<ImageTokens>& images, const Thresholds& th);

// Pools the candidates, clusters them with DPC-kNN (ceil(N / k_pool)
// clusters) and keeps members of clusters larger than tau_in. May return an
// empty set. Throws EmptyCandidateSet when given no candidates.
CandidateSet ContextIndependentFilter(const CandidateSet& candidates, std::size_t k_pool,
                                      std::size_t tau_in, int jobs = 1);

struct RedundancyCodebook {
  Matrix prototypes;  // N x d, float32-representable values
  std::string model_id;
  Thresholds thresholds;
  std::size_t k_pool = 64;
  std::uint32_t format_version = kCodebookFormatVersion;
  std::vector<Provenance> provenance;

  std::size_t size() const { return prototypes.rows(); }
  std::size_t dim() const { return prototypes.dim(); }
  bool operator==(const RedundancyCodebook&) const = default;
};

// Throws EmptyCandidateSet when no token survives the filters.
RedundancyCodebook BuildCodebookFromRecords(const std::vector<AnalysisRecord>& records,
                                            const std::vector<ImageTokens>& images,
                                            const Thresholds& th, std::size_t k_pool,
                                            const std::string& model_id, int jobs = 1);

RedundancyCodebook BuildCodebook(const std::vector<ImageTokens>& images, const ModelOracle& oracle,
                                 const AnalysisConfig& cfg, const Thresholds& th,
                                 std::size_t k_pool, int jobs = 1);

// "RCBK" | u32 version | u32 header length | JSON header |
// N*d float32 payload | u32 CRC32 of the payload. Little-endian.
std::vector<unsigned char> EncodeCodebook(const RedundancyCodebook& cb);
// Throws CorruptStoreError on bad magic, truncation or checksum mismatch and
// UnsupportedVersion when the version is not 1.
RedundancyCodebook DecodeCodebook(std::span<const unsigned char> bytes);
void SaveCodebook(const RedundancyCodebook& cb, const std::filesystem::path& path);
RedundancyCodebook LoadCodebook(const std::filesystem::path& path);

// score_i = max_j cos(t_i, prototype_j).
std::vector<double> RedundancyScores(const Matrix& tokens, const RedundancyCodebook& cb);

enum class PruneMode { kThreshold, kBudget };

struct PruneResult {
  std::vector<std::size_t> kept;  // strictly ascending
  std::vector<double> scores;
  PruneMode mode = PruneMode::kThreshold;
  double r_threshold = 0.0;
  std::size_t budget = 0;
};

// Indices with score <= r, ascending.
std::vector<std::size_t> KeepAtMost(std::span<const double> scores, double r);
// The min(R, L) lowest (or highest) scores, ties to the lower index, returned
// in ascending index order.
std::vector<std::size_t> KeepLowest(std::span<const double> scores, std::size_t budget);
std::vector<std::size_t> KeepHighest(std::span<const double> scores, std::size_t budget);

PruneResult PruneThreshold(const Matrix& tokens, const RedundancyCodebook& cb,
                           double r_threshold = 0.5);
PruneResult PruneBudget(const Matrix& tokens, const RedundancyCodebook& cb, std::size_t budget);

struct CalibrationResult {
  double r_threshold = 0.0;
  double achieved_mean = 0.0;
  double target_mean = 0.0;
  // Set when the step function overshoots the target by a token or more.
  std::optional<std::string> warning;
};

// Smallest r whose corpus-mean retained count |{i : score_i <= r}| meets
// or exceeds target_mean. Searched by bisection over the sorted distinct
// scores, which are the only points where the count changes, so the answer
// is exact. Throws InvalidInput unless 0 < target_mean <= mean L.
CalibrationResult CalibrateThreshold(const std::vector<std::vector<double>>& per_image_scores,
                                     double target_mean);
CalibrationResult CalibrateThreshold(const std::vector<ImageTokens>& images,
                                     const RedundancyCodebook& cb, double target_mean);

// L * N * (2d - 1). Throws InvalidInput for zero arguments and RangeError
// on 64-bit overflow.
std::uint64_t ProbingFlops(std::uint64_t l, std::uint64_t n, std::uint64_t d);

nlohmann::json ToJson(const PruneResult& r, const std::string& image_id);

}  // namespace redcb

#endif  // REDCB_CODEBOOK_H_
