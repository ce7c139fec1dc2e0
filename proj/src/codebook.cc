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

#include "redcb/codebook.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "redcb/clustering.h"
#include "redcb/errors.h"

namespace redcb {

using nlohmann::json;

namespace {

constexpr unsigned char kMagic[4] = {'R', 'C', 'B', 'K'};

void PutU32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

std::uint32_t GetU32(std::span<const unsigned char> bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= std::uint32_t{bytes[off + b]} << (8 * b);
  return v;
}

json ThresholdsToJson(const Thresholds& th) {
  return {{"tau_prob", th.tau_prob},
          {"tau_out", th.tau_out},
          {"tau_jsd", th.tau_jsd},
          {"tau_in", th.tau_in}};
}

Thresholds ThresholdsFromJson(const json& j) {
  Thresholds th;
  th.tau_prob = j.at("tau_prob").get<double>();
  th.tau_out = j.at("tau_out").get<std::size_t>();
  th.tau_jsd = j.at("tau_jsd").get<double>();
  th.tau_in = j.at("tau_in").get<std::size_t>();
  return th;
}

std::vector<std::size_t> KeepRanked(std::span<const double> scores, std::size_t budget,
                                    bool lowest) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min(budget, scores.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lowest ? scores[a] < scores[b] : scores[a] > scores[b];
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

void Thresholds::Validate() const {
  if (!(tau_prob > 0.0 && tau_prob < 1.0)) throw InvalidInput("tau_prob must lie in (0, 1)");
  if (!(tau_jsd >= 0.0)) throw InvalidInput("tau_jsd must be >= 0");
  if (tau_out < 1 || tau_in < 1) throw InvalidInput("tau_out and tau_in must be >= 1");
}

const std::vector<ThresholdProfile>& ThresholdProfiles() {
  static const std::vector<ThresholdProfile> profiles = {
      {"llava-1.5", {0.1, 8, 2e-3, 64}, 64, "576-token CLIP encoder"},
      {"llava-next", {0.1, 8, 2e-3, 64}, 64, "576-token CLIP encoder, sub-image tiles"},
      {"llava-onevision", {0.08, 3, 1.5e-3, 16}, 24, "729-token SigLIP encoder"},
      // Tuned on the generated corpus, not taken from a real model. The
      // planted background is the dominant per-image cluster, so tau_out
      // is set above L=64 to disable the outlier filter there.
      {"synthetic", {0.3, 65, 2e-3, 32}, 64, "generated 8x8 corpus with the analytic oracle"},
  };
  return profiles;
}

const ThresholdProfile& FindProfile(const std::string& name) {
  for (const auto& p : ThresholdProfiles()) {
    if (p.name == name) return p;
  }
  throw InvalidInput("unknown threshold profile '" + name + "'");
}

CandidateSet SelectCandidates(const std::vector<AnalysisRecord>& records,
                              const std::vector<ImageTokens>& images, const Thresholds& th) {
  th.Validate();
  std::map<std::string, const ImageTokens*> by_id;
  for (const ImageTokens& im : images) by_id.emplace(im.image_id, &im);

  std::vector<const AnalysisRecord*> selected;
  for (const AnalysisRecord& r : records) {
    if (r.p1 < th.tau_prob && r.cluster_size_img < th.tau_out && r.jsd_final < th.tau_jsd) {
      selected.push_back(&r);
    }
  }
  std::sort(selected.begin(), selected.end(), [](const auto* a, const auto* b) {
    return std::tie(a->image_id, a->token_idx) < std::tie(b->image_id, b->token_idx);
  });

  CandidateSet out;
  for (const AnalysisRecord* r : selected) {
    auto it = by_id.find(r->image_id);
    if (it == by_id.end() || r->token_idx >= it->second->tokens.rows()) {
      throw ConsistencyError("no embedding for image " + r->image_id + " token " +
                             std::to_string(r->token_idx));
    }
    out.embeddings.AppendRow(it->second->tokens.row(r->token_idx));
    out.provenance.emplace_back(r->image_id, r->token_idx);
  }
  return out;
}

CandidateSet ContextIndependentFilter(const CandidateSet& candidates, std::size_t k_pool,
                                      std::size_t tau_in, int jobs) {
  const std::size_t n = candidates.size();
  if (n == 0) throw EmptyCandidateSet("no redundant candidates to pool");
  if (k_pool == 0) throw InvalidInput("k_pool must be positive");
  const std::size_t k = std::min(k_pool, n > 1 ? n - 1 : 1);
  const ClusterResult clusters =
      DpcCluster(candidates.embeddings, k, DefaultClusterCount(n, k_pool), jobs);
  CandidateSet out;
  for (std::size_t i = 0; i < n; ++i) {
    if (clusters.SizeOf(i) > tau_in) {
      out.embeddings.AppendRow(candidates.embeddings.row(i));
      out.provenance.push_back(candidates.provenance[i]);
    }
  }
  return out;
}

RedundancyCodebook BuildCodebookFromRecords(const std::vector<AnalysisRecord>& records,
                                            const std::vector<ImageTokens>& images,
                                            const Thresholds& th, std::size_t k_pool,
                                            const std::string& model_id, int jobs) {
  const CandidateSet candidates = SelectCandidates(records, images, th);
  if (candidates.size() == 0) {
    throw EmptyCandidateSet("no token passed tau_prob/tau_out/tau_jsd");
  }
  const CandidateSet kept = ContextIndependentFilter(candidates, k_pool, th.tau_in, jobs);
  if (kept.size() == 0) {
    throw EmptyCandidateSet(std::to_string(candidates.size()) +
                            " candidates but no pooled cluster larger than tau_in=" +
                            std::to_string(th.tau_in));
  }
  RedundancyCodebook cb;
  std::vector<double> rounded(kept.embeddings.data().size());
  for (std::size_t i = 0; i < rounded.size(); ++i) {
    rounded[i] = static_cast<double>(static_cast<float>(kept.embeddings.data()[i]));
  }
  cb.prototypes = Matrix(kept.embeddings.rows(), kept.embeddings.dim(), std::move(rounded));
  cb.model_id = model_id;
  cb.thresholds = th;
  cb.k_pool = k_pool;
  cb.provenance = kept.provenance;
  return cb;
}

RedundancyCodebook BuildCodebook(const std::vector<ImageTokens>& images, const ModelOracle& oracle,
                                 const AnalysisConfig& cfg, const Thresholds& th,
                                 std::size_t k_pool, int jobs) {
  if (images.empty()) throw InvalidInput("empty corpus");
  th.Validate();
  const auto records = AnalyzeCorpus(oracle, images, cfg, nullptr, jobs);
  return BuildCodebookFromRecords(records, images, th, k_pool, oracle.model_id(), jobs);
}

std::vector<unsigned char> EncodeCodebook(const RedundancyCodebook& cb) {
  json prov = json::array();
  for (const auto& [id, idx] : cb.provenance) prov.push_back({id, idx});
  const json header = {{"model_id", cb.model_id},
                       {"thresholds", ThresholdsToJson(cb.thresholds)},
                       {"k_pool", cb.k_pool},
                       {"N", cb.prototypes.rows()},
                       {"d", cb.prototypes.dim()},
                       {"provenance", std::move(prov)}};
  const std::string text = header.dump();
  const auto payload = EncodeFloat32(cb.prototypes.data());

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  PutU32(out, cb.format_version);
  PutU32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  PutU32(out, Crc32(payload));
  return out;
}

RedundancyCodebook DecodeCodebook(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw CorruptStoreError("not a codebook file (bad magic)");
  }
  const std::uint32_t version = GetU32(bytes, 4);
  if (version != kCodebookFormatVersion) {
    throw UnsupportedVersion("codebook format version " + std::to_string(version));
  }
  const std::uint32_t header_len = GetU32(bytes, 8);
  if (bytes.size() < 12 + std::size_t{header_len}) {
    throw CorruptStoreError("codebook truncated inside its header");
  }

  RedundancyCodebook cb;
  std::size_t n = 0, d = 0;
  try {
    const json header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    cb.model_id = header.at("model_id").get<std::string>();
    cb.thresholds = ThresholdsFromJson(header.at("thresholds"));
    cb.k_pool = header.at("k_pool").get<std::size_t>();
    n = header.at("N").get<std::size_t>();
    d = header.at("d").get<std::size_t>();
    for (const json& p : header.at("provenance")) {
      cb.provenance.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw CorruptStoreError("codebook header: " + std::string(e.what()));
  }

  const std::size_t payload_off = 12 + header_len;
  const std::size_t payload_len = n * d * 4;
  if (bytes.size() != payload_off + payload_len + 4) {
    throw CorruptStoreError("codebook has " + std::to_string(bytes.size()) +
                            " bytes, header implies " +
                            std::to_string(payload_off + payload_len + 4));
  }
  const auto payload = bytes.subspan(payload_off, payload_len);
  if (Crc32(payload) != GetU32(bytes, payload_off + payload_len)) {
    throw CorruptStoreError("codebook payload checksum mismatch");
  }
  try {
    cb.prototypes = Matrix(n, d, DecodeFloat32(payload));
  } catch (const InvalidInput& e) {
    throw CorruptStoreError("codebook payload: " + std::string(e.what()));
  }
  cb.format_version = version;
  return cb;
}

void SaveCodebook(const RedundancyCodebook& cb, const std::filesystem::path& path) {
  WriteFileBytes(path, EncodeCodebook(cb));
}

RedundancyCodebook LoadCodebook(const std::filesystem::path& path) {
  return DecodeCodebook(ReadFileBytes(path));
}

std::vector<double> RedundancyScores(const Matrix& tokens, const RedundancyCodebook& cb) {
  if (tokens.dim() != cb.dim()) {
    throw ShapeError("tokens have d=" + std::to_string(tokens.dim()) + ", codebook d=" +
                     std::to_string(cb.dim()));
  }
  const Matrix sim = CosineSimilarityMatrix(tokens, cb.prototypes);
  std::vector<double> scores(tokens.rows(), -INFINITY);
  for (std::size_t i = 0; i < sim.rows(); ++i) {
    for (std::size_t j = 0; j < sim.dim(); ++j) scores[i] = std::max(scores[i], sim(i, j));
  }
  return scores;
}

std::vector<std::size_t> KeepAtMost(std::span<const double> scores, double r) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] <= r) kept.push_back(i);
  }
  return kept;
}

std::vector<std::size_t> KeepLowest(std::span<const double> scores, std::size_t budget) {
  return KeepRanked(scores, budget, true);
}

std::vector<std::size_t> KeepHighest(std::span<const double> scores, std::size_t budget) {
  return KeepRanked(scores, budget, false);
}

PruneResult PruneThreshold(const Matrix& tokens, const RedundancyCodebook& cb,
                           double r_threshold) {
  PruneResult out;
  out.scores = RedundancyScores(tokens, cb);
  out.kept = KeepAtMost(out.scores, r_threshold);
  out.mode = PruneMode::kThreshold;
  out.r_threshold = r_threshold;
  return out;
}

PruneResult PruneBudget(const Matrix& tokens, const RedundancyCodebook& cb, std::size_t budget) {
  PruneResult out;
  out.scores = RedundancyScores(tokens, cb);
  out.kept = KeepLowest(out.scores, budget);
  out.mode = PruneMode::kBudget;
  out.budget = budget;
  return out;
}

CalibrationResult CalibrateThreshold(const std::vector<std::vector<double>>& per_image_scores,
                                     double target_mean) {
  if (per_image_scores.empty()) throw InvalidInput("calibration corpus is empty");
  std::vector<std::vector<double>> sorted = per_image_scores;
  std::vector<double> breakpoints;
  double mean_l = 0.0;
  for (auto& s : sorted) {
    std::sort(s.begin(), s.end());
    breakpoints.insert(breakpoints.end(), s.begin(), s.end());
    mean_l += static_cast<double>(s.size());
  }
  const double images = static_cast<double>(sorted.size());
  mean_l /= images;
  if (!(target_mean > 0.0) || target_mean > mean_l) {
    throw InvalidInput("target mean retained count must lie in (0, " + std::to_string(mean_l) +
                       "]");
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

  auto retained = [&](double r) {
    double total = 0.0;
    for (const auto& s : sorted) {
      total += static_cast<double>(std::upper_bound(s.begin(), s.end(), r) - s.begin());
    }
    return total / images;
  };

  // Invariant: retained(breakpoints[hi]) >= target; the last breakpoint
  // keeps every token.
  std::size_t lo = 0, hi = breakpoints.size() - 1;
  if (retained(breakpoints[lo]) >= target_mean) hi = lo;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (retained(breakpoints[mid]) >= target_mean) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  CalibrationResult out;
  out.r_threshold = breakpoints[hi];
  out.achieved_mean = retained(out.r_threshold);
  out.target_mean = target_mean;
  if (out.achieved_mean - target_mean >= 1.0) {
    out.warning = "target mean " + std::to_string(target_mean) +
                  " is not reachable; nearest achievable mean is " +
                  std::to_string(out.achieved_mean);
  }
  return out;
}

CalibrationResult CalibrateThreshold(const std::vector<ImageTokens>& images,
                                     const RedundancyCodebook& cb, double target_mean) {
  std::vector<std::vector<double>> scores;
  scores.reserve(images.size());
  for (const ImageTokens& im : images) scores.push_back(RedundancyScores(im.tokens, cb));
  return CalibrateThreshold(scores, target_mean);
}

std::uint64_t ProbingFlops(std::uint64_t l, std::uint64_t n, std::uint64_t d) {
  if (l == 0 || n == 0 || d == 0) throw InvalidInput("FLOP arguments must be positive");
  std::uint64_t two_d, per_pair, ln, total;
  if (__builtin_mul_overflow(d, std::uint64_t{2}, &two_d) ||
      __builtin_mul_overflow(l, n, &ln)) {
    throw RangeError("FLOP count exceeds 64 bits");
  }
  per_pair = two_d - 1;
  if (__builtin_mul_overflow(ln, per_pair, &total)) {
    throw RangeError("FLOP count exceeds 64 bits");
  }
  return total;
}

json ToJson(const PruneResult& r, const std::string& image_id) {
  json j = {{"image_id", image_id},
            {"mode", r.mode == PruneMode::kThreshold ? "threshold" : "budget"}};
  if (r.mode == PruneMode::kThreshold) {
    j["r_threshold"] = r.r_threshold;
  } else {
    j["budget"] = r.budget;
  }
  j["kept"] = r.kept;
  j["scores"] = r.scores;
  return j;
}

}  // namespace redcb
