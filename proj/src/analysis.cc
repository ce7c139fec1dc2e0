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

#include "redcb/analysis.h"

#include <algorithm>
#include <fstream>

#include "redcb/baselines.h"
#include "redcb/clustering.h"
#include "redcb/errors.h"
#include "redcb/parallel.h"

namespace redcb {

using nlohmann::json;

void AnalysisConfig::Validate() const {
  if (m_top1 == 0 || m_jsd == 0 || k_dpc_image == 0) {
    throw InvalidInput("analysis counts must be positive");
  }
  if (k_region < 0.0 || k_global < 0.0) throw InvalidInput("JSD weights must be >= 0");
  if (neighborhood == 0 || neighborhood % 2 == 0) {
    throw InvalidInput("neighbourhood side must be odd");
  }
}

double SingleTokenProbe(const ModelOracle& oracle, std::span<const double> v,
                        std::size_t reference_length, std::size_t m_top1,
                        const RequestKey& key) {
  const VisualInput input = BuildSingleTokenInput(v, oracle.capabilities(), reference_length);
  const OracleResponse r =
      oracle.FirstStepLogits(input, PromptKind::kDescribeSingleToken, key);
  return Top1Probability(r.logits, m_top1);
}

std::vector<std::size_t> NeighborhoodOf(std::size_t token_idx, std::size_t rows,
                                        std::size_t cols, std::size_t side) {
  if (token_idx >= rows * cols) {
    throw InvalidInput("token " + std::to_string(token_idx) + " outside a " +
                       std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  }
  const std::size_t half = side / 2;
  const std::size_t r = token_idx / cols;
  const std::size_t c = token_idx % cols;
  const std::size_t r0 = r >= half ? r - half : 0;
  const std::size_t c0 = c >= half ? c - half : 0;
  const std::size_t r1 = std::min(rows - 1, r + half);
  const std::size_t c1 = std::min(cols - 1, c + half);
  std::vector<std::size_t> out;
  for (std::size_t i = r0; i <= r1; ++i) {
    for (std::size_t j = c0; j <= c1; ++j) out.push_back(i * cols + j);
  }
  return out;
}

double CascadedJsd(double jsd_region, double jsd_global, const AnalysisConfig& cfg) {
  return cfg.k_region * jsd_region + cfg.k_global * jsd_global;
}

double HeadJsd(const SparseLogits& src, const SparseLogits& ablated, std::size_t m) {
  const auto [p, q] = HeadVocabDistributions(src, ablated, std::min(m, src.size()));
  return Jsd(p, q);
}

ImageAnalysis::ImageAnalysis(const ModelOracle& oracle, const ImageTokens& image,
                             const AnalysisConfig& cfg)
    : oracle_(oracle), image_(image), cfg_(cfg) {
  cfg_.Validate();
  if (image.grid_rows * image.grid_cols != image.tokens.rows() || image.tokens.rows() == 0) {
    throw InvalidInput("image " + image.image_id + " has no grid covering its tokens");
  }
  if (oracle.pad_embedding().size() != image.tokens.dim()) {
    throw ShapeError("pad embedding has d=" + std::to_string(oracle.pad_embedding().size()) +
                     ", image " + image.image_id + " has d=" +
                     std::to_string(image.tokens.dim()));
  }
}

VisualInput ImageAnalysis::GridInput(std::span<const std::size_t> indices, std::size_t n_rows,
                                     std::size_t n_cols,
                                     std::span<const std::size_t> ablate) const {
  VisualInput input;
  const bool newline = oracle_.capabilities().uses_image_newline;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t idx = indices[k];
    const bool padded = cfg_.ablation == AblationMode::kPad &&
                        std::find(ablate.begin(), ablate.end(), idx) != ablate.end();
    if (padded) {
      input.tokens.AppendRow(oracle_.pad_embedding());
    } else {
      input.tokens.AppendRow(image_.tokens.row(idx));
    }
    if (newline && (k + 1) % n_cols == 0) input.newline_after.push_back(k);
  }
  input.grid = std::make_pair(n_rows, n_cols);
  return input;
}

double ImageAnalysis::SingleTokenP1(std::size_t token_idx) const {
  RequestKey key{image_.image_id, RequestKind::kSingle,
                 static_cast<std::int64_t>(token_idx), {}};
  return SingleTokenProbe(oracle_, image_.tokens.row(token_idx), image_.tokens.rows(),
                          cfg_.m_top1, key);
}

double ImageAnalysis::RegionLeaveOneOut(std::size_t token_idx) const {
  const auto region =
      NeighborhoodOf(token_idx, image_.grid_rows, image_.grid_cols, cfg_.neighborhood);
  const std::size_t first_row = region.front() / image_.grid_cols;
  const std::size_t last_row = region.back() / image_.grid_cols;
  const std::size_t n_rows = last_row - first_row + 1;
  const std::size_t n_cols = region.size() / n_rows;

  const auto target = static_cast<std::int64_t>(token_idx);
  const RequestKey src_key{image_.image_id, RequestKind::kRegionSrc, target, region};
  const RequestKey abl_key{image_.image_id, RequestKind::kRegionAblate, target, region};
  const std::size_t ablate[] = {token_idx};
  const OracleResponse src = oracle_.FirstStepLogits(
      GridInput(region, n_rows, n_cols, {}), PromptKind::kDescribeRegion, src_key);
  const OracleResponse abl = oracle_.FirstStepLogits(
      GridInput(region, n_rows, n_cols, ablate), PromptKind::kDescribeRegion, abl_key);
  return HeadJsd(src.logits, abl.logits, cfg_.m_jsd);
}

const OracleResponse& ImageAnalysis::GlobalSource() {
  if (!global_src_) {
    std::vector<std::size_t> all(image_.tokens.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const RequestKey key{image_.image_id, RequestKind::kGlobalSrc, -1, {}};
    global_src_ = oracle_.FirstStepLogits(GridInput(all, image_.grid_rows, image_.grid_cols, {}),
                                          PromptKind::kDescribeImage, key);
  }
  return *global_src_;
}

double ImageAnalysis::GlobalLeaveOneOut(std::span<const std::size_t> region_in) {
  std::vector<std::size_t> region(region_in.begin(), region_in.end());
  if (region.empty()) return 0.0;
  std::sort(region.begin(), region.end());
  region.erase(std::unique(region.begin(), region.end()), region.end());
  for (std::size_t idx : region) {
    if (idx >= image_.tokens.rows()) throw InvalidInput("region index out of range");
  }
  if (auto it = global_memo_.find(region); it != global_memo_.end()) return it->second;

  const OracleResponse& src = GlobalSource();
  std::vector<std::size_t> all(image_.tokens.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const RequestKey key{image_.image_id, RequestKind::kGlobalAblate, -1, region};
  const OracleResponse abl = oracle_.FirstStepLogits(
      GridInput(all, image_.grid_rows, image_.grid_cols, region), PromptKind::kDescribeImage,
      key);
  const double jsd = HeadJsd(src.logits, abl.logits, cfg_.m_jsd);
  global_memo_.emplace(std::move(region), jsd);
  return jsd;
}

std::vector<AnalysisRecord> ImageAnalysis::Run(const EmbeddingVector* cls) {
  const std::size_t n = image_.tokens.rows();
  ClusterResult clusters;
  if (n == 1) {
    clusters = ClusterResult{{0}, {0}, {1}};
  } else {
    clusters = DpcCluster(image_.tokens, std::min(cfg_.k_dpc_image, n - 1),
                          DefaultClusterCount(n, cfg_.k_dpc_image));
  }

  std::vector<double> attn;
  const OracleResponse& global_src = GlobalSource();
  if (global_src.attention) {
    std::vector<std::size_t> layers(global_src.attention->layers());
    for (std::size_t l = 0; l < layers.size(); ++l) layers[l] = l;
    attn = AttentionScores(*global_src.attention, layers);
  }
  if (cls && cls->size() != image_.tokens.dim()) {
    throw ShapeError("cls embedding dimension mismatch");
  }

  std::vector<AnalysisRecord> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    try {
      AnalysisRecord r;
      r.image_id = image_.image_id;
      r.token_idx = t;
      r.p1 = SingleTokenP1(t);
      r.cluster_size_img = clusters.SizeOf(t);
      r.jsd_region = RegionLeaveOneOut(t);
      r.jsd_global = GlobalLeaveOneOut(
          NeighborhoodOf(t, image_.grid_rows, image_.grid_cols, cfg_.neighborhood));
      r.jsd_final = CascadedJsd(r.jsd_region, r.jsd_global, cfg_);
      if (cls) r.clssim = Cosine(image_.tokens.row(t), *cls);
      if (attn.size() == n) r.attn_score = attn[t];
      out.push_back(std::move(r));
    } catch (...) {
      RethrowWithContext("image " + image_.image_id + " token " + std::to_string(t) + ": ");
    }
  }
  return out;
}

std::vector<AnalysisRecord> AnalyzeImage(const ModelOracle& oracle, const ImageTokens& image,
                                         const AnalysisConfig& cfg, const EmbeddingVector* cls) {
  ImageAnalysis analysis(oracle, image, cfg);
  return analysis.Run(cls);
}

std::vector<AnalysisRecord> AnalyzeCorpus(const ModelOracle& oracle,
                                          const std::vector<ImageTokens>& images,
                                          const AnalysisConfig& cfg, const EmbeddingVector* cls,
                                          int jobs) {
  std::vector<std::vector<AnalysisRecord>> per_image(images.size());
  ParallelFor(images.size(), jobs, [&](std::size_t i) {
    per_image[i] = AnalyzeImage(oracle, images[i], cfg, cls);
  });
  std::vector<AnalysisRecord> out;
  for (auto& v : per_image) {
    out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  return out;
}

json ToJson(const AnalysisRecord& r) {
  json j = {{"image_id", r.image_id},
            {"token_idx", r.token_idx},
            {"p1", r.p1},
            {"cluster_size_img", r.cluster_size_img},
            {"jsd_region", r.jsd_region},
            {"jsd_global", r.jsd_global},
            {"jsd_final", r.jsd_final}};
  j["clssim"] = r.clssim ? json(*r.clssim) : json(nullptr);
  j["attn_score"] = r.attn_score ? json(*r.attn_score) : json(nullptr);
  return j;
}

AnalysisRecord AnalysisRecordFromJson(const json& j) {
  AnalysisRecord r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    r.token_idx = j.at("token_idx").get<std::size_t>();
    r.p1 = j.at("p1").get<double>();
    r.cluster_size_img = j.at("cluster_size_img").get<std::size_t>();
    r.jsd_region = j.at("jsd_region").get<double>();
    r.jsd_global = j.at("jsd_global").get<double>();
    r.jsd_final = j.at("jsd_final").get<double>();
    if (j.contains("clssim") && !j.at("clssim").is_null()) r.clssim = j.at("clssim").get<double>();
    if (j.contains("attn_score") && !j.at("attn_score").is_null()) {
      r.attn_score = j.at("attn_score").get<double>();
    }
  } catch (const json::exception& e) {
    throw InvalidInput("analysis record: " + std::string(e.what()));
  }
  return r;
}

void WriteRecords(const std::filesystem::path& path, const std::vector<AnalysisRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const AnalysisRecord& r : records) out << ToJson(r).dump() << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<AnalysisRecord> ReadRecords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<AnalysisRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(AnalysisRecordFromJson(json::parse(line)));
    } catch (const json::exception& e) {
      throw InvalidInput(path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace redcb
