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

// Per-token redundancy measurements.
//
// For every token of an image this computes
//   p1         top-1 probability when the model sees that token alone,
//   cluster_size_img  size of its DPC-kNN cluster within the image,
//   jsd_region JSD after padding the token inside its 3x3 neighbourhood,
//   jsd_global JSD after padding the whole neighbourhood inside the image,
//   jsd_final  k_region * jsd_region + k_global * jsd_global.

#ifndef REDCB_ANALYSIS_H_
#define REDCB_ANALYSIS_H_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "redcb/oracle.h"
#include "redcb/store.h"

namespace redcb {

// kIdentity "ablates" by re-inserting the original token; every JSD must
// then vanish. Used as a null test of the pipeline.
enum class AblationMode { kPad, kIdentity };

struct AnalysisConfig {
  std::size_t m_top1 = 50;
  std::size_t m_jsd = 20;
  double k_region = 1.0;
  double k_global = 16.0;
  std::size_t k_dpc_image = 16;
  std::size_t neighborhood = 3;
  AblationMode ablation = AblationMode::kPad;

  void Validate() const;
};

struct AnalysisRecord {
  std::string image_id;
  std::size_t token_idx = 0;
  double p1 = 0.0;
  std::size_t cluster_size_img = 0;
  double jsd_region = 0.0;
  double jsd_global = 0.0;
  double jsd_final = 0.0;
  std::optional<double> clssim;
  std::optional<double> attn_score;

  bool operator==(const AnalysisRecord&) const = default;
};

double SingleTokenProbe(const ModelOracle& oracle, std::span<const double> v,
                        std::size_t reference_length, std::size_t m_top1,
                        const RequestKey& key);

// Row-major indices of the side x side window centred on token_idx, clipped
// at the grid border. Throws InvalidInput if the token is outside the grid.
std::vector<std::size_t> NeighborhoodOf(std::size_t token_idx, std::size_t rows,
                                        std::size_t cols, std::size_t side = 3);

double CascadedJsd(double jsd_region, double jsd_global, const AnalysisConfig& cfg);

// JSD between the m-candidate head distributions of two responses; m is
// clipped to the size of the source logits.
double HeadJsd(const SparseLogits& src, const SparseLogits& ablated, std::size_t m);

// Analysis state for one image. Owns the global-ablation memo, so it is not
// shared between threads.
class ImageAnalysis {
 public:
  ImageAnalysis(const ModelOracle& oracle, const ImageTokens& image, const AnalysisConfig& cfg);

  double SingleTokenP1(std::size_t token_idx) const;
  double RegionLeaveOneOut(std::size_t token_idx) const;
  // Memoized per sorted region.
  double GlobalLeaveOneOut(std::span<const std::size_t> region);

  // Every record in token order. cls, when given, fills clssim; attention
  // from the unablated full-image query fills attn_score.
  std::vector<AnalysisRecord> Run(const EmbeddingVector* cls = nullptr);

  const OracleResponse& GlobalSource();

 private:
  VisualInput GridInput(std::span<const std::size_t> indices, std::size_t n_rows,
                        std::size_t n_cols, std::span<const std::size_t> ablate) const;

  const ModelOracle& oracle_;
  const ImageTokens& image_;
  AnalysisConfig cfg_;
  std::optional<OracleResponse> global_src_;
  std::map<std::vector<std::size_t>, double> global_memo_;
};

std::vector<AnalysisRecord> AnalyzeImage(const ModelOracle& oracle, const ImageTokens& image,
                                         const AnalysisConfig& cfg,
                                         const EmbeddingVector* cls = nullptr);

// Images are analysed independently on up to `jobs` threads; the result is
// ordered by (image order, token_idx) regardless of scheduling.
std::vector<AnalysisRecord> AnalyzeCorpus(const ModelOracle& oracle,
                                          const std::vector<ImageTokens>& images,
                                          const AnalysisConfig& cfg,
                                          const EmbeddingVector* cls = nullptr, int jobs = 1);

nlohmann::json ToJson(const AnalysisRecord& r);
AnalysisRecord AnalysisRecordFromJson(const nlohmann::json& j);
void WriteRecords(const std::filesystem::path& path, const std::vector<AnalysisRecord>& records);
std::vector<AnalysisRecord> ReadRecords(const std::filesystem::path& path);

}  // namespace redcb

#endif  // REDCB_ANALYSIS_H_
