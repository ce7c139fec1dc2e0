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

// Ranking baselines and the strategy comparison harness.
//
// "clssim-rank" keeps the tokens most similar to a [cls] embedding and
// "attn-rank" the tokens with the highest text-to-image attention. Both
// are plain rankings; neither reproduces adaptive budgets, token merging or
// in-LLM layer pruning.

#ifndef REDCB_BASELINES_H_
#define REDCB_BASELINES_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "redcb/codebook.h"
#include "redcb/oracle.h"
#include "redcb/store.h"

namespace redcb {

std::vector<double> ClsSimScores(const Matrix& tokens, std::span<const double> cls);

// Mean over heads within each selected layer, summed over the layers.
// Throws InvalidInput for a layer index outside the record.
std::vector<double> AttentionScores(const AttentionRecord& record,
                                    std::span<const std::size_t> layers);

// Uniform sample of R of L indices without replacement, ascending.
PruneResult RandomPrune(std::size_t length, std::size_t budget, std::uint64_t seed);

inline constexpr const char* kCodebookStrategy = "codebook";
inline constexpr const char* kClsSimStrategy = "clssim-rank";
inline constexpr const char* kAttentionStrategy = "attn-rank";
inline constexpr const char* kRandomStrategy = "random";

struct StrategyReport {
  std::string strategy;
  // "aggregate" for the strategy summary, "seed" for one random run.
  std::string row_kind = "aggregate";
  std::optional<std::uint64_t> seed;
  std::size_t budget = 0;
  std::vector<std::vector<std::size_t>> kept;  // per image
  double faithfulness_jsd = 0.0;
  double toy_accuracy = 0.0;
  std::uint64_t flops_probe = 0;
  std::optional<double> faithfulness_jsd_std;
  std::optional<double> toy_accuracy_std;
};

struct CompareOptions {
  std::size_t budget = 0;
  std::vector<std::string> strategies = {kCodebookStrategy, kClsSimStrategy, kAttentionStrategy,
                                         kRandomStrategy};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  // Empty selects every layer.
  std::vector<std::size_t> attention_layers;
  std::size_t m_jsd = 20;
  std::optional<EmbeddingVector> cls;
  // Planted majority class per image (aligned with the images), -1 when
  // unknown. Images without a class are left out of toy_accuracy.
  std::vector<int> majority_class;
  int jobs = 1;
};

// One aggregate row per strategy, plus one row per seed for "random"
// (the random aggregate carries the mean and sample std-dev over seeds).
// faithfulness_jsd is the corpus mean of JSD between the full-image and
// pruned-image head distributions; toy_accuracy is the fraction of labelled
// images whose pruned argmax token id equals the majority class;
// flops_probe is the scoring cost summed over the corpus.
std::vector<StrategyReport> CompareStrategies(const std::vector<ImageTokens>& images,
                                              const ModelOracle& oracle,
                                              const RedundancyCodebook& cb,
                                              const CompareOptions& options);

nlohmann::json ReportToJson(const std::vector<StrategyReport>& reports,
                            const std::vector<ImageTokens>& images);

// Columns: strategy,row_kind,seed,budget,faithfulness_jsd,toy_accuracy,
// flops_probe,faithfulness_jsd_std,toy_accuracy_std
std::string ReportToCsv(const std::vector<StrategyReport>& reports);

}  // namespace redcb

#endif  // REDCB_BASELINES_H_
