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

#include "redcb/baselines.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "redcb/analysis.h"
#include "redcb/errors.h"
#include "redcb/parallel.h"
#include "redcb/random.h"

namespace redcb {

using nlohmann::json;

std::vector<double> ClsSimScores(const Matrix& tokens, std::span<const double> cls) {
  if (tokens.dim() != cls.size()) throw ShapeError("cls embedding dimension mismatch");
  std::vector<double> out(tokens.rows());
  for (std::size_t i = 0; i < tokens.rows(); ++i) out[i] = Cosine(tokens.row(i), cls);
  return out;
}

std::vector<double> AttentionScores(const AttentionRecord& record,
                                    std::span<const std::size_t> layers) {
  std::vector<double> out;
  for (std::size_t l : layers) {
    if (l >= record.layers()) {
      throw InvalidInput("attention layer " + std::to_string(l) + " outside a " +
                         std::to_string(record.layers()) + "-layer record");
    }
    const auto& heads = record.scores[l];
    if (heads.empty()) continue;
    if (out.empty()) out.assign(heads.front().size(), 0.0);
    std::vector<double> mean(out.size(), 0.0);
    for (const auto& h : heads) {
      if (h.size() != out.size()) throw InvalidInput("ragged attention record");
      for (std::size_t i = 0; i < h.size(); ++i) mean[i] += h[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mean[i] / static_cast<double>(heads.size());
  }
  return out;
}

PruneResult RandomPrune(std::size_t length, std::size_t budget, std::uint64_t seed) {
  if (budget > length) {
    throw InvalidInput("random budget " + std::to_string(budget) + " exceeds L=" +
                       std::to_string(length));
  }
  std::vector<std::size_t> idx(length);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.UniformInt(length - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  PruneResult out;
  out.kept = std::move(idx);
  out.mode = PruneMode::kBudget;
  out.budget = budget;
  return out;
}

namespace {

VisualInput FullInput(const ImageTokens& im, bool newline) {
  VisualInput in;
  in.tokens = im.tokens;
  if (newline) {
    for (std::size_t r = 0; r < im.grid_rows; ++r) in.newline_after.push_back((r + 1) * im.grid_cols - 1);
  }
  in.grid = std::make_pair(im.grid_rows, im.grid_cols);
  return in;
}

// Kept tokens in order; a newline follows the last kept token of each grid
// row, so keeping everything reproduces FullInput exactly.
VisualInput PrunedInput(const ImageTokens& im, std::span<const std::size_t> kept, bool newline) {
  if (kept.size() == im.tokens.rows()) return FullInput(im, newline);
  VisualInput in;
  in.tokens = im.tokens.SelectRows(kept);
  if (newline) {
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const bool row_end =
          k + 1 == kept.size() || kept[k + 1] / im.grid_cols != kept[k] / im.grid_cols;
      if (row_end) in.newline_after.push_back(k);
    }
  }
  return in;
}

struct Evaluation {
  double faithfulness = 0.0;
  double accuracy = 0.0;
};

Evaluation Evaluate(const std::vector<ImageTokens>& images, const ModelOracle& oracle,
                    const std::vector<OracleResponse>& full,
                    const std::vector<std::vector<std::size_t>>& kept,
                    const CompareOptions& opt) {
  const bool newline = oracle.capabilities().uses_image_newline;
  std::vector<double> jsd(images.size(), 0.0);
  std::vector<int> correct(images.size(), -1);
  ParallelFor(images.size(), opt.jobs, [&](std::size_t i) {
    const ImageTokens& im = images[i];
    std::vector<std::size_t> removed;
    for (std::size_t t = 0, k = 0; t < im.tokens.rows(); ++t) {
      if (k < kept[i].size() && kept[i][k] == t) {
        ++k;
      } else {
        removed.push_back(t);
      }
    }
    const RequestKey key{im.image_id, RequestKind::kGlobalAblate, -1, removed};
    const OracleResponse pruned =
        removed.empty() ? full[i]
                        : oracle.FirstStepLogits(PrunedInput(im, kept[i], newline),
                                                 PromptKind::kDescribeImage, key);
    jsd[i] = HeadJsd(full[i].logits, pruned.logits, opt.m_jsd);
    if (i < opt.majority_class.size() && opt.majority_class[i] >= 0) {
      correct[i] = ArgmaxId(pruned.logits) == opt.majority_class[i] ? 1 : 0;
    }
  });
  Evaluation e;
  std::size_t labelled = 0, hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    e.faithfulness += jsd[i];
    if (correct[i] >= 0) {
      ++labelled;
      hits += static_cast<std::size_t>(correct[i]);
    }
  }
  e.faithfulness /= static_cast<double>(std::max<std::size_t>(1, images.size()));
  e.accuracy = labelled ? static_cast<double>(hits) / static_cast<double>(labelled) : 0.0;
  return e;
}

double SampleStd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<StrategyReport> CompareStrategies(const std::vector<ImageTokens>& images,
                                              const ModelOracle& oracle,
                                              const RedundancyCodebook& cb,
                                              const CompareOptions& opt) {
  if (images.empty()) throw InvalidInput("empty corpus");
  const bool newline = oracle.capabilities().uses_image_newline;

  std::vector<OracleResponse> full(images.size());
  ParallelFor(images.size(), opt.jobs, [&](std::size_t i) {
    const RequestKey key{images[i].image_id, RequestKind::kGlobalSrc, -1, {}};
    full[i] = oracle.FirstStepLogits(FullInput(images[i], newline), PromptKind::kDescribeImage, key);
  });

  std::vector<StrategyReport> reports;
  for (const std::string& name : opt.strategies) {
    StrategyReport rep;
    rep.strategy = name;
    rep.budget = opt.budget;
    if (name == kCodebookStrategy) {
      for (const ImageTokens& im : images) {
        rep.kept.push_back(PruneBudget(im.tokens, cb, opt.budget).kept);
        rep.flops_probe += ProbingFlops(im.tokens.rows(), cb.size(), cb.dim());
      }
    } else if (name == kClsSimStrategy) {
      if (!opt.cls) throw InvalidInput("clssim-rank needs a cls embedding");
      for (const ImageTokens& im : images) {
        rep.kept.push_back(KeepHighest(ClsSimScores(im.tokens, *opt.cls), opt.budget));
        rep.flops_probe += ProbingFlops(im.tokens.rows(), 1, im.tokens.dim());
      }
    } else if (name == kAttentionStrategy) {
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (!full[i].attention) {
          throw InvalidInput("attn-rank needs attention records from the oracle");
        }
        std::vector<std::size_t> layers = opt.attention_layers;
        if (layers.empty()) {
          layers.resize(full[i].attention->layers());
          std::iota(layers.begin(), layers.end(), std::size_t{0});
        }
        rep.kept.push_back(KeepHighest(AttentionScores(*full[i].attention, layers), opt.budget));
      }
    } else if (name == kRandomStrategy) {
      if (opt.seeds.empty()) throw InvalidInput("random strategy needs at least one seed");
      std::vector<double> faith, acc;
      std::vector<StrategyReport> per_seed;
      for (std::uint64_t seed : opt.seeds) {
        StrategyReport row;
        row.strategy = name;
        row.row_kind = "seed";
        row.seed = seed;
        row.budget = opt.budget;
        for (std::size_t i = 0; i < images.size(); ++i) {
          const std::size_t l = images[i].tokens.rows();
          row.kept.push_back(RandomPrune(l, std::min(opt.budget, l), MixSeed(seed, i)).kept);
        }
        const Evaluation e = Evaluate(images, oracle, full, row.kept, opt);
        row.faithfulness_jsd = e.faithfulness;
        row.toy_accuracy = e.accuracy;
        faith.push_back(e.faithfulness);
        acc.push_back(e.accuracy);
        per_seed.push_back(std::move(row));
      }
      rep.faithfulness_jsd = std::accumulate(faith.begin(), faith.end(), 0.0) /
                             static_cast<double>(faith.size());
      rep.toy_accuracy =
          std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
      rep.faithfulness_jsd_std = SampleStd(faith);
      rep.toy_accuracy_std = SampleStd(acc);
      reports.push_back(std::move(rep));
      for (auto& row : per_seed) reports.push_back(std::move(row));
      continue;
    } else {
      throw InvalidInput("unknown strategy '" + name + "'");
    }
    const Evaluation e = Evaluate(images, oracle, full, rep.kept, opt);
    rep.faithfulness_jsd = e.faithfulness;
    rep.toy_accuracy = e.accuracy;
    reports.push_back(std::move(rep));
  }
  return reports;
}

json ReportToJson(const std::vector<StrategyReport>& reports,
                  const std::vector<ImageTokens>& images) {
  json rows = json::array();
  for (const StrategyReport& r : reports) {
    json kept = json::object();
    for (std::size_t i = 0; i < r.kept.size() && i < images.size(); ++i) {
      kept[images[i].image_id] = r.kept[i];
    }
    rows.push_back({{"strategy", r.strategy},
                    {"row_kind", r.row_kind},
                    {"seed", r.seed ? json(*r.seed) : json(nullptr)},
                    {"budget", r.budget},
                    {"faithfulness_jsd", r.faithfulness_jsd},
                    {"toy_accuracy", r.toy_accuracy},
                    {"flops_probe", r.flops_probe},
                    {"faithfulness_jsd_std",
                     r.faithfulness_jsd_std ? json(*r.faithfulness_jsd_std) : json(nullptr)},
                    {"toy_accuracy_std",
                     r.toy_accuracy_std ? json(*r.toy_accuracy_std) : json(nullptr)},
                    {"kept", std::move(kept)}});
  }
  return {{"rows", std::move(rows)}};
}

std::string ReportToCsv(const std::vector<StrategyReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << "strategy,row_kind,seed,budget,faithfulness_jsd,toy_accuracy,flops_probe,"
         "faithfulness_jsd_std,toy_accuracy_std\n";
  for (const StrategyReport& r : reports) {
    out << r.strategy << ',' << r.row_kind << ',';
    if (r.seed) out << *r.seed;
    out << ',' << r.budget << ',' << r.faithfulness_jsd << ',' << r.toy_accuracy << ','
        << r.flops_probe << ',';
    if (r.faithfulness_jsd_std) out << *r.faithfulness_jsd_std;
    out << ',';
    if (r.toy_accuracy_std) out << *r.toy_accuracy_std;
    out << '\n';
  }
  return out.str();
}

}  // namespace redcb
