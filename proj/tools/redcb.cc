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

// redcb: build redundancy codebooks and prune visual tokens with them.
//
// Exit codes: 0 success, 1 usage error, 2 I/O failure, 3 missing replay
// record, 4 empty candidate set, 5 corrupt or inconsistent data.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "redcb/analysis.h"
#include "redcb/analytic_oracle.h"
#include "redcb/baselines.h"
#include "redcb/codebook.h"
#include "redcb/errors.h"
#include "redcb/export.h"
#include "redcb/replay.h"
#include "redcb/store.h"
#include "redcb/synthcorpus.h"
#include "redcb/toy_transformer.h"

namespace fs = std::filesystem;
using namespace redcb;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kMissingRecord = 3, kEmpty = 4, kData = 5 };

std::shared_ptr<spdlog::logger> Log() {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("redcb");
    l->set_pattern("[%l] %v");
    l->set_level(spdlog::level::info);
    if (const char* env = std::getenv("REDCB_LOG")) {
      l->set_level(spdlog::level::from_str(env));
    }
    return l;
  }();
  return logger;
}

struct Common {
  int jobs = 1;
  bool quiet = false;
};

struct OracleFlags {
  std::string selector = "analytic";
  double beta = 5.0;
  std::uint64_t toy_seed = 1234;
  std::size_t classes = 0;
};

struct AnalysisFlags {
  AnalysisConfig cfg;
  bool identity_ablation = false;
};

void AddOracleFlags(CLI::App* cmd, OracleFlags& f) {
  cmd->add_option("--oracle", f.selector, "analytic | toy | replay:<dir>");
  cmd->add_option("--beta", f.beta, "Analytic oracle logit scale");
  cmd->add_option("--toy-seed", f.toy_seed, "Toy transformer weight seed");
  cmd->add_option("--classes", f.classes,
                  "Analytic oracle class count (default: from the corpus manifest)");
}

void AddAnalysisFlags(CLI::App* cmd, AnalysisFlags& f) {
  cmd->add_option("--m-top1", f.cfg.m_top1, "Candidates for the top-1 probability");
  cmd->add_option("--m-jsd", f.cfg.m_jsd, "Head vocabulary size for JSD");
  cmd->add_option("--k-region", f.cfg.k_region, "Weight of the region-level JSD");
  cmd->add_option("--k-global", f.cfg.k_global, "Weight of the global-level JSD");
  cmd->add_option("--k-dpc", f.cfg.k_dpc_image, "kNN size for per-image clustering");
  cmd->add_flag("--identity-ablation", f.identity_ablation,
                "Re-insert the original token instead of the pad embedding");
}

// Owns whichever oracle the selector names.
struct ResolvedOracle {
  std::unique_ptr<ModelOracle> oracle;
  const ReplayOracle* replay = nullptr;
};

ResolvedOracle MakeOracle(const OracleFlags& f, const StoreManifest* corpus) {
  ResolvedOracle out;
  if (f.selector.rfind("replay:", 0) == 0) {
    auto replay = std::make_unique<ReplayOracle>(fs::path(f.selector.substr(7)));
    out.replay = replay.get();
    out.oracle = std::move(replay);
    return out;
  }
  if (!corpus) throw InvalidInput("--oracle " + f.selector + " needs a corpus");
  if (f.selector == "analytic") {
    std::size_t classes = f.classes;
    if (classes == 0) {
      auto synth = SynthConfigFromManifest(*corpus);
      if (!synth) throw InvalidInput("corpus has no synthetic block; pass --classes");
      classes = synth->n_classes;
    }
    out.oracle = std::make_unique<AnalyticOracle>(ClassDirections(classes, corpus->d), f.beta);
    return out;
  }
  if (f.selector == "toy") {
    ToyTransformerConfig cfg;
    cfg.dim = corpus->d;
    cfg.seed = f.toy_seed;
    out.oracle = std::make_unique<ToyTransformerOracle>(cfg);
    return out;
  }
  throw InvalidInput("unknown oracle '" + f.selector + "'");
}

std::optional<EmbeddingVector> ClsFor(const StoreManifest& manifest) {
  if (auto synth = SynthConfigFromManifest(manifest)) {
    return SyntheticClsEmbedding(synth->n_classes, manifest.d);
  }
  return std::nullopt;
}

std::vector<std::uint64_t> ParseSeeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  return seeds;
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void WriteText(const fs::path& path, const std::string& text) {
  WriteFileBytes(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

const ImageTokens* FindImage(const Store& store, const std::string& id) {
  for (const auto& im : store.images) {
    if (im.image_id == id) return &im;
  }
  throw InvalidInput("image '" + id + "' not in corpus");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-token redundancy codebooks: analysis, construction and pruning"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--jobs", common.jobs, "Image-level worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", common.quiet, "Only machine-readable payloads on stdout");

  // synth-gen
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth-gen", "Generate a synthetic corpus");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--images", synth.n_images, "Number of images");
  synth_cmd->add_option("--grid", synth.grid, "Grid side G (L = G*G)");
  synth_cmd->add_option("--classes", synth.n_classes, "Object classes");
  synth_cmd->add_option("--dim", synth.dim, "Embedding dimension");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--sigma-obj", synth.sigma_obj, "Object token noise");
  synth_cmd->add_option("--sigma-bg", synth.sigma_bg, "Background token noise");

  // analyze
  std::string corpus_dir, records_path;
  OracleFlags oracle_flags;
  AnalysisFlags analysis_flags;
  auto* analyze_cmd = app.add_subcommand("analyze", "Per-token redundancy analysis");
  analyze_cmd->add_option("--corpus", corpus_dir, "Corpus directory (default: replay store)");
  analyze_cmd->add_option("--out", records_path, "records.jsonl to write")->required();
  AddOracleFlags(analyze_cmd, oracle_flags);
  AddAnalysisFlags(analyze_cmd, analysis_flags);

  // export
  std::string export_out;
  ExportOptions export_opts;
  auto* export_cmd = app.add_subcommand("export", "Record a live oracle into a replay store");
  export_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  export_cmd->add_option("--out", export_out, "Replay store directory")->required();
  export_cmd->add_option("--top-k", export_opts.top_k, "Logits kept per record (>= 50)");
  AddOracleFlags(export_cmd, oracle_flags);
  AddAnalysisFlags(export_cmd, analysis_flags);

  // lint-replay
  std::string lint_dir;
  auto* lint_cmd = app.add_subcommand("lint-replay", "Validate a replay store");
  lint_cmd->add_option("--store", lint_dir, "Replay store directory")->required();

  // build-codebook
  std::string codebook_path, profile_name = "llava-1.5";
  std::optional<double> tau_prob, tau_jsd;
  std::optional<std::size_t> tau_out, tau_in, k_pool;
  auto* build_cmd = app.add_subcommand("build-codebook", "Build a redundancy codebook");
  build_cmd->add_option("--records", records_path, "records.jsonl")->required();
  build_cmd->add_option("--corpus", corpus_dir, "Corpus holding the embeddings")->required();
  build_cmd->add_option("--out", codebook_path, ".rcb file to write")->required();
  build_cmd->add_option("--profile", profile_name,
                        "llava-1.5 | llava-next | llava-onevision | synthetic");
  build_cmd->add_option("--tau-prob", tau_prob, "Top-1 probability threshold");
  build_cmd->add_option("--tau-out", tau_out, "Per-image cluster size threshold");
  build_cmd->add_option("--tau-jsd", tau_jsd, "Final JSD threshold");
  build_cmd->add_option("--tau-in", tau_in, "Pooled cluster size threshold");
  build_cmd->add_option("--k-pool", k_pool, "kNN size for pooled clustering");

  // prune
  std::optional<double> r_threshold;
  std::optional<std::size_t> budget;
  std::string image_id, prune_out;
  auto* prune_cmd = app.add_subcommand("prune", "Prune tokens with a codebook");
  prune_cmd->add_option("--codebook", codebook_path, ".rcb file")->required();
  prune_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  prune_cmd->add_option("--image", image_id, "Single image id (default: all)");
  auto* r_opt = prune_cmd->add_option("--r-threshold", r_threshold, "Keep scores <= r");
  auto* b_opt = prune_cmd->add_option("--budget", budget, "Keep the R least redundant tokens");
  r_opt->excludes(b_opt);
  prune_cmd->add_option("--out", prune_out, "Write JSON lines here instead of stdout");

  // calibrate
  std::optional<double> target, target_fraction;
  auto* cal_cmd = app.add_subcommand("calibrate", "Find r_threshold for a mean token budget");
  cal_cmd->add_option("--codebook", codebook_path, ".rcb file")->required();
  cal_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  auto* t_opt = cal_cmd->add_option("--target", target, "Mean retained tokens per image");
  auto* f_opt = cal_cmd->add_option("--target-fraction", target_fraction,
                                    "Mean retained fraction of L");
  t_opt->excludes(f_opt);

  // compare
  std::string strategies = "codebook,clssim-rank,attn-rank,random", seeds = "0,1,2", out_dir;
  std::vector<std::size_t> layers;
  std::size_t compare_budget = 0;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare pruning strategies");
  cmp_cmd->add_option("--codebook", codebook_path, ".rcb file")->required();
  cmp_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  cmp_cmd->add_option("--budget", compare_budget, "Tokens kept per image")->required();
  cmp_cmd->add_option("--strategies", strategies, "Comma-separated strategy names");
  cmp_cmd->add_option("--seeds", seeds, "Comma-separated seeds for the random baseline");
  cmp_cmd->add_option("--layers", layers, "Attention layers to sum (default: all)");
  cmp_cmd->add_option("--out-dir", out_dir, "Directory for report.json and report.csv")
      ->required();
  AddOracleFlags(cmp_cmd, oracle_flags);

  // flops
  std::uint64_t fl = 0, fn = 0, fd = 0;
  auto* flops_cmd = app.add_subcommand("flops", "Similarity-matrix cost L*N*(2d-1)");
  flops_cmd->add_option("--l", fl, "Tokens per image")->required();
  flops_cmd->add_option("--n", fn, "Codebook prototypes")->required();
  flops_cmd->add_option("--d", fd, "Embedding dimension")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto log = Log();
  if (common.quiet && log->level() < spdlog::level::warn) log->set_level(spdlog::level::warn);
  analysis_flags.cfg.ablation =
      analysis_flags.identity_ablation ? AblationMode::kIdentity : AblationMode::kPad;

  try {
    if (*synth_cmd) {
      synth.Validate();
      const auto images = GenerateCorpus(synth);
      WriteCorpus(synth_out, synth, images);
      if (!common.quiet) {
        std::cout << "images=" << images.size() << " L=" << synth.grid * synth.grid
                  << " d=" << synth.dim << "\n";
      }
    } else if (*analyze_cmd) {
      if (corpus_dir.empty()) {
        if (oracle_flags.selector.rfind("replay:", 0) != 0) {
          throw InvalidInput("--corpus is required unless the oracle is a replay store");
        }
        corpus_dir = oracle_flags.selector.substr(7);
      }
      const Store corpus = LoadStore(corpus_dir);
      ResolvedOracle oracle = MakeOracle(oracle_flags, &corpus.manifest);
      const auto cls = ClsFor(corpus.manifest);
      log->info("analyzing {} images with {}", corpus.images.size(), oracle.oracle->model_id());
      const auto records = AnalyzeCorpus(*oracle.oracle, corpus.images, analysis_flags.cfg,
                                         cls ? &*cls : nullptr, common.jobs);
      WriteRecords(records_path, records);
      log->info("wrote {} records to {}", records.size(), records_path);
    } else if (*export_cmd) {
      const Store corpus = LoadStore(corpus_dir);
      ResolvedOracle oracle = MakeOracle(oracle_flags, &corpus.manifest);
      ExportReplayStore(*oracle.oracle, corpus.images, analysis_flags.cfg, export_opts,
                        export_out, corpus.manifest.synthetic, common.jobs);
      log->info("exported {} images to {}", corpus.images.size(), export_out);
    } else if (*lint_cmd) {
      const auto problems = LintReplayStore(lint_dir);
      for (const auto& p : problems) std::cout << p << "\n";
      if (!problems.empty()) return kData;
      if (!common.quiet) std::cout << "ok\n";
    } else if (*build_cmd) {
      const ThresholdProfile& profile = FindProfile(profile_name);
      Thresholds th = profile.thresholds;
      if (tau_prob) th.tau_prob = *tau_prob;
      if (tau_out) th.tau_out = *tau_out;
      if (tau_jsd) th.tau_jsd = *tau_jsd;
      if (tau_in) th.tau_in = *tau_in;
      const std::size_t pool = k_pool.value_or(profile.k_pool);
      const Store corpus = LoadStore(corpus_dir);
      const auto records = ReadRecords(records_path);
      const RedundancyCodebook cb = BuildCodebookFromRecords(
          records, corpus.images, th, pool, corpus.manifest.model_id, common.jobs);
      SaveCodebook(cb, codebook_path);
      if (!common.quiet) {
        std::cout << "N=" << cb.size() << " d=" << cb.dim() << " profile=" << profile.name
                  << " tau_prob=" << th.tau_prob << " tau_out=" << th.tau_out
                  << " tau_jsd=" << th.tau_jsd << " tau_in=" << th.tau_in << " k_pool=" << pool
                  << "\n";
      }
    } else if (*prune_cmd) {
      if (!r_threshold && !budget) throw InvalidInput("prune needs --r-threshold or --budget");
      const RedundancyCodebook cb = LoadCodebook(codebook_path);
      const Store corpus = LoadStore(corpus_dir);
      std::vector<const ImageTokens*> targets;
      if (!image_id.empty()) {
        targets.push_back(FindImage(corpus, image_id));
      } else {
        for (const auto& im : corpus.images) targets.push_back(&im);
      }
      std::ostringstream out;
      for (const ImageTokens* im : targets) {
        const PruneResult r = r_threshold ? PruneThreshold(im->tokens, cb, *r_threshold)
                                          : PruneBudget(im->tokens, cb, *budget);
        if (r.kept.empty()) log->warn("image {}: every token pruned", im->image_id);
        out << ToJson(r, im->image_id).dump() << "\n";
      }
      if (prune_out.empty()) {
        std::cout << out.str();
      } else {
        WriteText(prune_out, out.str());
      }
    } else if (*cal_cmd) {
      const RedundancyCodebook cb = LoadCodebook(codebook_path);
      const Store corpus = LoadStore(corpus_dir);
      double goal = 0.0;
      if (target) {
        goal = *target;
      } else if (target_fraction) {
        double mean_l = 0.0;
        for (const auto& im : corpus.images) mean_l += static_cast<double>(im.tokens.rows());
        goal = *target_fraction * mean_l / static_cast<double>(corpus.images.size());
      } else {
        throw InvalidInput("calibrate needs --target or --target-fraction");
      }
      const CalibrationResult cal = CalibrateThreshold(corpus.images, cb, goal);
      if (cal.warning) log->warn("{}", *cal.warning);
      log->info("target mean {:.4f}, achieved {:.4f}", cal.target_mean, cal.achieved_mean);
      std::cout << std::fixed << std::setprecision(4) << cal.r_threshold << "\n";
    } else if (*cmp_cmd) {
      const RedundancyCodebook cb = LoadCodebook(codebook_path);
      const Store corpus = LoadStore(corpus_dir);
      ResolvedOracle oracle = MakeOracle(oracle_flags, &corpus.manifest);
      CompareOptions opt;
      opt.budget = compare_budget;
      opt.strategies = SplitList(strategies);
      opt.seeds = ParseSeeds(seeds);
      opt.attention_layers = layers;
      opt.cls = ClsFor(corpus.manifest);
      opt.jobs = common.jobs;
      if (fs::exists(fs::path(corpus_dir) / "labels.jsonl")) {
        const auto labels = ReadLabels(corpus_dir);
        for (const auto& im : corpus.images) {
          int cls = -1;
          for (const auto& [id, row] : labels) {
            if (id == im.image_id) cls = MajorityClass(row);
          }
          opt.majority_class.push_back(cls);
        }
      }
      const auto reports = CompareStrategies(corpus.images, *oracle.oracle, cb, opt);
      fs::create_directories(out_dir);
      WriteText(fs::path(out_dir) / "report.json",
                ReportToJson(reports, corpus.images).dump(2) + "\n");
      WriteText(fs::path(out_dir) / "report.csv", ReportToCsv(reports));
      if (!common.quiet) std::cout << ReportToCsv(reports);
    } else if (*flops_cmd) {
      std::cout << ProbingFlops(fl, fn, fd) << "\n";
    }
  } catch (const MissingRecordError& e) {
    log->error("{}", e.what());
    return kMissingRecord;
  } catch (const EmptyCandidateSet& e) {
    log->error("{}; relax the thresholds (e.g. raise --tau-prob or --tau-jsd, lower --tau-in)",
               e.what());
    return kEmpty;
  } catch (const InvalidInput& e) {
    log->error("{}", e.what());
    return kUsage;
  } catch (const IoError& e) {
    log->error("{}", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    log->error("{}", e.what());
    return kIo;
  } catch (const Error& e) {
    log->error("{}", e.what());
    return kData;
  }
  return kOk;
}
