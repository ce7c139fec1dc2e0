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

#include "redcb/export.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <unordered_map>

#include "redcb/errors.h"
#include "redcb/replay.h"

namespace redcb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class RecordingOracle : public ModelOracle {
 public:
  explicit RecordingOracle(const ModelOracle& inner) : inner_(inner) {}

  std::string model_id() const override { return inner_.model_id(); }
  const OracleCapabilities& capabilities() const override { return inner_.capabilities(); }
  const EmbeddingVector& pad_embedding() const override { return inner_.pad_embedding(); }

  OracleResponse FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                 const RequestKey& key) const override {
    OracleResponse r = inner_.FirstStepLogits(input, prompt, key);
    std::lock_guard lock(mu_);
    recorded_.try_emplace(key.ToString(), key, r);
    return r;
  }

  const std::map<std::string, std::pair<RequestKey, OracleResponse>>& recorded() const {
    return recorded_;
  }

 private:
  const ModelOracle& inner_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::pair<RequestKey, OracleResponse>> recorded_;
};

SparseLogits Truncate(const SparseLogits& full, std::size_t k,
                      const std::vector<TokenId>& required) {
  SparseLogits out;
  std::set<TokenId> have;
  for (std::size_t pos : TopRanked(full, k)) {
    out.ids.push_back(full.ids[pos]);
    out.logits.push_back(full.logits[pos]);
    have.insert(full.ids[pos]);
  }
  for (TokenId id : required) {
    if (have.contains(id)) continue;
    auto it = std::find(full.ids.begin(), full.ids.end(), id);
    if (it == full.ids.end()) {
      throw MissingCandidateError("cannot satisfy pairing: id " + std::to_string(id) +
                                  " absent from ablated logits");
    }
    out.ids.push_back(id);
    out.logits.push_back(full.logits[static_cast<std::size_t>(it - full.ids.begin())]);
    have.insert(id);
  }
  for (double& v : out.logits) v = static_cast<double>(static_cast<float>(v));
  return out;
}

std::vector<TokenId> TopIds(const SparseLogits& logits, std::size_t m) {
  std::vector<TokenId> ids;
  for (std::size_t pos : TopRanked(logits, m)) ids.push_back(logits.ids[pos]);
  return ids;
}

}  // namespace

void ExportReplayStore(const ModelOracle& oracle, const std::vector<ImageTokens>& images,
                       const AnalysisConfig& cfg, const ExportOptions& options,
                       const fs::path& dir, const json& synthetic, int jobs) {
  if (options.top_k < 50) throw InvalidInput("export needs top_k >= 50");
  if (options.pairing_m == 0) throw InvalidInput("pairing_m must be positive");
  fs::create_directories(dir);
  fs::remove(dir / "manifest.json");

  RecordingOracle recorder(oracle);
  AnalyzeCorpus(recorder, images, cfg, nullptr, jobs);

  const auto& recorded = recorder.recorded();
  std::map<std::string, std::vector<const std::pair<RequestKey, OracleResponse>*>> by_image;
  for (const auto& [k, v] : recorded) by_image[v.first.image_id].push_back(&v);

  StoreManifest manifest;
  const OracleCapabilities& caps = oracle.capabilities();
  manifest.model_id = oracle.model_id();
  manifest.d = caps.embed_dim;
  manifest.vocab_size = caps.vocab_size;
  manifest.article_ids = caps.article_ids;
  manifest.repeat_for_single_input = caps.repeat_for_single_input;
  manifest.uses_image_newline = caps.uses_image_newline;
  manifest.synthetic = synthetic;

  std::string requests;
  for (const ImageTokens& im : images) {
    ImageEntry e;
    e.image_id = im.image_id;
    e.length = im.tokens.rows();
    e.grid_rows = im.grid_rows;
    e.grid_cols = im.grid_cols;
    e.embeddings_crc32 = WriteEmbeddings(dir, im.image_id, im.tokens);
    manifest.images.push_back(std::move(e));

    for (const auto* entry : by_image[im.image_id]) {
      const auto& [key, response] = *entry;
      std::vector<TokenId> required;
      if (key.kind == RequestKind::kRegionAblate || key.kind == RequestKind::kGlobalAblate) {
        auto src = recorded.find(SourceKeyFor(key).ToString());
        if (src == recorded.end()) {
          throw ConsistencyError("ablate query without recorded source: " + key.ToString());
        }
        required = TopIds(src->second.second.logits, options.pairing_m);
      }
      ReplayRecord rec;
      rec.key = key;
      rec.step = response.step;
      rec.article_skipped = response.article_skipped;
      rec.logits = Truncate(response.logits, options.top_k, required);
      requests += ToJson(rec).dump() + "\n";
    }
  }
  WritePad(dir, oracle.pad_embedding());
  WriteFileBytes(dir / "requests.jsonl",
                 {reinterpret_cast<const unsigned char*>(requests.data()), requests.size()});
  WriteManifest(dir, manifest);
}

std::vector<std::string> LintReplayStore(const fs::path& dir, std::size_t pairing_m,
                                         std::size_t min_single_k) {
  std::vector<std::string> problems;
  if (!fs::exists(dir / "manifest.json")) {
    problems.push_back("manifest.json missing: store was not committed");
    return problems;
  }
  std::size_t vocab = 0;
  try {
    vocab = LoadStore(dir).manifest.vocab_size;
  } catch (const Error& e) {
    problems.push_back(e.what());
    return problems;
  }

  std::ifstream in(dir / "requests.jsonl");
  if (!in) {
    problems.push_back("requests.jsonl missing");
    return problems;
  }
  std::unordered_map<std::string, ReplayRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ReplayRecord r = ReplayRecordFromJson(json::parse(line));
      records.insert_or_assign(r.key.ToString(), std::move(r));
    } catch (const std::exception& e) {
      problems.push_back("requests.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (const auto& [k, r] : records) {
    // A vocabulary smaller than K can only ever supply the whole vocabulary.
    if (r.key.kind == RequestKind::kSingle && r.logits.size() < std::min(min_single_k, vocab)) {
      problems.push_back(k + ": single record has K=" + std::to_string(r.logits.size()));
    }
    if (r.key.kind != RequestKind::kRegionAblate && r.key.kind != RequestKind::kGlobalAblate) {
      continue;
    }
    auto src = records.find(SourceKeyFor(r.key).ToString());
    if (src == records.end()) {
      problems.push_back(k + ": no src partner");
      continue;
    }
    const std::set<TokenId> have(r.logits.ids.begin(), r.logits.ids.end());
    for (TokenId id : TopIds(src->second.logits, pairing_m)) {
      if (!have.contains(id)) {
        problems.push_back(k + ": misses src top id " + std::to_string(id));
        break;
      }
    }
  }
  std::sort(problems.begin(), problems.end());
  return problems;
}

}  // namespace redcb
