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

#include "redcb/replay.h"

#include <fstream>

#include "redcb/errors.h"

namespace redcb {

using nlohmann::json;

json ToJson(const ReplayRecord& r) {
  json j = {{"image_id", r.key.image_id},
            {"kind", std::string(ToString(r.key.kind))},
            {"target_idx", r.key.target_idx}};
  if (!r.key.region.empty()) j["region"] = r.key.region;
  j["step"] = r.step;
  j["article_skipped"] = r.article_skipped;
  j["candidate_ids"] = r.logits.ids;
  j["logits"] = r.logits.logits;
  return j;
}

ReplayRecord ReplayRecordFromJson(const json& j) {
  ReplayRecord r;
  try {
    r.key.image_id = j.at("image_id").get<std::string>();
    r.key.kind = ParseRequestKind(j.at("kind").get<std::string>());
    r.key.target_idx = j.at("target_idx").get<std::int64_t>();
    if (j.contains("region")) r.key.region = j.at("region").get<std::vector<std::size_t>>();
    r.step = j.at("step").get<int>();
    r.article_skipped = j.at("article_skipped").get<bool>();
    r.logits.ids = j.at("candidate_ids").get<std::vector<TokenId>>();
    r.logits.logits = j.at("logits").get<std::vector<double>>();
    r.logits.Validate();
  } catch (const json::exception& e) {
    throw CorruptStoreError("replay record: " + std::string(e.what()));
  } catch (const InvalidInput& e) {
    throw CorruptStoreError("replay record: " + std::string(e.what()));
  }
  if (r.article_skipped != (r.step == 2) || (r.step != 1 && r.step != 2)) {
    throw CorruptStoreError("replay record step/article_skipped mismatch for " +
                            r.key.ToString());
  }
  return r;
}

RequestKey SourceKeyFor(const RequestKey& key) {
  RequestKey src = key;
  switch (key.kind) {
    case RequestKind::kRegionAblate:
      src.kind = RequestKind::kRegionSrc;
      break;
    case RequestKind::kGlobalAblate:
      src.kind = RequestKind::kGlobalSrc;
      src.region.clear();
      src.target_idx = -1;
      break;
    default:
      throw InvalidInput("request kind " + std::string(ToString(key.kind)) + " has no source");
  }
  return src;
}

ReplayOracle::ReplayOracle(const std::filesystem::path& dir) : store_(LoadStore(dir)) {
  caps_ = store_.manifest.capabilities();
  std::ifstream in(dir / "requests.jsonl");
  if (!in) throw CorruptStoreError("missing requests.jsonl in " + dir.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw CorruptStoreError("requests.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    ReplayRecord r = ReplayRecordFromJson(j);
    std::string key = r.key.ToString();
    records_.insert_or_assign(std::move(key), std::move(r));
  }
}

OracleResponse ReplayOracle::Lookup(const RequestKey& key) const {
  auto it = records_.find(key.ToString());
  if (it == records_.end()) {
    throw MissingRecordError("no replay record for request " + key.ToString());
  }
  OracleResponse out;
  out.logits = it->second.logits;
  out.step = it->second.step;
  out.article_skipped = it->second.article_skipped;
  return out;
}

OracleResponse ReplayOracle::FirstStepLogits(const VisualInput& input, PromptKind /*prompt*/,
                                             const RequestKey& key) const {
  if (input.tokens.rows() > 0 && input.tokens.dim() != caps_.embed_dim) {
    throw ShapeError("replay store has d=" + std::to_string(caps_.embed_dim));
  }
  return Lookup(key);
}

}  // namespace redcb
