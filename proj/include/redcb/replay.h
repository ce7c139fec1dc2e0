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

// Replay oracle: serves logits recorded by an exporter instead of running a
// model. Records live in requests.jsonl next to the store manifest, one JSON
// object per query:
//
//   { "image_id", "kind", "target_idx", "region"?, "step", "article_skipped",
//     "candidate_ids": [...], "logits": [...] }
//
// Every *_ablate record must cover the top-20 ids of its *_src partner.

#ifndef REDCB_REPLAY_H_
#define REDCB_REPLAY_H_

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "redcb/oracle.h"
#include "redcb/store.h"

namespace redcb {

struct ReplayRecord {
  RequestKey key;
  int step = 1;
  bool article_skipped = false;
  SparseLogits logits;
};

nlohmann::json ToJson(const ReplayRecord& record);
// Throws CorruptStoreError on missing or ill-typed fields.
ReplayRecord ReplayRecordFromJson(const nlohmann::json& j);

// Key of the src query an ablate query is paired with.
RequestKey SourceKeyFor(const RequestKey& ablate_key);

class ReplayOracle : public ModelOracle {
 public:
  // Loads and verifies the whole store. Throws CorruptStoreError on size,
  // checksum or parse failures.
  explicit ReplayOracle(const std::filesystem::path& dir);

  std::string model_id() const override { return store_.manifest.model_id; }
  const OracleCapabilities& capabilities() const override { return caps_; }
  const EmbeddingVector& pad_embedding() const override { return store_.pad; }

  // Returns the recorded response for `key`; the input is only checked for
  // dimension. Throws MissingRecordError for unrecorded keys.
  OracleResponse FirstStepLogits(const VisualInput& input, PromptKind prompt,
                                 const RequestKey& key) const override;
  OracleResponse Lookup(const RequestKey& key) const;

  const Store& store() const { return store_; }
  std::size_t num_records() const { return records_.size(); }

 private:
  Store store_;
  OracleCapabilities caps_;
  std::unordered_map<std::string, ReplayRecord> records_;
};

}  // namespace redcb

#endif  // REDCB_REPLAY_H_
