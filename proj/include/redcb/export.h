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

// Writes replay stores from a live oracle: the analysis runs once against
// the oracle, every query is recorded, and the responses are stored as
// top-K logits plus whatever ids the pairing guarantee requires.

#ifndef REDCB_EXPORT_H_
#define REDCB_EXPORT_H_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "redcb/analysis.h"
#include "redcb/oracle.h"
#include "redcb/store.h"

namespace redcb {

struct ExportOptions {
  // Logits kept per record; at least 50.
  std::size_t top_k = 50;
  // Every ablate record covers this many top ids of its src partner.
  std::size_t pairing_m = 20;
};

// The manifest is written last and marks the store complete. `synthetic`
// is copied into the manifest when not null.
void ExportReplayStore(const ModelOracle& oracle, const std::vector<ImageTokens>& images,
                       const AnalysisConfig& cfg, const ExportOptions& options,
                       const std::filesystem::path& dir,
                       const nlohmann::json& synthetic = nullptr, int jobs = 1);

// Problems found in a replay store; empty when it is valid. Checks the
// manifest commit marker, blob sizes and checksums, K >= min(min_single_k,
// vocab_size) for single records and the ablate/src pairing guarantee.
std::vector<std::string> LintReplayStore(const std::filesystem::path& dir,
                                         std::size_t pairing_m = 20,
                                         std::size_t min_single_k = 50);

}  // namespace redcb

#endif  // REDCB_EXPORT_H_
