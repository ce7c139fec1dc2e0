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

// Directory layout shared by synthetic corpora and replay stores:
//
//   manifest.json                  written last; its presence commits the store
//   pad.bin                        d float32
//   images/<image_id>/embeddings.bin   L x d float32, row-major
//   labels.jsonl                   synthetic corpora only
//   requests.jsonl                 replay stores only
//
// All binary data is little-endian.

#ifndef REDCB_STORE_H_
#define REDCB_STORE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "redcb/numerics.h"
#include "redcb/oracle.h"

namespace redcb {

inline constexpr int kStoreFormatVersion = 1;

struct ImageEntry {
  std::string image_id;
  std::size_t length = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  // CRC32 of embeddings.bin; optional because external exporters may omit it.
  std::optional<std::uint32_t> embeddings_crc32;
};

struct StoreManifest {
  int format_version = kStoreFormatVersion;
  std::string model_id;
  std::size_t d = 0;
  std::size_t vocab_size = 0;
  std::set<TokenId> article_ids;
  bool repeat_for_single_input = false;
  bool uses_image_newline = false;
  std::vector<ImageEntry> images;
  // Generator parameters for synthetic corpora; null otherwise.
  nlohmann::json synthetic;

  OracleCapabilities capabilities() const;
};

// One image of a corpus or store: its tokens in spatial order and its grid.
struct ImageTokens {
  std::string image_id;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  Matrix tokens;
};

struct Store {
  StoreManifest manifest;
  std::vector<ImageTokens> images;
  EmbeddingVector pad;
};

std::uint32_t Crc32(std::span<const unsigned char> bytes);

std::vector<unsigned char> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::span<const unsigned char> bytes);

std::vector<unsigned char> EncodeFloat32(std::span<const double> values);
// Throws CorruptStoreError when the byte count is not a multiple of 4.
std::vector<double> DecodeFloat32(std::span<const unsigned char> bytes);

// Throws CorruptStoreError when the manifest is absent or malformed and
// UnsupportedVersion when format_version != 1.
StoreManifest ReadManifest(const std::filesystem::path& dir);
void WriteManifest(const std::filesystem::path& dir, const StoreManifest& manifest);

std::filesystem::path EmbeddingsPath(const std::filesystem::path& dir,
                                     const std::string& image_id);

// Writes embeddings.bin and returns its CRC32.
std::uint32_t WriteEmbeddings(const std::filesystem::path& dir, const std::string& image_id,
                              const Matrix& tokens);
void WritePad(const std::filesystem::path& dir, std::span<const double> pad);

// Loads manifest, pad and every image's embeddings, verifying blob sizes and
// recorded checksums.
Store LoadStore(const std::filesystem::path& dir);

// Token labels: -1 for background, c >= 0 for an object of class c.
using TokenLabels = std::vector<int>;

void WriteLabels(const std::filesystem::path& dir,
                 const std::vector<std::pair<std::string, TokenLabels>>& labels);
std::vector<std::pair<std::string, TokenLabels>> ReadLabels(const std::filesystem::path& dir);

}  // namespace redcb

#endif  // REDCB_STORE_H_
