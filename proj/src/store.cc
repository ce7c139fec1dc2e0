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

#include "redcb/store.h"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>

#include "redcb/errors.h"

namespace redcb {

namespace fs = std::filesystem;
using nlohmann::json;

OracleCapabilities StoreManifest::capabilities() const {
  OracleCapabilities caps;
  caps.repeat_for_single_input = repeat_for_single_input;
  caps.uses_image_newline = uses_image_newline;
  caps.article_ids = article_ids;
  caps.vocab_size = vocab_size;
  caps.embed_dim = d;
  return caps;
}

std::uint32_t Crc32(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<unsigned char> ReadFileBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileBytes(const fs::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<unsigned char> EncodeFloat32(std::span<const double> values) {
  std::vector<unsigned char> out;
  out.reserve(values.size() * 4);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
  }
  return out;
}

std::vector<double> DecodeFloat32(std::span<const unsigned char> bytes) {
  if (bytes.size() % 4 != 0) throw CorruptStoreError("float32 blob size not a multiple of 4");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

StoreManifest ReadManifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) {
    throw CorruptStoreError("no manifest.json in " + dir.string() + " (incomplete store)");
  }
  json j;
  try {
    std::ifstream in(path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptStoreError("malformed manifest.json: " + std::string(e.what()));
  }
  StoreManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kStoreFormatVersion) {
      throw UnsupportedVersion("store format_version " + std::to_string(m.format_version));
    }
    m.model_id = j.at("model_id").get<std::string>();
    m.d = j.at("d").get<std::size_t>();
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.article_ids = j.at("article_ids").get<std::set<TokenId>>();
    const json& caps = j.at("capabilities");
    m.repeat_for_single_input = caps.at("repeat_for_single_input").get<bool>();
    m.uses_image_newline = caps.at("uses_image_newline").get<bool>();
    for (const json& im : j.at("images")) {
      ImageEntry e;
      e.image_id = im.at("image_id").get<std::string>();
      e.length = im.at("L").get<std::size_t>();
      const auto grid = im.at("grid").get<std::vector<std::size_t>>();
      if (grid.size() != 2 || grid[0] * grid[1] != e.length) {
        throw CorruptStoreError("image " + e.image_id + " grid does not cover L");
      }
      e.grid_rows = grid[0];
      e.grid_cols = grid[1];
      if (im.contains("embeddings_crc32")) {
        e.embeddings_crc32 = im.at("embeddings_crc32").get<std::uint32_t>();
      }
      m.images.push_back(std::move(e));
    }
    if (j.contains("synthetic")) m.synthetic = j.at("synthetic");
  } catch (const json::exception& e) {
    throw CorruptStoreError("manifest.json: " + std::string(e.what()));
  }
  return m;
}

void WriteManifest(const fs::path& dir, const StoreManifest& m) {
  json images = json::array();
  for (const ImageEntry& e : m.images) {
    json im = {{"image_id", e.image_id},
               {"L", e.length},
               {"grid", {e.grid_rows, e.grid_cols}}};
    if (e.embeddings_crc32) im["embeddings_crc32"] = *e.embeddings_crc32;
    images.push_back(std::move(im));
  }
  json j = {{"format_version", m.format_version},
            {"model_id", m.model_id},
            {"d", m.d},
            {"vocab_size", m.vocab_size},
            {"article_ids", m.article_ids},
            {"capabilities",
             {{"repeat_for_single_input", m.repeat_for_single_input},
              {"uses_image_newline", m.uses_image_newline}}},
            {"images", std::move(images)}};
  if (!m.synthetic.is_null()) j["synthetic"] = m.synthetic;
  const std::string text = j.dump(2) + "\n";
  WriteFileBytes(dir / "manifest.json",
                 {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

fs::path EmbeddingsPath(const fs::path& dir, const std::string& image_id) {
  return dir / "images" / image_id / "embeddings.bin";
}

std::uint32_t WriteEmbeddings(const fs::path& dir, const std::string& image_id,
                              const Matrix& tokens) {
  const auto bytes = EncodeFloat32(tokens.data());
  WriteFileBytes(EmbeddingsPath(dir, image_id), bytes);
  return Crc32(bytes);
}

void WritePad(const fs::path& dir, std::span<const double> pad) {
  WriteFileBytes(dir / "pad.bin", EncodeFloat32(pad));
}

Store LoadStore(const fs::path& dir) {
  Store store;
  store.manifest = ReadManifest(dir);
  const std::size_t d = store.manifest.d;

  const fs::path pad_path = dir / "pad.bin";
  if (!fs::exists(pad_path)) throw CorruptStoreError("missing pad.bin in " + dir.string());
  store.pad = DecodeFloat32(ReadFileBytes(pad_path));
  if (store.pad.size() != d) throw CorruptStoreError("pad.bin does not hold d floats");

  for (const ImageEntry& e : store.manifest.images) {
    const fs::path path = EmbeddingsPath(dir, e.image_id);
    if (!fs::exists(path)) throw CorruptStoreError("missing " + path.string());
    const auto bytes = ReadFileBytes(path);
    if (bytes.size() != e.length * d * 4) {
      throw CorruptStoreError(path.string() + " has " + std::to_string(bytes.size()) +
                              " bytes, manifest declares " + std::to_string(e.length * d * 4));
    }
    if (e.embeddings_crc32 && *e.embeddings_crc32 != Crc32(bytes)) {
      throw CorruptStoreError("checksum mismatch in " + path.string());
    }
    ImageTokens im;
    im.image_id = e.image_id;
    im.grid_rows = e.grid_rows;
    im.grid_cols = e.grid_cols;
    try {
      im.tokens = Matrix(e.length, d, DecodeFloat32(bytes));
    } catch (const InvalidInput& err) {
      throw CorruptStoreError(path.string() + ": " + err.what());
    }
    store.images.push_back(std::move(im));
  }
  return store;
}

void WriteLabels(const fs::path& dir,
                 const std::vector<std::pair<std::string, TokenLabels>>& labels) {
  std::string text;
  for (const auto& [id, row] : labels) {
    json names = json::array();
    for (int l : row) names.push_back(l < 0 ? std::string("B") : "O:" + std::to_string(l));
    text += json{{"image_id", id}, {"labels", std::move(names)}}.dump() + "\n";
  }
  WriteFileBytes(dir / "labels.jsonl",
                 {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::vector<std::pair<std::string, TokenLabels>> ReadLabels(const fs::path& dir) {
  std::ifstream in(dir / "labels.jsonl");
  if (!in) throw IoError("cannot open " + (dir / "labels.jsonl").string());
  std::vector<std::pair<std::string, TokenLabels>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TokenLabels row;
      for (const auto& s : j.at("labels")) {
        const auto name = s.get<std::string>();
        if (name == "B") {
          row.push_back(-1);
        } else if (name.rfind("O:", 0) == 0) {
          row.push_back(std::stoi(name.substr(2)));
        } else {
          throw CorruptStoreError("unknown label '" + name + "'");
        }
      }
      out.emplace_back(j.at("image_id").get<std::string>(), std::move(row));
    } catch (const json::exception& e) {
      throw CorruptStoreError("labels.jsonl: " + std::string(e.what()));
    }
  }
  return out;
}

}  // namespace redcb
