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

#include "redcb/synthcorpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "redcb/errors.h"
#include "redcb/random.h"

namespace redcb {

namespace {

struct Rect {
  std::size_t row, col, height, width;
  std::size_t area() const { return height * width; }
  bool Overlaps(const Rect& o) const {
    return row < o.row + o.height && o.row < row + height && col < o.col + o.width &&
           o.col < col + width;
  }
};

constexpr int kPlacementAttempts = 64;

std::optional<Rect> Place(Rng& rng, std::size_t grid, std::size_t h, std::size_t w,
                          const std::vector<Rect>& taken) {
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    Rect r{static_cast<std::size_t>(rng.UniformInt(grid - h + 1)),
           static_cast<std::size_t>(rng.UniformInt(grid - w + 1)), h, w};
    if (std::none_of(taken.begin(), taken.end(), [&](const Rect& t) { return t.Overlaps(r); })) {
      return r;
    }
  }
  return std::nullopt;
}

SynthImage GenerateImage(const SynthConfig& cfg, std::size_t index, const Matrix& classes,
                         const EmbeddingVector& background) {
  SynthImage im;
  char id[32];
  std::snprintf(id, sizeof(id), "img_%05zu", index);
  im.image_id = id;
  im.grid = cfg.grid;
  im.seed = MixSeed(cfg.seed, index);
  Rng rng(im.seed);

  const std::size_t g = cfg.grid;
  const std::size_t max_objects = std::min<std::size_t>(3, cfg.n_classes);
  const std::size_t n_objects = static_cast<std::size_t>(rng.UniformRange(1, max_objects));
  std::vector<int> class_order(cfg.n_classes);
  std::iota(class_order.begin(), class_order.end(), 0);
  for (std::size_t i = class_order.size(); i > 1; --i) {
    std::swap(class_order[i - 1], class_order[rng.UniformInt(i)]);
  }

  std::vector<Rect> rects;
  std::vector<int> rect_class;
  const std::size_t primary_max = std::min<std::size_t>(4, g - 1);
  const auto ph = static_cast<std::size_t>(rng.UniformRange(2, primary_max));
  const auto pw = static_cast<std::size_t>(rng.UniformRange(2, primary_max));
  if (auto r = Place(rng, g, ph, pw, rects)) {
    rects.push_back(*r);
    rect_class.push_back(class_order[0]);
  }
  for (std::size_t k = 1; k < n_objects; ++k) {
    auto h = static_cast<std::size_t>(rng.UniformRange(1, 2));
    auto w = static_cast<std::size_t>(rng.UniformRange(1, 2));
    if (h * w >= ph * pw) continue;
    if (auto r = Place(rng, g, h, w, rects)) {
      rects.push_back(*r);
      rect_class.push_back(class_order[k]);
    }
  }

  im.labels.assign(g * g, -1);
  for (std::size_t k = 0; k < rects.size(); ++k) {
    const Rect& r = rects[k];
    for (std::size_t i = r.row; i < r.row + r.height; ++i) {
      for (std::size_t j = r.col; j < r.col + r.width; ++j) im.labels[i * g + j] = rect_class[k];
    }
  }
  im.majority_class = MajorityClass(im.labels);

  im.tokens = Matrix(g * g, cfg.dim);
  for (std::size_t t = 0; t < g * g; ++t) {
    const int label = im.labels[t];
    const double sigma = label < 0 ? cfg.sigma_bg : cfg.sigma_obj;
    auto base = label < 0 ? std::span<const double>(background)
                          : classes.row(static_cast<std::size_t>(label));
    auto row = im.tokens.row(t);
    for (std::size_t j = 0; j < cfg.dim; ++j) row[j] = base[j] + sigma * rng.Normal();
  }
  return im;
}

}  // namespace

void SynthConfig::Validate() const {
  if (grid < 3) throw InvalidInput("grid must be at least 3");
  if (n_classes < 1 || n_classes + 2 > dim) {
    throw InvalidInput("need 1 <= classes <= d - 2");
  }
  if (n_images < 1) throw InvalidInput("need at least one image");
  if (!(sigma_obj >= 0.0) || !(sigma_bg >= 0.0)) throw InvalidInput("noise must be >= 0");
}

Matrix ClassDirections(std::size_t n_classes, std::size_t dim) {
  Matrix m(n_classes, dim);
  for (std::size_t c = 0; c < n_classes; ++c) m(c, c) = 1.0;
  return m;
}

EmbeddingVector BackgroundDirection(std::size_t dim) {
  EmbeddingVector b(dim, 0.0);
  b[dim - 1] = 1.0;
  return b;
}

EmbeddingVector SyntheticClsEmbedding(std::size_t n_classes, std::size_t dim) {
  EmbeddingVector cls(dim, 0.0);
  const double v = 1.0 / std::sqrt(static_cast<double>(n_classes));
  for (std::size_t c = 0; c < n_classes; ++c) cls[c] = v;
  return cls;
}

std::vector<SynthImage> GenerateCorpus(const SynthConfig& cfg) {
  cfg.Validate();
  const Matrix classes = ClassDirections(cfg.n_classes, cfg.dim);
  const EmbeddingVector background = BackgroundDirection(cfg.dim);
  std::vector<SynthImage> out;
  out.reserve(cfg.n_images);
  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    out.push_back(GenerateImage(cfg, i, classes, background));
  }
  return out;
}

void WriteCorpus(const std::filesystem::path& dir, const SynthConfig& cfg,
                 const std::vector<SynthImage>& images) {
  StoreManifest m;
  m.model_id = "synthetic";
  m.d = cfg.dim;
  m.vocab_size = cfg.n_classes + 1;
  m.synthetic = {{"n_images", cfg.n_images}, {"grid", cfg.grid},
                 {"n_classes", cfg.n_classes}, {"seed", cfg.seed},
                 {"sigma_obj", cfg.sigma_obj}, {"sigma_bg", cfg.sigma_bg}};
  std::vector<std::pair<std::string, TokenLabels>> labels;
  for (const SynthImage& im : images) {
    ImageEntry e;
    e.image_id = im.image_id;
    e.length = im.grid * im.grid;
    e.grid_rows = im.grid;
    e.grid_cols = im.grid;
    e.embeddings_crc32 = WriteEmbeddings(dir, im.image_id, im.tokens);
    m.images.push_back(std::move(e));
    labels.emplace_back(im.image_id, im.labels);
  }
  WritePad(dir, EmbeddingVector(cfg.dim, 0.0));
  WriteLabels(dir, labels);
  WriteManifest(dir, m);
}

std::optional<SynthConfig> SynthConfigFromManifest(const StoreManifest& manifest) {
  if (manifest.synthetic.is_null()) return std::nullopt;
  try {
    SynthConfig cfg;
    const auto& s = manifest.synthetic;
    cfg.n_images = s.at("n_images").get<std::size_t>();
    cfg.grid = s.at("grid").get<std::size_t>();
    cfg.n_classes = s.at("n_classes").get<std::size_t>();
    cfg.seed = s.at("seed").get<std::uint64_t>();
    cfg.sigma_obj = s.at("sigma_obj").get<double>();
    cfg.sigma_bg = s.at("sigma_bg").get<double>();
    cfg.dim = manifest.d;
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptStoreError("manifest synthetic block: " + std::string(e.what()));
  }
}

int MajorityClass(const TokenLabels& labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) {
    if (l >= 0) ++counts[l];
  }
  int best = -1;
  std::size_t best_count = 0;
  for (const auto& [c, n] : counts) {
    if (n > best_count) {
      best = c;
      best_count = n;
    }
  }
  return best;
}

}  // namespace redcb
