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

// Synthetic "images": G x G token grids with planted rectangular objects on
// a uniform background.
//
// Class c points along the basis axis e_c and the background along the last
// axis e_{d-1}, so every class direction is orthogonal to the background.
// Each image holds one primary object with sides in [2, 4] and up to two
// smaller secondary objects of other classes, strictly smaller in area, so
// the primary class is the unique majority class. Rectangles never overlap.

#ifndef REDCB_SYNTHCORPUS_H_
#define REDCB_SYNTHCORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "redcb/numerics.h"
#include "redcb/store.h"

namespace redcb {

struct SynthConfig {
  std::size_t n_images = 100;
  std::size_t grid = 8;
  std::size_t n_classes = 4;
  std::size_t dim = 32;
  std::uint64_t seed = 42;
  double sigma_obj = 0.05;
  double sigma_bg = 0.01;

  // Throws InvalidInput unless grid >= 3, 1 <= n_classes <= dim - 2 and
  // the noise levels are non-negative.
  void Validate() const;
};

struct SynthImage {
  std::string image_id;
  std::size_t grid = 0;
  Matrix tokens;
  TokenLabels labels;  // -1 background, c for class c
  std::uint64_t seed = 0;
  int majority_class = -1;

  ImageTokens ToImageTokens() const { return {image_id, grid, grid, tokens}; }
};

Matrix ClassDirections(std::size_t n_classes, std::size_t dim);
EmbeddingVector BackgroundDirection(std::size_t dim);
// Normalized mean of the class directions; the synthetic [cls] stand-in.
EmbeddingVector SyntheticClsEmbedding(std::size_t n_classes, std::size_t dim);

std::vector<SynthImage> GenerateCorpus(const SynthConfig& config);

// Writes the corpus in the store layout plus labels.jsonl. The pad embedding
// is the zero vector.
void WriteCorpus(const std::filesystem::path& dir, const SynthConfig& config,
                 const std::vector<SynthImage>& images);

// Generator parameters recorded in a synthetic corpus manifest, if any.
std::optional<SynthConfig> SynthConfigFromManifest(const StoreManifest& manifest);

// Planted majority class per image id, derived from labels (largest object,
// ties to the lower class id).
int MajorityClass(const TokenLabels& labels);

}  // namespace redcb

#endif  // REDCB_SYNTHCORPUS_H_
