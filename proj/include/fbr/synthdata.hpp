// Copyright 2026 The FBR Authors. All Rights Reserved.
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

// Synthetic co-occurrence dataset: foreground shapes (one shape per class)
// drawn over a background texture that correlates with the image's class.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/numerics.hpp"

namespace fbr {

enum class Split { train, val };

const char* split_name(Split s);
Split parse_split(const std::string& s);

enum class ShapeKind { square, disc, triangle, cross };
enum class TextureKind { stripes, checker, gradient, speckle };

struct SynthConfig {
  std::size_t num_classes = 4;
  std::size_t textures = 4;
  std::size_t height = 64;
  std::size_t width = 64;
  // [num_classes][textures], each row sums to 1. Empty means the default
  // diagonal-dominant matrix built from `cooccurrence_strength`.
  std::vector<Vec> cooccurrence;
  double cooccurrence_strength = 0.9;
  std::size_t train_count = 512;
  std::size_t val_count = 128;
  std::uint64_t rng_seed = 0;

  void validate() const;
  // Explicit matrix if given, otherwise the default one.
  std::vector<Vec> cooccurrence_matrix() const;
  // The texture a class is most strongly correlated with.
  std::size_t dominant_texture(int class_id) const;
};

struct Sample {
  std::size_t index = 0;
  Tensor image;            // [3, H, W], values in [0, 1]
  LabelVector label;       // C entries
  SeedMap gt_mask;         // labels in {1..C, C+1}
  std::size_t texture = 0;  // background texture id
};

// Deterministic per (rng_seed, split, index). Placement that cannot satisfy
// the size constraints after bounded retries is a generation error.
Sample generate_sample(const SynthConfig& config, Split split, std::size_t index);
std::vector<Sample> generate(const SynthConfig& config, Split split);

// Images as binary PPM (P6), masks as PGM (P5), labels.csv with
// "index,c1,...,cC".
void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                   const SynthConfig& config, Split split);
void write_ppm(const std::string& path, const Tensor& image);

}  // namespace fbr
