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

// Classification scoring, class activation maps and seed derivation.
//
// Class ids are 1-based: foreground classes are 1..C and background is C+1.
// Tensor channel c-1 holds class c.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbr/numerics.hpp"
#include "fbr/rng.hpp"

namespace fbr {

using LabelVector = std::vector<int>;  // binary, one entry per class

struct ClassifierHead {
  Tensor weight;  // theta, [C, L]

  static ClassifierHead init(std::size_t num_classes, std::size_t feature_dim,
                             Rng& rng);
  std::size_t num_classes() const { return weight.dim(0); }
  std::size_t feature_dim() const { return weight.dim(1); }
};

struct TapConfig {
  double alpha = 0.1;     // pooling threshold
  double bg_score = 0.3;  // constant background channel before renormalizing
  double beta = 0.4;      // query certainty threshold

  void validate() const;
};

// Hard per-pixel labels in {1..C, C+1}.
struct SeedMap {
  std::size_t height = 0;
  std::size_t width = 0;
  int num_classes = 0;
  std::vector<int> labels;  // row-major

  SeedMap() = default;
  SeedMap(std::size_t h, std::size_t w, int classes, int fill);

  int background() const { return num_classes + 1; }
  int at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
  int& at(std::size_t r, std::size_t c) { return labels[r * width + c]; }
  std::size_t size() const { return labels.size(); }
  bool operator==(const SeedMap&) const = default;
};

struct CamStack {
  // [B, C+1, H, W]; channel C is background. Per-pixel sums are 1.
  Tensor scores;
  // [B, C, H, W]; rectified, label-masked, max-normalized class maps before
  // the categorical renormalization.
  Tensor activations;
  std::size_t num_classes = 0;

  std::size_t batch() const { return scores.dim(0); }
  std::size_t height() const { return scores.dim(2); }
  std::size_t width() const { return scores.dim(3); }
  int bg_index() const { return static_cast<int>(num_classes) + 1; }
};

// Thresholded average pooling followed by the classifier:
// f [L, H, W] -> [C] or f [B, L, H, W] -> [B, C].
Tensor tap_scores(const Tensor& features, const ClassifierHead& head,
                  double alpha);

// Mean per-class binary cross-entropy of logistic(scores) against labels.
// `labels` is flattened in the same order as `scores`.
Tensor cls_loss(const Tensor& scores, std::span<const double> labels);

// Single image: features [L, H, W] and one label vector.
CamStack make_cam(const Tensor& features, const ClassifierHead& head,
                  const LabelVector& labels, double bg_score);
// Batch: features [B, L, H, W] and one label vector per image.
CamStack make_cam(const Tensor& features, const ClassifierHead& head,
                  std::span<const LabelVector> labels, double bg_score);

// Builds the stack from raw class scores [B, C, H, W]; exposed for tests.
CamStack cam_from_raw(const Tensor& raw, std::span<const LabelVector> labels,
                      double bg_score);

// Bilinear upsampling of the activations (no gradient), then the same
// background/renormalization step. Used to produce image-resolution seeds.
CamStack upsample_cam(const CamStack& cam, std::size_t factor, double bg_score);

// Class channel c (1-based) of the scores as [B, H, W], differentiable.
Tensor class_scores(const CamStack& cam, int class_id);
// Class channel c of the max-normalized activations as [B, H, W],
// differentiable. Prototype weights and query certainty read this map.
Tensor class_activations(const CamStack& cam, int class_id);

// Argmax over C+1 channels; ties go to background, then the lowest class.
SeedMap seed_map(const CamStack& cam, std::size_t image = 0);
std::vector<SeedMap> seed_maps(const CamStack& cam);

// 1 where the summed foreground activation is strictly below `threshold`.
std::vector<std::uint8_t> bg_pseudo_mask(const CamStack& cam,
                                         std::size_t image = 0,
                                         double threshold = 0.05);

// Binary PGM (P5), one byte per pixel holding the label.
void write_seed_pgm(const std::string& path, const SeedMap& seeds);
SeedMap read_seed_pgm(const std::string& path, int num_classes);

}  // namespace fbr
