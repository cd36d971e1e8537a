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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fbr/nroi.hpp"
#include "fbr/numerics.hpp"
#include "fbr/prototypes.hpp"
#include "fbr/rng.hpp"
#include "fbr/sampler.hpp"

namespace fbr {

struct LossConfig {
  double tau_bg = 0.5;
  double tau_fg = 0.1;
  double lambda1 = 0.10;
  double lambda2 = 0.01;
  double alpha_seg = 0.01;
  std::size_t negatives = 256;  // keys drawn per query class

  void validate() const;
};

// One class's contribution to the prototype contrast.
struct PclGroup {
  Tensor prototype;  // [D]
  Tensor queries;    // [n, D]
  Tensor negatives;  // [m, D]
};

// Prototype contrast summed over all groups and queries, divided by the total
// query count. Every vector must be unit-norm (1e-6), else a contract error.
// No queries at all gives an exact 0.
Tensor pcl(std::span<const PclGroup> groups, double tau);

struct ContrastTerm {
  Tensor value = Tensor::scalar(0.0);
  bool skipped = true;
};

// Keys are drawn from the bank per query class (stop-gradient), tau = tau_bg.
// Skipped when the bank is empty or no class has queries.
ContrastTerm fb_loss(std::span<const Prototype> prototypes,
                     std::span<const QuerySet> queries, const NroiBank& bank,
                     const LossConfig& cfg, Rng& rng);

// Keys are drawn actively from the foreground pool (stop-gradient),
// tau = tau_fg. Skipped with fewer than two prototypes, no queries or an
// empty pool.
ContrastTerm if_loss(std::span<const Prototype> prototypes,
                     std::span<const QuerySet> queries,
                     const NegativePool& pool, std::size_t num_classes,
                     const LossConfig& cfg, Rng& rng);

// Per-channel affine map of batch-normalized Z_bg to one logit per pixel.
struct SegHead {
  Tensor weight;  // [1, D]
  Tensor bias;    // [1]

  static SegHead init(std::size_t dim, Rng& rng);
};

Tensor seg_logits(const Tensor& z_bg, const SegHead& head);  // [B, 1, H, W]

// Mean BCE of the background predictor on z_bg [B, D, H, W] against the
// pseudo mask (B*H*W entries in {0, 1}).
Tensor bg_seg_loss(const Tensor& z_bg, std::span<const double> mask,
                   const SegHead& head);

struct LossBreakdown {
  double cls = 0.0;
  double fb = 0.0;
  double ifg = 0.0;
  double seg = 0.0;
  double total = 0.0;
};

struct LossParts {
  double cls = 0.0;
  double fb = 0.0;   // 0 when skipped
  double ifg = 0.0;  // 0 when skipped
  double seg = 0.0;
};

// total = cls + lambda1 * fb + lambda2 * ifg + alpha_seg * seg.
LossBreakdown total_loss(const LossParts& parts, const LossConfig& cfg);
Tensor total_loss(const Tensor& cls, const Tensor& fb, const Tensor& ifg,
                  const Tensor& seg, const LossConfig& cfg);

}  // namespace fbr
