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

#include <span>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/numerics.hpp"

namespace fbr {

struct PixelRef {
  std::size_t image = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PixelRef&) const = default;
};

struct Prototype {
  int class_id = 0;
  Tensor vector;  // [D], unit norm
  std::size_t support = 0;
  std::vector<PixelRef> pixels;
};

struct QuerySet {
  int class_id = 0;
  Tensor vectors;  // [n, D], unit rows; empty tensor when n == 0
  std::vector<PixelRef> pixel_coords;
  std::size_t size() const { return pixel_coords.size(); }
  bool empty() const { return pixel_coords.empty(); }
};

// Rows z[:, r, c] of a [B, D, H, W] (or [D, H, W]) map, as [n, D].
Tensor gather_pixel_rows(const Tensor& z, std::span<const PixelRef> pixels);

// Top-`top_n` pixels of the class score map (ties to the lower flat index,
// only strictly positive scores), score-weighted mean of their features,
// then l2-normalized. `scores` is [H, W] or [B, H, W]; `z_fg` the matching
// [D, H, W] or [B, D, H, W]. No positive score is a class-absent error.
Prototype compute_prototype(const Tensor& scores, const Tensor& z_fg,
                            int class_id, std::size_t top_n);

// Pixels with seed label `class_id` and score below `beta`; the selection
// masks carry no gradient. Rows are l2-normalized; pixels whose feature row
// is exactly zero are left out.
QuerySet select_queries(std::span<const SeedMap> seeds, const Tensor& scores,
                        const Tensor& z_fg, int class_id, double beta);
QuerySet select_queries(const SeedMap& seeds, const Tensor& scores,
                        const Tensor& z_fg, int class_id, double beta);

}  // namespace fbr
