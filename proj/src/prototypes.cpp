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

#include "fbr/prototypes.hpp"

#include <algorithm>
#include <numeric>

#include "fbr/error.hpp"

namespace fbr {

namespace {

struct Layout {
  std::size_t batch, channels, height, width;
};

Layout feature_layout(const Tensor& z) {
  if (z.rank() == 3) return {1, z.dim(0), z.dim(1), z.dim(2)};
  require(z.rank() == 4, Errc::argument,
          "expected [D,H,W] or [B,D,H,W] features, got " + shape_str(z.shape()));
  return {z.dim(0), z.dim(1), z.dim(2), z.dim(3)};
}

Layout score_layout(const Tensor& s) {
  if (s.rank() == 2) return {1, 1, s.dim(0), s.dim(1)};
  require(s.rank() == 3, Errc::argument,
          "expected [H,W] or [B,H,W] scores, got " + shape_str(s.shape()));
  return {s.dim(0), 1, s.dim(1), s.dim(2)};
}

void check_aligned(const Layout& s, const Layout& z) {
  require(s.batch == z.batch && s.height == z.height && s.width == z.width,
          Errc::argument, "scores and features are not spatially aligned");
}

}  // namespace

Tensor gather_pixel_rows(const Tensor& z, std::span<const PixelRef> pixels) {
  const Layout L = feature_layout(z);
  std::vector<std::size_t> idx;
  idx.reserve(pixels.size() * L.channels);
  for (const auto& px : pixels) {
    require(px.image < L.batch && px.row < L.height && px.col < L.width,
            Errc::argument, "gather_pixel_rows: pixel out of range");
    for (std::size_t d = 0; d < L.channels; ++d)
      idx.push_back(((px.image * L.channels + d) * L.height + px.row) * L.width +
                    px.col);
  }
  return gather(z, std::move(idx), {pixels.size(), L.channels});
}

Prototype compute_prototype(const Tensor& scores, const Tensor& z_fg,
                            int class_id, std::size_t top_n) {
  require(top_n >= 1, Errc::argument, "compute_prototype: N must be >= 1");
  const Layout S = score_layout(scores);
  const Layout Z = feature_layout(z_fg);
  check_aligned(S, Z);

  const auto s = scores.data();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] > 0.0) order.push_back(i);
  if (order.empty())
    fail(Errc::class_absent,
         "compute_prototype: class " + std::to_string(class_id) +
             " has no positive score");
  const std::size_t n = std::min(top_n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(n),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      return s[a] > s[b] || (s[a] == s[b] && a < b);
                    });
  order.resize(n);

  Prototype proto;
  proto.class_id = class_id;
  proto.support = n;
  const std::size_t P = S.height * S.width;
  for (std::size_t i : order)
    proto.pixels.push_back({i / P, (i % P) / S.width, i % S.width});

  const Tensor weights = gather(scores, order, {n});
  const Tensor rows = gather_pixel_rows(z_fg, proto.pixels);
  const Tensor mean_row = weighted_mean_rows(rows, weights);
  proto.vector = reshape(l2_normalize_rows(reshape(mean_row, {1, Z.channels})),
                         {Z.channels});
  return proto;
}

QuerySet select_queries(std::span<const SeedMap> seeds, const Tensor& scores,
                        const Tensor& z_fg, int class_id, double beta) {
  const Layout S = score_layout(scores);
  const Layout Z = feature_layout(z_fg);
  check_aligned(S, Z);
  require(seeds.size() == S.batch, Errc::argument,
          "select_queries: one seed map per image required");
  QuerySet q;
  q.class_id = class_id;
  const auto s = scores.data();
  const auto z = z_fg.data();
  const std::size_t P = S.height * S.width;
  for (std::size_t b = 0; b < S.batch; ++b) {
    require(seeds[b].height == S.height && seeds[b].width == S.width,
            Errc::argument, "select_queries: seed map not aligned");
    for (std::size_t p = 0; p < P; ++p) {
      if (seeds[b].labels[p] != class_id || !(s[b * P + p] < beta)) continue;
      // A rectified feature can vanish entirely; it has no direction to use.
      double n2 = 0.0;
      for (std::size_t d = 0; d < Z.channels; ++d) {
        const double v = z[(b * Z.channels + d) * P + p];
        n2 += v * v;
      }
      if (n2 > 0.0) q.pixel_coords.push_back({b, p / S.width, p % S.width});
    }
  }
  if (!q.pixel_coords.empty())
    q.vectors = l2_normalize_rows(gather_pixel_rows(z_fg, q.pixel_coords));
  return q;
}

QuerySet select_queries(const SeedMap& seeds, const Tensor& scores,
                        const Tensor& z_fg, int class_id, double beta) {
  return select_queries(std::span<const SeedMap>(&seeds, 1), scores, z_fg,
                        class_id, beta);
}

}  // namespace fbr
