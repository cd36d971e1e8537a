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


#include <cmath>

#include "doctest.h"
#include "fbr/error.hpp"
#include "fbr/eval.hpp"
#include "oracles.hpp"

using namespace fbr;

namespace {

// C=1: label 1 inside [r0, r0+n) x [c0, c0+n), background 2 elsewhere.
SeedMap square(std::size_t h, std::size_t w, std::size_t r0, std::size_t c0, std::size_t n) {
  SeedMap m(h, w, 1, 2);
  for (std::size_t r = r0; r < r0 + n; ++r)
    for (std::size_t c = c0; c < c0 + n; ++c) m.at(r, c) = 1;
  return m;
}

SeedMap random_map(std::size_t h, std::size_t w, int classes, Rng& rng) {
  SeedMap m(h, w, classes, classes + 1);
  // blocky regions so boundaries are not everywhere
  for (std::size_t r = 0; r < h; r += 2)
    for (std::size_t c = 0; c < w; c += 2) {
      const int l = 1 + static_cast<int>(rng.index(classes + 1));
      for (std::size_t dr = 0; dr < 2 && r + dr < h; ++dr)
        for (std::size_t dc = 0; dc < 2 && c + dc < w; ++dc) m.at(r + dr, c + dc) = l;
    }
  return m;
}

}  // namespace

TEST_CASE("IoU hand examples") {
  const SeedMap gt = square(4, 4, 0, 0, 2);
  const SeedMap pred = square(4, 4, 0, 1, 2);
  const MetricReport r = miou(pred, gt, 1);
  CHECK(r.per_class_iou.at(1) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
  CHECK(r.per_class_iou.at(2) == doctest::Approx(10.0 / 14.0).epsilon(1e-15));
  const MetricReport same = miou(gt, gt, 1);
  CHECK(same.miou == 1.0);
  CHECK(miou(square(4, 4, 0, 0, 2), square(4, 4, 2, 2, 2), 1).per_class_iou.at(1) == 0.0);
  CHECK_THROWS_AS(miou(gt, square(4, 5, 0, 0, 2), 1), Error);
  // classes with empty union do not count
  const MetricReport r3 = miou(square(4, 4, 0, 0, 2), square(4, 4, 0, 0, 2), 3);
  CHECK(r3.per_class_iou.size() == 2);
}

TEST_CASE("IoU matches the oracle, is symmetric and relabel invariant") {
  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const SeedMap a = random_map(9, 7, 3, rng), b = random_map(9, 7, 3, rng);
    const MetricReport ab = miou(a, b, 3), ba = miou(b, a, 3);
    const auto ref = oracle::iou(a.labels, b.labels, std::vector<bool>(63, true), 4);
    CHECK(ab.per_class_iou == ref);
    CHECK(ab.miou == doctest::Approx(oracle::mean_of(ref)).epsilon(1e-15));
    CHECK(ab.per_class_iou == ba.per_class_iou);
    // permute all four labels consistently
    const int perm[] = {0, 3, 1, 4, 2};
    SeedMap pa = a, pb = b;
    for (int& l : pa.labels) l = perm[l];
    for (int& l : pb.labels) l = perm[l];
    CHECK(miou(pa, pb, 3).miou == doctest::Approx(ab.miou).epsilon(1e-15));
    CHECK(trimap_miou(pa, pb, 1) == doctest::Approx(trimap_miou(a, b, 1)).epsilon(1e-15));
    CHECK(boundary_fmeasure(pa, pb, 1) == boundary_fmeasure(a, b, 1));
  }
}

TEST_CASE("trimap on a shifted square agrees with brute-force band enumeration") {
  const SeedMap gt = square(8, 8, 2, 2, 4);
  const SeedMap pred = square(8, 8, 2, 3, 4);
  for (int w : {1, 2, 3}) {
    const auto keep = oracle::band(gt.labels, 8, 8, w);
    const double ref = oracle::mean_of(oracle::iou(pred.labels, gt.labels, keep, 2));
    CHECK(trimap_miou(pred, gt, w) == doctest::Approx(ref).epsilon(1e-15));
  }
  CHECK(trimap_miou(gt, gt, 1) == 1.0);
  CHECK(trimap_miou(pred, gt, 16) == miou(pred, gt, 1).miou);
  CHECK_THROWS_AS(trimap_miou(pred, gt, 0), Error);
  try {
    trimap_miou(pred, SeedMap(8, 8, 1, 2), 2);
    FAIL("expected undefined_band");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::undefined_band);
  }
}

TEST_CASE("trimap at maximal width equals mIoU bitwise") {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const SeedMap a = random_map(11, 9, 3, rng), b = random_map(11, 9, 3, rng);
    CHECK(trimap_miou(a, b, 11) == miou(a, b, 3).miou);
    for (int w : {1, 2}) {
      const auto keep = oracle::band(b.labels, 11, 9, w);
      CHECK(trimap_miou(a, b, w) ==
            doctest::Approx(oracle::mean_of(oracle::iou(a.labels, b.labels, keep, 4)))
                .epsilon(1e-15));
    }
  }
}

TEST_CASE("boundary F-measure examples") {
  const SeedMap gt = square(8, 8, 2, 2, 4);
  CHECK(boundary_fmeasure(gt, gt, 1) == 1.0);
  CHECK(boundary_fmeasure(SeedMap(8, 8, 1, 2), gt, 2) == 0.0);
  CHECK(boundary_fmeasure(SeedMap(8, 8, 1, 2), SeedMap(8, 8, 1, 1), 2) == 1.0);

  // vertical boundary line shifted by one column
  std::vector<std::uint8_t> g(64, 0), p(64, 0);
  for (int r = 0; r < 8; ++r) {
    g[r * 8 + 3] = 1;
    p[r * 8 + 4] = 1;
  }
  CHECK(boundary_fmeasure_masks(p, g, 8, 8, 1) == 1.0);
  CHECK(boundary_fmeasure_masks(p, g, 8, 8, 0) == 0.0);
  CHECK(boundary_fmeasure_masks(g, g, 8, 8, 0) == 1.0);
  CHECK(boundary_fmeasure_masks(std::vector<std::uint8_t>(64, 0), g, 8, 8, 3) == 0.0);

  // half the predicted boundary is off by 3: precision 4/8; the gt pixel in
  // row 4 still touches (3,3), so recall 5/8 and F = 5/9
  std::vector<std::uint8_t> h(64, 0);
  for (int r = 0; r < 8; ++r) h[r * 8 + (r < 4 ? 3 : 6)] = 1;
  CHECK(boundary_fmeasure_masks(h, g, 8, 8, 1) == doctest::Approx(5.0 / 9.0).epsilon(1e-15));
}

TEST_CASE("boundary and dilation helpers") {
  const SeedMap gt = square(6, 6, 2, 2, 2);
  const auto b = boundary_mask(gt);
  int count = 0;
  for (auto v : b) count += v;
  CHECK(count == 4 + 8);  // the 2x2 square and its 4-neighbours
  std::vector<std::uint8_t> one(25, 0);
  one[12] = 1;
  const auto d = dilate(one, 5, 5, 1);
  int n = 0;
  for (auto v : d) n += v;
  CHECK(n == 9);
  CHECK(dilate(one, 5, 5, 0) == one);
}

TEST_CASE("dataset-level report and serialization") {
  SynthConfig cfg;
  cfg.val_count = 6;
  const auto samples = generate(cfg, Split::val);
  std::vector<SeedMap> preds;
  for (const auto& s : samples) preds.push_back(s.gt_mask);
  const std::vector<std::size_t> widths{1, 4};
  const MetricReport r = evaluate(preds, samples, cfg, widths);
  CHECK(r.images == 6);
  CHECK(r.miou == 1.0);
  CHECK(r.trimap.at(1) == 1.0);
  CHECK(r.boundary_f.at(4) == 1.0);
  REQUIRE(r.cooccurrence_fp.has_value());
  CHECK(*r.cooccurrence_fp == 0.0);
  const std::string j = report_json(r);
  CHECK(j.find("\"miou\"") != std::string::npos);
  CHECK(j.find("\"trimap\"") != std::string::npos);
  CHECK(curve_csv(r.trimap) == "width,value\n1,1\n4,1\n");
}
