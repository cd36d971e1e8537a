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
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "fbr/cam.hpp"
#include "fbr/error.hpp"
#include "testutil.hpp"

using namespace fbr;
using testutil::random_tensor;

TEST_CASE("tap_scores hand example and batch shape") {
  const ClassifierHead head{Tensor::from({1, 1}, {1.0})};
  const Tensor f = Tensor::from({1, 1, 2}, {0.2, 0.05});
  const Tensor s = tap_scores(f, head, 0.1);
  CHECK(s.shape() == Shape{1});
  CHECK(s.item() == doctest::Approx(0.2));
  Rng rng(1);
  const Tensor fb = random_tensor({3, 4, 2, 2}, rng, 0.0, 1.0);
  const ClassifierHead h2{random_tensor({5, 4}, rng)};
  CHECK(tap_scores(fb, h2, 0.1).shape() == Shape{3, 5});
  CHECK_THROWS_AS(tap_scores(fb, ClassifierHead{random_tensor({5, 3}, rng)}, 0.1), Error);
}

TEST_CASE("cls_loss values and gradient") {
  CHECK(cls_loss(Tensor::zeros({3}), Vec{1, 0, 1}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double l8 = std::log(0.8 / 0.2), l3 = std::log(0.3 / 0.7);
  CHECK(cls_loss(Tensor::from({2}, {l8, l3}), Vec{1, 0}).item() ==
        doctest::Approx(0.2899).epsilon(1e-4));
  CHECK(cls_loss(Tensor::from({2}, {40.0, -40.0}), Vec{1, 0}).item() < 1e-15);
  CHECK_THROWS_AS(cls_loss(Tensor::zeros({2}), Vec{1, 0.5}), Error);
  Rng rng(4);
  Tensor s = random_tensor({2, 3}, rng, -2, 2);
  std::vector<Tensor> in{s};
  const GradReport r = grad_check(
      [](std::span<const Tensor> x) { return cls_loss(x[0], Vec{1, 0, 1, 0, 0, 1}); }, in);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("make_cam normalization examples") {
  const std::vector<LabelVector> one{{1}};
  const CamStack cam = cam_from_raw(Tensor::from({1, 1, 2, 1}, {2.0, 1.0}), one, 0.3);
  CHECK(cam.activations.data()[0] == doctest::Approx(1.0));
  CHECK(cam.activations.data()[1] == doctest::Approx(0.5));
  CHECK(cam.scores.data()[0] == doctest::Approx(1.0 / 1.3));
  CHECK(cam.scores.data()[2] == doctest::Approx(0.3 / 1.3));
  CHECK(cam.scores.data()[1] == doctest::Approx(0.5 / 0.8));
  CHECK(cam.scores.data()[3] == doctest::Approx(0.3 / 0.8));
  CHECK(std::round(cam.scores.data()[0] * 1000) == 769);
  CHECK(std::round(cam.scores.data()[1] * 1000) == 625);

  const CamStack flat = cam_from_raw(Tensor::full({1, 1, 3, 3}, 0.7), one, 0.3);
  for (double v : flat.activations.data()) CHECK(v == 1.0);
}

TEST_CASE("make_cam masks absent classes and requires a present one") {
  Rng rng(2);
  const Tensor raw = random_tensor({1, 3, 4, 4}, rng, -1, 2, false);
  const std::vector<LabelVector> labels{{1, 0, 1}};
  const CamStack cam = cam_from_raw(raw, labels, 0.3);
  for (std::size_t p = 0; p < 16; ++p) {
    CHECK(cam.activations.data()[16 + p] == 0.0);
    CHECK(cam.scores.data()[16 + p] == 0.0);
  }
  const std::vector<LabelVector> none{{0, 0, 0}};
  try {
    cam_from_raw(raw, none, 0.3);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::argument);
  }
}

TEST_CASE("CamStack rows are categorical distributions") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Tensor raw = random_tensor({2, 4, 3, 5}, rng, -1, 1, false);
    std::vector<LabelVector> labels;
    for (int b = 0; b < 2; ++b) {
      LabelVector y(4, 0);
      y[rng.index(4)] = 1;
      for (auto& v : y)
        if (rng.bernoulli(0.4)) v = 1;
      labels.push_back(y);
    }
    const CamStack cam = cam_from_raw(raw, labels, 0.3);
    const std::size_t P = 15;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t p = 0; p < P; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
          const double v = cam.scores.data()[(b * 5 + c) * P + p];
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-6);
      }
  }
}

TEST_CASE("make_cam gradients through normalization") {
  Rng rng(21);
  Tensor f = random_tensor({2, 3, 3, 3}, rng, 0.0, 1.0);
  Tensor w = random_tensor({2, 3}, rng);
  const std::vector<LabelVector> labels{{1, 1}, {0, 1}};
  Tensor coeff = random_tensor({2, 3, 3, 3}, rng, -1, 1, false);
  std::vector<Tensor> in{f, w};
  const GradReport r = grad_check(
      [&](std::span<const Tensor> x) {
        const CamStack cam = make_cam(x[0], ClassifierHead{x[1]}, labels, 0.3);
        return sum(mul(cam.scores, coeff));
      },
      in);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("seed_map argmax with declared tie rules") {
  const std::vector<LabelVector> both{{1, 1}};
  const CamStack cam = cam_from_raw(Tensor::from({1, 2, 1, 2}, {1.0, 0.1, 0.5, 0.1}), both, 0.3);
  SeedMap s = seed_map(cam);
  CHECK(s.at(0, 0) == 1);
  CHECK(s.at(0, 1) == 3);

  CamStack manual;
  manual.num_classes = 2;
  // pixel 0: fg tie with bg -> bg; pixel 1: two classes tie -> class 1
  manual.scores = Tensor::from({1, 3, 1, 2}, {0.4, 0.4, 0.2, 0.4, 0.4, 0.2});
  manual.activations = Tensor::zeros({1, 2, 1, 2});
  s = seed_map(manual);
  CHECK(s.at(0, 0) == 3);
  CHECK(s.at(0, 1) == 1);
}

TEST_CASE("seed_map is invariant under monotone per-pixel rescaling") {
  Rng rng(30);
  const Tensor raw = random_tensor({1, 3, 4, 4}, rng, -1, 1, false);
  const std::vector<LabelVector> labels{{1, 1, 1}};
  const CamStack cam = cam_from_raw(raw, labels, 0.3);
  CamStack scaled = cam;
  std::vector<double> v(cam.scores.data().begin(), cam.scores.data().end());
  for (double& x : v) x = std::exp(3.0 * x) + 2.0;
  scaled.scores = Tensor::from(cam.scores.shape(), v);
  CHECK(seed_map(cam) == seed_map(scaled));
}

TEST_CASE("background pseudo mask uses a strict threshold on summed activations") {
  CamStack cam;
  cam.num_classes = 2;
  cam.activations = Tensor::from({1, 2, 1, 3}, {0.02, 0.03, 0.06, 0.02, 0.02, 0.0});
  cam.scores = Tensor::zeros({1, 3, 1, 3});
  const auto m = bg_pseudo_mask(cam);
  CHECK(m == std::vector<std::uint8_t>{1, 0, 0});
  cam.activations = Tensor::zeros({1, 2, 1, 3});
  CHECK(bg_pseudo_mask(cam) == std::vector<std::uint8_t>{1, 1, 1});
  cam.activations = Tensor::from({1, 2, 1, 1}, {0.6, 0.0});
  cam.scores = Tensor::zeros({1, 3, 1, 1});
  CHECK(bg_pseudo_mask(cam) == std::vector<std::uint8_t>{0});
}

TEST_CASE("upsampled CAM stays categorical and keeps constant maps constant") {
  const std::vector<LabelVector> one{{1, 0}};
  const CamStack flat = cam_from_raw(Tensor::full({1, 2, 2, 2}, 0.5), one, 0.3);
  const CamStack up = upsample_cam(flat, 4, 0.3);
  CHECK(up.height() == 8);
  CHECK(up.width() == 8);
  for (std::size_t p = 0; p < 64; ++p) {
    CHECK(up.activations.data()[p] == doctest::Approx(1.0));
    CHECK(up.scores.data()[p] + up.scores.data()[64 + p] + up.scores.data()[128 + p] ==
          doctest::Approx(1.0));
  }
  CHECK(upsample_cam(flat, 1, 0.3).scores.data()[0] == flat.scores.data()[0]);
}

TEST_CASE("seed maps round-trip through PGM") {
  SeedMap s(3, 4, 4, 5);
  s.at(1, 2) = 3;
  s.at(0, 0) = 1;
  const auto path = (std::filesystem::temp_directory_path() / "fbr_seed_rt.pgm").string();
  write_seed_pgm(path, s);
  CHECK(read_seed_pgm(path, 4) == s);
  std::filesystem::remove(path);
}
