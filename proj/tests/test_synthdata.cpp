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
#include <set>

#include "doctest.h"
#include "fbr/error.hpp"
#include "fbr/synthdata.hpp"

using namespace fbr;

TEST_CASE("generation is deterministic per seed and split") {
  SynthConfig cfg;
  cfg.train_count = 8;
  cfg.val_count = 8;
  cfg.rng_seed = 42;
  const auto a = generate(cfg, Split::train);
  const auto b = generate(cfg, Split::train);
  const auto v = generate(cfg, Split::val);
  REQUIRE(a.size() == 8);
  std::set<std::vector<double>> train_images;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::vector<double> ia(a[i].image.data().begin(), a[i].image.data().end());
    const std::vector<double> ib(b[i].image.data().begin(), b[i].image.data().end());
    CHECK(ia == ib);
    CHECK(a[i].gt_mask == b[i].gt_mask);
    CHECK(a[i].label == b[i].label);
    train_images.insert(ia);
  }
  for (const auto& s : v)
    CHECK(train_images.count(std::vector<double>(s.image.data().begin(), s.image.data().end())) == 0);
  cfg.rng_seed = 43;
  const auto c = generate(cfg, Split::train);
  CHECK(c[0].gt_mask != a[0].gt_mask);
}

TEST_CASE("samples satisfy the construction invariants") {
  SynthConfig cfg;
  cfg.train_count = 200;
  for (const Sample& s : generate(cfg, Split::train)) {
    CHECK(s.image.shape() == Shape{3, 64, 64});
    for (double x : s.image.data()) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    std::vector<int> count(cfg.num_classes + 2, 0);
    for (int l : s.gt_mask.labels) {
      REQUIRE(l >= 1);
      REQUIRE(l <= static_cast<int>(cfg.num_classes) + 1);
      ++count[l];
    }
    int present = 0;
    for (std::size_t c = 1; c <= cfg.num_classes; ++c) {
      CHECK(s.label[c - 1] == (count[c] > 0 ? 1 : 0));
      present += s.label[c - 1];
    }
    CHECK(present >= 1);
    CHECK(present <= 2);
    const double fg = 1.0 - static_cast<double>(count[cfg.num_classes + 1]) / (64.0 * 64.0);
    CHECK(fg >= 0.05);
    CHECK(fg <= 0.5);
    CHECK(s.texture < cfg.textures);
  }
}

TEST_CASE("texture follows the co-occurrence row of the image's class") {
  SynthConfig cfg;
  cfg.cooccurrence = {{0.9, 0.1, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  cfg.train_count = 0;
  cfg.val_count = 0;
  // 1000 images holding class 1 alone
  std::size_t n = 0, hits = 0;
  for (std::size_t i = 0; n < 1000; ++i) {
    const Sample s = generate_sample(cfg, Split::train, i);
    if (s.label != LabelVector{1, 0, 0, 0}) continue;
    ++n;
    hits += s.texture == 0;
  }
  const double f = static_cast<double>(hits) / 1000.0;
  CHECK(std::abs(f - 0.9) <= 0.03);
}

TEST_CASE("config validation and default matrix") {
  SynthConfig cfg;
  const auto m = cfg.cooccurrence_matrix();
  REQUIRE(m.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0.0;
    for (double v : m[c]) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m[c][c] == doctest::Approx(0.9));
    CHECK(cfg.dominant_texture(static_cast<int>(c) + 1) == c);
  }
  SynthConfig bad = cfg;
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.cooccurrence = {{0.5, 0.4, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(parse_split("val") == Split::val);
  CHECK_THROWS_AS(parse_split("test"), Error);
}
