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
#include "fbr/nroi.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace fbr;

namespace {

Vec e(std::size_t d, std::size_t i) {
  Vec v(d, 0.0);
  v[i] = 1.0;
  return v;
}

double vnorm(const Vec& v) { return std::sqrt(dot(v, v)); }

std::vector<Vec> two_blobs(Rng& rng, std::size_t per_blob) {
  std::vector<Vec> pts;
  for (int b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < per_blob; ++i) {
      Vec p(3, 0.0);
      p[b] = 1.0;
      for (double& x : p) x += rng.uniform(-0.05, 0.05);
      pts.push_back(normalized(p));
    }
  return pts;
}

}  // namespace

TEST_CASE("kmeans separates two tight blobs") {
  Rng rng(1);
  const auto pts = two_blobs(rng, 6);
  const ClusterResult r = kmeans(pts, 2, rng);
  CHECK(r.centroids.size() == 2);
  for (std::size_t i = 1; i < 6; ++i) CHECK(r.assignments[i] == r.assignments[0]);
  for (std::size_t i = 7; i < 12; ++i) CHECK(r.assignments[i] == r.assignments[6]);
  CHECK(r.assignments[0] != r.assignments[6]);
  std::vector<oracle::Point> opts(pts.begin(), pts.end());
  CHECK(r.inertia == doctest::Approx(oracle::optimal_inertia(opts, 2)).epsilon(1e-9));
  for (std::size_t k = 0; k < 2; ++k) {
    Vec mean(3, 0.0);
    for (std::size_t i = 0; i < 12; ++i)
      if (r.assignments[i] == k)
        for (std::size_t d = 0; d < 3; ++d) mean[d] += pts[i][d];
    const Vec u = normalized(mean);
    for (std::size_t d = 0; d < 3; ++d) CHECK(r.centroids[k][d] == doctest::Approx(u[d]));
  }
}

TEST_CASE("kmeans reduces k to the number of distinct points") {
  Rng rng(2);
  const std::vector<Vec> pts{e(3, 0), e(3, 1), e(3, 0), e(3, 1), e(3, 1)};
  const ClusterResult r = kmeans(pts, 8, rng);
  CHECK(r.centroids.size() == 2);
  CHECK(r.inertia == doctest::Approx(0.0));
}

TEST_CASE("kmeans inertia never increases and centroids are unit") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<Vec> pts;
    for (int i = 0; i < 60; ++i) pts.push_back(testutil::random_unit(5, rng));
    const ClusterResult r = kmeans(pts, 4, rng);
    for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
      CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-12);
    CHECK(r.inertia >= 0.0);
    for (const Vec& c : r.centroids) CHECK(std::abs(vnorm(c) - 1.0) <= 1e-9);
    CHECK(r.assignments.size() == 60);
  }
}

TEST_CASE("best of ten restarts reaches the enumerated optimum on small instances") {
  Rng gen(4);
  int hits = 0;
  const int n = 20;
  for (int t = 0; t < n; ++t) {
    const std::size_t m = 5 + gen.index(6);
    const std::size_t k = 2 + gen.index(2);
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < m; ++i) pts.push_back(testutil::random_unit(3, gen));
    Rng rng(100 + t);
    const ClusterResult r = kmeans_best_of(pts, k, rng, 10);
    std::vector<oracle::Point> opts(pts.begin(), pts.end());
    if (std::abs(r.inertia - oracle::optimal_inertia(opts, static_cast<int>(k))) <= 1e-9) ++hits;
  }
  CHECK(hits >= n - 1);
}

TEST_CASE("extract_nrois clusters only background seed pixels") {
  // D=2, 2x3 map; background pixels hold e1 or e2, foreground pixel holds garbage.
  const Tensor z = Tensor::from({2, 2, 3}, {1, 1, 5, 0, 0, 0,  //
                                            0, 0, 5, 1, 1, 0});
  SeedMap s(2, 3, 2, 3);
  s.at(0, 2) = 1;
  s.at(1, 2) = 3;  // zero row, skipped
  Rng rng(5);
  const ClusterResult r = extract_nrois(z, s, 8, rng);
  CHECK(r.assignments.size() == 4);
  REQUIRE(r.centroids.size() == 2);
  std::set<std::pair<long, long>> cs;
  for (const Vec& c : r.centroids) cs.insert({std::lround(c[0]), std::lround(c[1])});
  CHECK(cs == std::set<std::pair<long, long>>{{1, 0}, {0, 1}});

  SeedMap all_fg(2, 3, 2, 1);
  try {
    extract_nrois(z, all_fg, 8, rng);
    FAIL("expected empty_background");
  } catch (const Error& err) {
    CHECK(err.code() == Errc::empty_background);
  }
}

TEST_CASE("bank is a FIFO of unit vectors") {
  const Vec a = e(2, 0), b = e(2, 1), c = normalized(Vec{1, 1}), d = normalized(Vec{1, -1});
  NroiBank bank(3, 2);
  bank.push(std::vector<Vec>{a, b});
  CHECK(bank.size() == 2);
  CHECK(bank.entries()[0] == a);
  bank.push(std::vector<Vec>{c});
  bank.push(std::vector<Vec>{d});
  REQUIRE(bank.size() == 3);
  CHECK(bank.entries()[0] == b);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(bank.entries()[1][i] == doctest::Approx(c[i]).epsilon(1e-15));
    CHECK(bank.entries()[2][i] == doctest::Approx(d[i]).epsilon(1e-15));
  }

  NroiBank scaled(4, 2);
  scaled.push(std::vector<Vec>{Vec{3.0, 4.0}});
  CHECK(std::abs(vnorm(scaled.entries()[0]) - 1.0) <= 1e-9);
  CHECK_THROWS_AS(scaled.push(std::vector<Vec>{Vec{1, 0, 0}}), Error);
}

TEST_CASE("bank occupancy after repeated pushes") {
  Rng rng(6);
  NroiBank bank(50, 4);
  std::vector<Vec> all;
  for (int step = 0; step < 10; ++step) {
    std::vector<Vec> batch;
    for (int k = 0; k < 8; ++k) batch.push_back(testutil::random_unit(4, rng));
    all.insert(all.end(), batch.begin(), batch.end());
    bank.push(batch);
    CHECK(bank.size() <= 50);
  }
  REQUIRE(bank.size() == 50);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t d = 0; d < 4; ++d)
      CHECK(std::abs(bank.entries()[i][d] - all[30 + i][d]) <= 1e-12);
}

TEST_CASE("bank sampling is uniform and reproducible") {
  NroiBank bank(10, 2);
  try {
    Rng rng(0);
    bank.sample(4, rng);
    FAIL("expected empty_bank");
  } catch (const Error& err) {
    CHECK(err.code() == Errc::empty_bank);
  }
  bank.push(std::vector<Vec>{e(2, 0)});
  Rng r0(1);
  for (const Vec& v : bank.sample(256, r0)) CHECK(v == e(2, 0));

  NroiBank four(10, 2);
  four.push(std::vector<Vec>{e(2, 0), e(2, 1), normalized(Vec{1, 1}), normalized(Vec{1, -1})});
  Rng r1(7), r2(7);
  const auto s1 = four.sample(10000, r1);
  CHECK(s1 == four.sample(10000, r2));
  std::map<std::pair<double, double>, int> freq;
  for (const Vec& v : s1) ++freq[{v[0], v[1]}];
  CHECK(freq.size() == 4);
  const double sigma = std::sqrt(10000 * 0.25 * 0.75);
  for (const auto& [k, n] : freq) CHECK(std::abs(n - 2500.0) <= 3 * sigma);
}
