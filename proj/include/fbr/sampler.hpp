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

// Active negative sampling among foreground classes.
//
// A semantic graph of prototype cosine similarities is turned into a
// per-query-class distribution over the other present classes; negatives are
// then drawn class by class with deterministic largest-remainder quotas.

#pragma once

#include <map>
#include <span>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/numerics.hpp"
#include "fbr/prototypes.hpp"
#include "fbr/rng.hpp"

namespace fbr {

struct SemanticGraph {
  std::size_t num_classes = 0;
  std::vector<int> present;  // ascending class ids
  std::vector<double> sims;  // [C x C] row-major, index (i-1, j-1)

  double at(int i, int j) const {
    return sims[static_cast<std::size_t>(i - 1) * num_classes +
                static_cast<std::size_t>(j - 1)];
  }
  bool has(int c) const;
};

// Pairwise cosine similarity of the prototypes. The diagonal is left at 0
// and never read. Fewer than two prototypes is an insufficient-classes error.
SemanticGraph build_graph(std::span<const Prototype> prototypes,
                          std::size_t num_classes);

struct ClassDistribution {
  std::vector<int> classes;  // present classes other than the query class
  Vec probs;
};

// Softmax of row c over the other present classes.
ClassDistribution negative_distribution(const SemanticGraph& graph, int c);

// Per-class unit feature rows of foreground seed pixels. Background pixels
// never enter; rows that are exactly zero are skipped.
struct NegativePool {
  std::map<int, std::vector<Vec>> by_class;
  std::map<int, std::vector<PixelRef>> pixels;
};

NegativePool build_negative_pool(std::span<const SeedMap> seeds,
                                 const Tensor& z_fg);

// floor(m * p_i) per class, then one extra for the largest remainders (ties
// to the lower index) until the counts sum to m. Probabilities must sum to a
// positive value; they are normalized first.
std::vector<std::size_t> largest_remainder_quota(std::span<const double> probs,
                                                 std::size_t m);

struct NegativeSample {
  std::vector<Vec> keys;
  std::vector<int> key_class;
  std::vector<PixelRef> key_pixel;
  std::map<int, std::size_t> counts;
};

// Quota per class from `dist` (classes without pool pixels have their mass
// spread over the rest), then uniform draws with replacement inside each
// class. An entirely empty pool is an empty-pool error.
NegativeSample sample_fg_negatives(const NegativePool& pool,
                                   const ClassDistribution& dist,
                                   std::size_t m, Rng& rng);

}  // namespace fbr
