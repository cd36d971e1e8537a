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

#include "fbr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fbr/error.hpp"

namespace fbr {

bool SemanticGraph::has(int c) const {
  return std::binary_search(present.begin(), present.end(), c);
}

SemanticGraph build_graph(std::span<const Prototype> prototypes,
                          std::size_t num_classes) {
  if (prototypes.size() < 2)
    fail(Errc::insufficient_classes,
         "build_graph: need at least two present classes");
  SemanticGraph g;
  g.num_classes = num_classes;
  g.sims.assign(num_classes * num_classes, 0.0);
  for (const auto& p : prototypes) {
    require(p.class_id >= 1 && static_cast<std::size_t>(p.class_id) <= num_classes,
            Errc::argument, "build_graph: class id out of range");
    g.present.push_back(p.class_id);
  }
  std::sort(g.present.begin(), g.present.end());
  require(std::adjacent_find(g.present.begin(), g.present.end()) == g.present.end(),
          Errc::argument, "build_graph: duplicate prototype class");
  for (const auto& a : prototypes)
    for (const auto& b : prototypes) {
      if (a.class_id == b.class_id) continue;
      g.sims[static_cast<std::size_t>(a.class_id - 1) * num_classes +
             static_cast<std::size_t>(b.class_id - 1)] =
          cosine_sim(a.vector.data(), b.vector.data());
    }
  return g;
}

ClassDistribution negative_distribution(const SemanticGraph& graph, int c) {
  require(graph.has(c), Errc::argument,
          "negative_distribution: class " + std::to_string(c) + " not present");
  ClassDistribution d;
  Vec row;
  for (int j : graph.present) {
    if (j == c) continue;
    d.classes.push_back(j);
    row.push_back(graph.at(c, j));
  }
  require(!row.empty(), Errc::insufficient_classes,
          "negative_distribution: no other present class");
  d.probs = softmax(row);
  return d;
}

NegativePool build_negative_pool(std::span<const SeedMap> seeds,
                                 const Tensor& z_fg) {
  require(z_fg.rank() == 4 && z_fg.dim(0) == seeds.size(), Errc::argument,
          "build_negative_pool: expected [B,D,H,W] with one seed map per image");
  const std::size_t D = z_fg.dim(1), H = z_fg.dim(2), W = z_fg.dim(3);
  const auto z = z_fg.data();
  NegativePool pool;
  for (std::size_t b = 0; b < seeds.size(); ++b) {
    require(seeds[b].height == H && seeds[b].width == W, Errc::argument,
            "build_negative_pool: seed map not aligned");
    for (std::size_t p = 0; p < H * W; ++p) {
      const int label = seeds[b].labels[p];
      if (label == seeds[b].background()) continue;
      Vec v(D);
      for (std::size_t d = 0; d < D; ++d) v[d] = z[(b * D + d) * H * W + p];
      if (norm2(v) == 0.0) continue;
      pool.by_class[label].push_back(normalized(v));
      pool.pixels[label].push_back({b, p / W, p % W});
    }
  }
  return pool;
}

std::vector<std::size_t> largest_remainder_quota(std::span<const double> probs,
                                                 std::size_t m) {
  double total = 0.0;
  for (double p : probs) {
    require(p >= 0.0 && std::isfinite(p), Errc::argument,
            "largest_remainder_quota: probabilities must be finite and >= 0");
    total += p;
  }
  require(total > 0.0, Errc::argument,
          "largest_remainder_quota: probabilities must have positive mass");
  std::vector<std::size_t> quota(probs.size());
  std::vector<double> remainder(probs.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double exact = static_cast<double>(m) * probs[i] / total;
    quota[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(quota[i]);
    assigned += quota[i];
  }
  // Rounding can only push the floor sum above m by a hair's worth of ulps.
  while (assigned > m) {
    const auto it = std::max_element(quota.begin(), quota.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t k = 0; assigned < m; k = (k + 1) % order.size()) {
    if (probs[order[k]] == 0.0) continue;
    ++quota[order[k]];
    ++assigned;
  }
  return quota;
}

NegativeSample sample_fg_negatives(const NegativePool& pool,
                                   const ClassDistribution& dist, std::size_t m,
                                   Rng& rng) {
  require(dist.classes.size() == dist.probs.size(), Errc::argument,
          "sample_fg_negatives: malformed distribution");
  Vec mass(dist.probs.size(), 0.0);
  bool any = false;
  for (std::size_t i = 0; i < dist.classes.size(); ++i) {
    const auto it = pool.by_class.find(dist.classes[i]);
    if (it != pool.by_class.end() && !it->second.empty() && dist.probs[i] > 0.0) {
      mass[i] = dist.probs[i];
      any = true;
    }
  }
  if (!any) fail(Errc::empty_pool, "sample_fg_negatives: no negative pixels");

  const auto quota = largest_remainder_quota(mass, m);
  NegativeSample out;
  for (std::size_t i = 0; i < quota.size(); ++i) {
    if (quota[i] == 0) continue;
    const int cls = dist.classes[i];
    const auto& rows = pool.by_class.at(cls);
    const auto pix = pool.pixels.find(cls);
    for (std::size_t k = 0; k < quota[i]; ++k) {
      const std::size_t j = rng.index(rows.size());
      out.keys.push_back(rows[j]);
      out.key_class.push_back(cls);
      if (pix != pool.pixels.end() && j < pix->second.size())
        out.key_pixel.push_back(pix->second[j]);
    }
    out.counts[cls] = quota[i];
  }
  return out;
}

}  // namespace fbr
