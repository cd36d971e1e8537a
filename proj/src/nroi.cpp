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

#include "fbr/nroi.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "fbr/error.hpp"

namespace fbr {

namespace {

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

Vec unit_or_copy(const Vec& v) {
  return norm2(v) > 0.0 ? normalized(v) : v;
}

std::vector<std::size_t> assign(std::span<const Vec> points,
                                const std::vector<Vec>& means) {
  std::vector<std::size_t> a(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < means.size(); ++j) {
      const double d = sq_dist(points[i], means[j]);
      if (d < best) {
        best = d;
        a[i] = j;
      }
    }
  }
  return a;
}

// Recomputes means; an emptied cluster takes over the point that is farthest
// from its own mean among clusters with more than one member.
void update_means(std::span<const Vec> points, std::vector<std::size_t>& a,
                  std::vector<Vec>& means) {
  const std::size_t k = means.size(), dim = points[0].size();
  for (;;) {
    std::vector<std::size_t> counts(k, 0);
    for (auto& m : means) m.assign(dim, 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[a[i]];
      for (std::size_t d = 0; d < dim; ++d) means[a[i]][d] += points[i][d];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (counts[j])
        for (double& v : means[j]) v /= static_cast<double>(counts[j]);

    const auto empty = std::find(counts.begin(), counts.end(), 0);
    if (empty == counts.end()) return;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (counts[a[i]] < 2) continue;
      const double d = sq_dist(points[i], means[a[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == points.size()) return;  // unreachable with k <= distinct points
    a[far] = static_cast<std::size_t>(empty - counts.begin());
  }
}

double inertia_of(std::span<const Vec> points, const std::vector<std::size_t>& a,
                  const std::vector<Vec>& means) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], means[a[i]]);
  return s;
}

// One sweep of single-point moves (Hartigan): a point leaves its cluster
// when the exact change in inertia is negative. Means are kept current.
// Returns whether anything moved.
bool transfer_sweep(std::span<const Vec> points, std::vector<std::size_t>& a,
                    std::vector<Vec>& means) {
  const std::size_t k = means.size(), dim = points[0].size();
  std::vector<double> counts(k, 0.0);
  for (std::size_t j : a) counts[j] += 1.0;
  bool moved = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t from = a[i];
    if (counts[from] < 2.0) continue;
    const double leave = counts[from] / (counts[from] - 1.0) * sq_dist(points[i], means[from]);
    std::size_t to = from;
    double best = leave * (1.0 - 1e-12);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == from) continue;
      const double join = counts[j] / (counts[j] + 1.0) * sq_dist(points[i], means[j]);
      if (join < best) {
        best = join;
        to = j;
      }
    }
    if (to == from) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      means[from][d] += (means[from][d] - points[i][d]) / (counts[from] - 1.0);
      means[to][d] += (points[i][d] - means[to][d]) / (counts[to] + 1.0);
    }
    counts[from] -= 1.0;
    counts[to] += 1.0;
    a[i] = to;
    moved = true;
  }
  return moved;
}

}  // namespace

ClusterResult kmeans(std::span<const Vec> points, std::size_t k, Rng& rng,
                     std::size_t max_iter) {
  require(!points.empty(), Errc::argument, "kmeans: no points");
  require(k >= 1, Errc::argument, "kmeans: k must be >= 1");
  const std::size_t n = points.size(), dim = points[0].size();
  for (const auto& p : points)
    require(p.size() == dim, Errc::argument, "kmeans: ragged point dimensions");

  // Distinct points, in order of first appearance.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return points[x] < points[y];
  });
  std::vector<std::size_t> rep(n);  // representative (first index) per point
  for (std::size_t i = 0; i < n; ++i) {
    const bool dup = i > 0 && points[order[i]] == points[order[i - 1]];
    rep[order[i]] = dup ? rep[order[i - 1]] : order[i];
  }
  std::vector<std::size_t> distinct;
  for (std::size_t i = 0; i < n; ++i)
    if (rep[i] == i) distinct.push_back(i);

  ClusterResult out;
  if (distinct.size() <= k) {
    for (std::size_t j = 0; j < distinct.size(); ++j)
      out.centroids.push_back(unit_or_copy(points[distinct[j]]));
    out.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      out.assignments[i] = static_cast<std::size_t>(
          std::find(distinct.begin(), distinct.end(), rep[i]) - distinct.begin());
    out.inertia = 0.0;
    out.inertia_trace.push_back(0.0);
    return out;
  }

  // k-means++ seeding.
  std::vector<Vec> means;
  means.push_back(points[rng.index(n)]);
  std::vector<double> d2(n);
  while (means.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& m : means) best = std::min(best, sq_dist(points[i], m));
      d2[i] = best;
      total += best;
    }
    const double r = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0.0 && acc > r) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0) --pick;  // guard against rounding at the tail
    means.push_back(points[pick]);
  }

  std::vector<std::size_t> a = assign(points, means);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
    update_means(points, a, means);
    out.inertia_trace.push_back(inertia_of(points, a, means));
    auto next = assign(points, means);
    if (next == a) break;
    a = std::move(next);
  }
  // Lloyd fixpoints can still be improved by moving single points.
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
    if (!transfer_sweep(points, a, means)) break;
    update_means(points, a, means);
    out.inertia_trace.push_back(inertia_of(points, a, means));
  }
  out.assignments = std::move(a);
  out.inertia = out.inertia_trace.back();
  for (const auto& m : means) out.centroids.push_back(unit_or_copy(m));
  return out;
}

ClusterResult kmeans_best_of(std::span<const Vec> points, std::size_t k,
                             Rng& rng, std::size_t restarts) {
  require(restarts >= 1, Errc::argument, "kmeans_best_of: restarts must be >= 1");
  ClusterResult best = kmeans(points, k, rng);
  for (std::size_t r = 1; r < restarts; ++r) {
    ClusterResult c = kmeans(points, k, rng);
    if (c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

ClusterResult extract_nrois(const Tensor& z_bg, const SeedMap& seeds,
                            std::size_t k, Rng& rng, std::size_t restarts) {
  require(z_bg.rank() == 3, Errc::argument,
          "extract_nrois: expected [D,H,W] features");
  const std::size_t D = z_bg.dim(0), H = z_bg.dim(1), W = z_bg.dim(2);
  require(seeds.height == H && seeds.width == W, Errc::argument,
          "extract_nrois: seed map not aligned with features");
  const auto z = z_bg.data();
  std::vector<Vec> points;
  const int bg = seeds.background();
  for (std::size_t p = 0; p < H * W; ++p) {
    if (seeds.labels[p] != bg) continue;
    Vec v(D);
    for (std::size_t d = 0; d < D; ++d) v[d] = z[d * H * W + p];
    if (norm2(v) > 0.0) points.push_back(normalized(v));
  }
  if (points.empty())
    fail(Errc::empty_background, "extract_nrois: no background pixels");
  return restarts > 1 ? kmeans_best_of(points, k, rng, restarts)
                      : kmeans(points, k, rng);
}

NroiBank::NroiBank(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim) {
  require(capacity >= 1, Errc::argument, "NroiBank: capacity must be >= 1");
}

void NroiBank::push(std::span<const Vec> centroids) {
  for (const auto& c : centroids) {
    if (dim_ == 0) dim_ = c.size();
    require(c.size() == dim_, Errc::argument,
            "NroiBank::push: expected dimension " + std::to_string(dim_) +
                ", got " + std::to_string(c.size()));
    queue_.push_back(normalized(c));
    if (queue_.size() > capacity_) queue_.pop_front();
  }
}

std::vector<Vec> NroiBank::sample(std::size_t m, Rng& rng) const {
  if (queue_.empty()) fail(Errc::empty_bank, "NroiBank::sample: bank is empty");
  std::vector<Vec> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(queue_[rng.index(queue_.size())]);
  return out;
}

void NroiBank::write_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(Errc::io, "cannot write " + path);
  os.precision(17);
  for (const auto& v : queue_) {
    for (std::size_t d = 0; d < v.size(); ++d) os << (d ? "," : "") << v[d];
    os << '\n';
  }
  if (!os) fail(Errc::io, "failed writing " + path);
}

}  // namespace fbr
