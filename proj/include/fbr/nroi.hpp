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

// Background semantic discovery: per-image K-means over background features
// and the FIFO bank the resulting centroids (NROIs) are queued in.

#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/numerics.hpp"
#include "fbr/rng.hpp"

namespace fbr {

struct ClusterResult {
  std::vector<std::size_t> assignments;  // one per input point
  std::vector<Vec> centroids;            // unit vectors
  double inertia = 0.0;                  // sum of squared distances to means
  std::vector<double> inertia_trace;     // after every Lloyd update
};

// Lloyd's algorithm with k-means++ seeding on the given points, followed by
// single-point transfer sweeps until no move lowers the inertia. k is reduced
// to the number of distinct points when there are fewer. Each phase stops at
// its fixpoint or after `max_iter` iterations.
ClusterResult kmeans(std::span<const Vec> points, std::size_t k, Rng& rng,
                     std::size_t max_iter = 50);

// Lowest-inertia result over `restarts` seeded runs.
ClusterResult kmeans_best_of(std::span<const Vec> points, std::size_t k,
                             Rng& rng, std::size_t restarts);

// Background pixel rows of z_bg [D, H, W] (seed label C+1, zero rows
// skipped), l2-normalized, clustered into at most k groups. No background
// pixel is an empty-background error. With restarts > 1 the lowest-inertia
// run is kept.
ClusterResult extract_nrois(const Tensor& z_bg, const SeedMap& seeds,
                            std::size_t k, Rng& rng, std::size_t restarts = 1);

class NroiBank {
 public:
  explicit NroiBank(std::size_t capacity = 50000, std::size_t dim = 0);

  // Appends in order, evicting the oldest entries past capacity. Entries are
  // stored l2-normalized. A dimension mismatch is an argument error.
  void push(std::span<const Vec> centroids);
  // m uniform draws with replacement. Empty bank is an empty-bank error.
  std::vector<Vec> sample(std::size_t m, Rng& rng) const;

  std::size_t size() const { return queue_.size(); }
  bool empty() const { return queue_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  const std::deque<Vec>& entries() const { return queue_; }
  void clear() { queue_.clear(); }

  // One row per entry, `dim` comma-separated columns.
  void write_csv(const std::string& path) const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<Vec> queue_;
};

}  // namespace fbr
