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

#include "fbr/losses.hpp"

#include <cmath>

#include "fbr/encoder.hpp"
#include "fbr/error.hpp"

namespace fbr {

namespace {

constexpr double kUnitTol = 1e-6;

void check_unit_rows(const Tensor& t, const char* what) {
  if (t.numel() == 0) return;
  const std::size_t d = t.shape().back();
  const auto v = t.data();
  for (std::size_t r = 0; r * d < v.size(); ++r) {
    const double n = norm2(v.subspan(r * d, d));
    require(std::abs(n - 1.0) <= kUnitTol, Errc::contract,
            std::string("pcl: ") + what + " row " + std::to_string(r) +
                " is not unit-norm");
  }
}

Tensor stack_rows(const std::vector<Vec>& rows, std::size_t dim) {
  std::vector<double> flat;
  flat.reserve(rows.size() * dim);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({rows.size(), dim}, std::move(flat));
}

const Prototype* find_prototype(std::span<const Prototype> prototypes, int c) {
  for (const auto& p : prototypes)
    if (p.class_id == c) return &p;
  return nullptr;
}

}  // namespace

void LossConfig::validate() const {
  require(tau_bg > 0.0, Errc::config, "loss.tau_bg must be positive");
  require(tau_fg > 0.0, Errc::config, "loss.tau_fg must be positive");
  require(lambda1 > 0.0, Errc::config, "loss.lambda1 must be positive");
  require(lambda2 > 0.0, Errc::config, "loss.lambda2 must be positive");
  require(alpha_seg > 0.0, Errc::config, "loss.alpha_seg must be positive");
  require(negatives >= 1, Errc::config, "loss.negatives must be >= 1");
}

Tensor pcl(std::span<const PclGroup> groups, double tau) {
  require(tau > 0.0, Errc::argument, "pcl: tau must be positive");
  Tensor total;
  std::size_t count = 0;
  for (const auto& g : groups) {
    if (g.queries.numel() == 0) continue;
    check_unit_rows(g.queries, "query");
    check_unit_rows(g.negatives, "negative");
    check_unit_rows(reshape(g.prototype.detach(), {1, g.prototype.numel()}),
                    "prototype");
    const Tensor term = info_nce_sum(g.queries, g.prototype, g.negatives, tau);
    total = count == 0 ? term : add(total, term);
    count += g.queries.dim(0);
  }
  if (count == 0) return Tensor::scalar(0.0);
  return scale(total, 1.0 / static_cast<double>(count));
}

ContrastTerm fb_loss(std::span<const Prototype> prototypes,
                     std::span<const QuerySet> queries, const NroiBank& bank,
                     const LossConfig& cfg, Rng& rng) {
  ContrastTerm out;
  if (bank.empty()) return out;
  std::vector<PclGroup> groups;
  for (const auto& q : queries) {
    if (q.empty()) continue;
    const Prototype* p = find_prototype(prototypes, q.class_id);
    if (!p) continue;
    const std::size_t dim = q.vectors.dim(1);
    groups.push_back({p->vector, q.vectors,
                      stack_rows(bank.sample(cfg.negatives, rng), dim)});
  }
  if (groups.empty()) return out;
  out.value = pcl(groups, cfg.tau_bg);
  out.skipped = false;
  return out;
}

ContrastTerm if_loss(std::span<const Prototype> prototypes,
                     std::span<const QuerySet> queries,
                     const NegativePool& pool, std::size_t num_classes,
                     const LossConfig& cfg, Rng& rng) {
  ContrastTerm out;
  if (prototypes.size() < 2) return out;
  const SemanticGraph graph = build_graph(prototypes, num_classes);
  std::vector<PclGroup> groups;
  for (const auto& q : queries) {
    if (q.empty() || !graph.has(q.class_id)) continue;
    const Prototype* p = find_prototype(prototypes, q.class_id);
    const ClassDistribution dist = negative_distribution(graph, q.class_id);
    NegativeSample keys;
    try {
      keys = sample_fg_negatives(pool, dist, cfg.negatives, rng);
    } catch (const Error& e) {
      if (e.code() == Errc::empty_pool) continue;
      throw;
    }
    groups.push_back({p->vector, q.vectors, stack_rows(keys.keys, q.vectors.dim(1))});
  }
  if (groups.empty()) return out;
  out.value = pcl(groups, cfg.tau_fg);
  out.skipped = false;
  return out;
}

SegHead SegHead::init(std::size_t dim, Rng& rng) {
  require(dim >= 1, Errc::argument, "SegHead: dimension must be positive");
  return SegHead{init_uniform({1, dim}, dim, rng, 1.0), Tensor::zeros({1}, true)};
}

Tensor seg_logits(const Tensor& z_bg, const SegHead& head) {
  require(z_bg.rank() == 4, Errc::argument, "seg_logits: expected [B,D,H,W]");
  return pointwise_linear(batch_norm(z_bg), head.weight, head.bias);
}

Tensor bg_seg_loss(const Tensor& z_bg, std::span<const double> mask,
                   const SegHead& head) {
  const Tensor logits = seg_logits(z_bg, head);
  require(mask.size() == logits.numel(), Errc::argument,
          "bg_seg_loss: mask size does not match B*H*W");
  return bce_with_logits(logits, mask);
}

LossBreakdown total_loss(const LossParts& parts, const LossConfig& cfg) {
  LossBreakdown b;
  b.cls = parts.cls;
  b.fb = parts.fb;
  b.ifg = parts.ifg;
  b.seg = parts.seg;
  b.total = parts.cls + cfg.lambda1 * parts.fb + cfg.lambda2 * parts.ifg +
            cfg.alpha_seg * parts.seg;
  return b;
}

Tensor total_loss(const Tensor& cls, const Tensor& fb, const Tensor& ifg,
                  const Tensor& seg, const LossConfig& cfg) {
  Tensor t = cls;
  t = add(t, scale(fb, cfg.lambda1));
  t = add(t, scale(ifg, cfg.lambda2));
  t = add(t, scale(seg, cfg.alpha_seg));
  return t;
}

}  // namespace fbr
