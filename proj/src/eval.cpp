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

#include "fbr/eval.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "fbr/error.hpp"
#include "json.hpp"

namespace fbr {

namespace {

void check_pair(const SeedMap& pred, const SeedMap& gt) {
  require(pred.height == gt.height && pred.width == gt.width &&
              pred.labels.size() == gt.labels.size(),
          Errc::argument, "eval: prediction and ground truth differ in shape");
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : labels_(num_classes + 1) {
  require(num_classes >= 1, Errc::argument, "ConfusionMatrix: need a class");
  counts_.assign(static_cast<std::size_t>(labels_ * labels_), 0);
}

void ConfusionMatrix::add(const SeedMap& pred, const SeedMap& gt,
                          std::span<const std::uint8_t> mask) {
  check_pair(pred, gt);
  require(mask.empty() || mask.size() == gt.size(), Errc::argument,
          "ConfusionMatrix: mask size mismatch");
  for (std::size_t p = 0; p < gt.size(); ++p) {
    if (!mask.empty() && !mask[p]) continue;
    const int a = pred.labels[p], b = gt.labels[p];
    require(a >= 1 && a <= labels_ && b >= 1 && b <= labels_, Errc::argument,
            "ConfusionMatrix: label out of range");
    ++counts_[static_cast<std::size_t>((a - 1) * labels_ + (b - 1))];
  }
}

std::uint64_t ConfusionMatrix::at(int pred, int gt) const {
  return counts_[static_cast<std::size_t>((pred - 1) * labels_ + (gt - 1))];
}

std::map<int, double> ConfusionMatrix::iou() const {
  std::map<int, double> out;
  for (int c = 1; c <= labels_; ++c) {
    std::uint64_t inter = at(c, c), pred_c = 0, gt_c = 0;
    for (int o = 1; o <= labels_; ++o) {
      pred_c += at(c, o);
      gt_c += at(o, c);
    }
    const std::uint64_t uni = pred_c + gt_c - inter;
    if (uni == 0) continue;
    out[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

double ConfusionMatrix::miou() const {
  const auto per = iou();
  if (per.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [c, v] : per) s += v;
  return s / static_cast<double>(per.size());
}

MetricReport miou(const SeedMap& pred, const SeedMap& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt);
  MetricReport r;
  r.per_class_iou = cm.iou();
  r.miou = cm.miou();
  r.images = 1;
  return r;
}

std::vector<std::uint8_t> boundary_mask(const SeedMap& m) {
  const std::size_t H = m.height, W = m.width;
  std::vector<std::uint8_t> out(H * W, 0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const int v = m.at(y, x);
      if ((y > 0 && m.at(y - 1, x) != v) || (y + 1 < H && m.at(y + 1, x) != v) ||
          (x > 0 && m.at(y, x - 1) != v) || (x + 1 < W && m.at(y, x + 1) != v))
        out[y * W + x] = 1;
    }
  return out;
}

std::vector<std::uint8_t> dilate(std::span<const std::uint8_t> mask,
                                 std::size_t height, std::size_t width,
                                 std::size_t radius) {
  require(mask.size() == height * width, Errc::argument, "dilate: size mismatch");
  // Separable: the Chebyshev ball is a square.
  std::vector<std::uint8_t> rows(mask.size(), 0), out(mask.size(), 0);
  const long r = static_cast<long>(radius);
  const long H = static_cast<long>(height), W = static_cast<long>(width);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      if (!mask[static_cast<std::size_t>(y * W + x)]) continue;
      for (long xx = std::max(0L, x - r); xx <= std::min(W - 1, x + r); ++xx)
        rows[static_cast<std::size_t>(y * W + xx)] = 1;
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      if (!rows[static_cast<std::size_t>(y * W + x)]) continue;
      for (long yy = std::max(0L, y - r); yy <= std::min(H - 1, y + r); ++yy)
        out[static_cast<std::size_t>(yy * W + x)] = 1;
    }
  return out;
}

double trimap_miou(const SeedMap& pred, const SeedMap& gt, std::size_t width) {
  check_pair(pred, gt);
  require(width >= 1, Errc::argument, "trimap_miou: width must be >= 1");
  const auto edges = boundary_mask(gt);
  if (std::find(edges.begin(), edges.end(), 1) == edges.end())
    fail(Errc::undefined_band, "trimap_miou: ground truth has no boundary");
  const auto band = dilate(edges, gt.height, gt.width, width);
  ConfusionMatrix cm(gt.num_classes);
  cm.add(pred, gt, band);
  return cm.miou();
}

double boundary_fmeasure_masks(std::span<const std::uint8_t> pred_boundary,
                               std::span<const std::uint8_t> gt_boundary,
                               std::size_t height, std::size_t width,
                               std::size_t tolerance) {
  require(pred_boundary.size() == height * width &&
              gt_boundary.size() == height * width,
          Errc::argument, "boundary_fmeasure: size mismatch");
  std::size_t np = 0, ng = 0;
  for (auto v : pred_boundary) np += v != 0;
  for (auto v : gt_boundary) ng += v != 0;
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const auto near_gt = dilate(gt_boundary, height, width, tolerance);
  const auto near_pred = dilate(pred_boundary, height, width, tolerance);
  std::size_t hit_p = 0, hit_g = 0;
  for (std::size_t i = 0; i < pred_boundary.size(); ++i) {
    if (pred_boundary[i] && near_gt[i]) ++hit_p;
    if (gt_boundary[i] && near_pred[i]) ++hit_g;
  }
  const double precision = static_cast<double>(hit_p) / static_cast<double>(np);
  const double recall = static_cast<double>(hit_g) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double boundary_fmeasure(const SeedMap& pred, const SeedMap& gt,
                         std::size_t width) {
  check_pair(pred, gt);
  return boundary_fmeasure_masks(boundary_mask(pred), boundary_mask(gt),
                                 gt.height, gt.width, width);
}

MetricReport evaluate(std::span<const SeedMap> preds,
                      std::span<const Sample> samples, const SynthConfig& data,
                      std::span<const std::size_t> widths) {
  require(preds.size() == samples.size(), Errc::argument,
          "evaluate: one prediction per sample required");
  const int C = static_cast<int>(data.num_classes);
  std::set<std::size_t> dominant;
  for (int c = 1; c <= C; ++c) dominant.insert(data.dominant_texture(c));

  ConfusionMatrix global(C);
  std::vector<ConfusionMatrix> bands(widths.size(), ConfusionMatrix(C));
  std::vector<double> fsum(widths.size(), 0.0);
  std::vector<bool> band_seen(widths.size(), false);
  std::uint64_t texture_px = 0, texture_fp = 0;

  for (std::size_t i = 0; i < preds.size(); ++i) {
    const SeedMap& gt = samples[i].gt_mask;
    const SeedMap& pred = preds[i];
    global.add(pred, gt);
    const auto gt_edges = boundary_mask(gt);
    const auto pred_edges = boundary_mask(pred);
    const bool has_edges =
        std::find(gt_edges.begin(), gt_edges.end(), 1) != gt_edges.end();
    for (std::size_t w = 0; w < widths.size(); ++w) {
      require(widths[w] >= 1, Errc::argument, "evaluate: widths must be >= 1");
      if (has_edges) {
        bands[w].add(pred, gt, dilate(gt_edges, gt.height, gt.width, widths[w]));
        band_seen[w] = true;
      }
      fsum[w] += boundary_fmeasure_masks(pred_edges, gt_edges, gt.height,
                                         gt.width, widths[w]);
    }
    if (dominant.count(samples[i].texture)) {
      for (std::size_t p = 0; p < gt.size(); ++p) {
        if (gt.labels[p] != gt.background()) continue;
        ++texture_px;
        texture_fp += pred.labels[p] != pred.background();
      }
    }
  }

  MetricReport r;
  r.images = preds.size();
  r.per_class_iou = global.iou();
  r.miou = global.miou();
  for (std::size_t w = 0; w < widths.size(); ++w) {
    if (band_seen[w]) r.trimap[widths[w]] = bands[w].miou();
    if (!preds.empty())
      r.boundary_f[widths[w]] = fsum[w] / static_cast<double>(preds.size());
  }
  if (texture_px > 0)
    r.cooccurrence_fp =
        static_cast<double>(texture_fp) / static_cast<double>(texture_px);
  return r;
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["images"] = report.images;
  j["miou"] = report.miou;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [c, v] : report.per_class_iou) per[std::to_string(c)] = v;
  j["per_class_iou"] = per;
  nlohmann::ordered_json tri = nlohmann::ordered_json::object();
  for (const auto& [w, v] : report.trimap) tri[std::to_string(w)] = v;
  j["trimap"] = tri;
  nlohmann::ordered_json bf = nlohmann::ordered_json::object();
  for (const auto& [w, v] : report.boundary_f) bf[std::to_string(w)] = v;
  j["boundary_f"] = bf;
  if (report.cooccurrence_fp)
    j["cooccurrence_fp"] = *report.cooccurrence_fp;
  else
    j["cooccurrence_fp"] = nullptr;
  return j.dump(2) + "\n";
}

std::string curve_csv(const std::map<std::size_t, double>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "width,value\n";
  for (const auto& [w, v] : curve) os << w << ',' << v << '\n';
  return os.str();
}

}  // namespace fbr
