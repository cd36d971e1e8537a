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

#include "fbr/cam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fbr/encoder.hpp"
#include "fbr/error.hpp"

namespace fbr {

namespace {

// Maps below this are treated as empty rather than blown up to 1.
constexpr double kMinPeak = 1e-12;

Tensor as_batch(const Tensor& x) {
  if (x.rank() == 4) return x;
  require(x.rank() == 3, Errc::argument,
          "expected [C,H,W] or [B,C,H,W], got " + shape_str(x.shape()));
  return reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
}

// Rectify, mask absent classes and max-normalize each (image, class) map.
Tensor normalized_activations(const Tensor& raw,
                              std::span<const LabelVector> labels) {
  const std::size_t B = raw.dim(0), C = raw.dim(1), P = raw.dim(2) * raw.dim(3);
  require(labels.size() == B, Errc::argument,
          "make_cam: one label vector per image required");
  auto peaks = std::make_shared<std::vector<double>>(B * C, 0.0);
  auto argmax = std::make_shared<std::vector<std::size_t>>(B * C, 0);
  std::vector<double> out(B * C * P, 0.0);
  const auto r = raw.data();
  for (std::size_t b = 0; b < B; ++b) {
    require(labels[b].size() == C, Errc::argument,
            "make_cam: label vector length must equal class count");
    for (std::size_t c = 0; c < C; ++c) {
      if (!labels[b][c]) continue;
      const std::size_t base = (b * C + c) * P;
      double peak = 0.0;
      std::size_t at = 0;
      for (std::size_t p = 0; p < P; ++p)
        if (r[base + p] > peak) {
          peak = r[base + p];
          at = p;
        }
      if (peak <= kMinPeak) continue;
      (*peaks)[b * C + c] = peak;
      (*argmax)[b * C + c] = at;
      for (std::size_t p = 0; p < P; ++p)
        out[base + p] = r[base + p] > 0.0 ? r[base + p] / peak : 0.0;
    }
  }
  auto out_saved = std::make_shared<std::vector<double>>(out);
  return make_op_result(
      raw.shape(), std::move(out), {raw},
      [B, C, P, peaks, argmax, out_saved](std::span<const double> g,
                                          std::span<Tensor> in) {
        const auto r = in[0].data();
        auto gr = grad_buffer(in[0]);
        for (std::size_t bc = 0; bc < B * C; ++bc) {
          const double peak = (*peaks)[bc];
          if (peak <= 0.0) continue;
          const std::size_t base = bc * P;
          double ga = 0.0;
          for (std::size_t p = 0; p < P; ++p) {
            if (r[base + p] > 0.0) gr[base + p] += g[base + p] / peak;
            ga += g[base + p] * (*out_saved)[base + p];
          }
          gr[base + (*argmax)[bc]] -= ga / peak;
        }
      });
}

// Appends the constant background channel and renormalizes per pixel.
Tensor categorical_scores(const Tensor& act, double bg_score) {
  const std::size_t B = act.dim(0), C = act.dim(1), H = act.dim(2),
                    W = act.dim(3), P = H * W;
  std::vector<double> out(B * (C + 1) * P);
  const auto a = act.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p) {
      double z = bg_score;
      for (std::size_t c = 0; c < C; ++c) z += a[(b * C + c) * P + p];
      for (std::size_t c = 0; c < C; ++c)
        out[(b * (C + 1) + c) * P + p] = a[(b * C + c) * P + p] / z;
      out[(b * (C + 1) + C) * P + p] = bg_score / z;
    }
  auto out_saved = std::make_shared<std::vector<double>>(out);
  return make_op_result(
      {B, C + 1, H, W}, std::move(out), {act},
      [B, C, P, bg_score, out_saved](std::span<const double> g,
                                     std::span<Tensor> in) {
        const auto a = in[0].data();
        auto ga = grad_buffer(in[0]);
        const auto& s = *out_saved;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t p = 0; p < P; ++p) {
            double z = bg_score;
            for (std::size_t c = 0; c < C; ++c) z += a[(b * C + c) * P + p];
            double gs = 0.0;
            for (std::size_t k = 0; k <= C; ++k) {
              const std::size_t i = (b * (C + 1) + k) * P + p;
              gs += g[i] * s[i];
            }
            for (std::size_t c = 0; c < C; ++c)
              ga[(b * C + c) * P + p] += (g[(b * (C + 1) + c) * P + p] - gs) / z;
          }
      });
}

}  // namespace

ClassifierHead ClassifierHead::init(std::size_t num_classes,
                                    std::size_t feature_dim, Rng& rng) {
  require(num_classes >= 1 && feature_dim >= 1, Errc::argument,
          "ClassifierHead: dimensions must be positive");
  return ClassifierHead{init_uniform({num_classes, feature_dim}, feature_dim,
                                     rng, 1.0)};
}

void TapConfig::validate() const {
  require(alpha >= 0.0, Errc::config, "tap.alpha must be >= 0");
  require(bg_score > 0.0 && bg_score < 1.0, Errc::config,
          "tap.bg_score must lie in (0, 1)");
  require(beta > 0.0 && beta < 1.0, Errc::config, "tap.beta must lie in (0, 1)");
}

SeedMap::SeedMap(std::size_t h, std::size_t w, int classes, int fill)
    : height(h), width(w), num_classes(classes), labels(h * w, fill) {}

Tensor tap_scores(const Tensor& features, const ClassifierHead& head,
                  double alpha) {
  const bool single = features.rank() == 3;
  const Tensor x = as_batch(features);
  require(x.dim(1) == head.feature_dim(), Errc::argument,
          "tap_scores: feature dimension mismatch");
  Tensor s = linear(thresholded_avg_pool(x, alpha), head.weight, Tensor());
  return single ? reshape(s, {head.num_classes()}) : s;
}

Tensor cls_loss(const Tensor& scores, std::span<const double> labels) {
  for (double y : labels)
    require(y == 0.0 || y == 1.0, Errc::argument, "cls_loss: labels must be 0/1");
  return bce_with_logits(scores, labels);
}

CamStack cam_from_raw(const Tensor& raw, std::span<const LabelVector> labels,
                      double bg_score) {
  require(raw.rank() == 4, Errc::argument, "cam_from_raw: expected [B,C,H,W]");
  require(bg_score > 0.0, Errc::argument, "make_cam: bg_score must be positive");
  for (const auto& y : labels)
    require(std::any_of(y.begin(), y.end(), [](int v) { return v != 0; }),
            Errc::argument, "make_cam: at least one class must be present");
  CamStack cam;
  cam.num_classes = raw.dim(1);
  cam.activations = normalized_activations(raw, labels);
  cam.scores = categorical_scores(cam.activations, bg_score);
  return cam;
}

CamStack make_cam(const Tensor& features, const ClassifierHead& head,
                  std::span<const LabelVector> labels, double bg_score) {
  const Tensor x = as_batch(features);
  require(x.dim(1) == head.feature_dim(), Errc::argument,
          "make_cam: feature dimension mismatch");
  return cam_from_raw(pointwise_linear(x, head.weight, Tensor()), labels,
                      bg_score);
}

CamStack make_cam(const Tensor& features, const ClassifierHead& head,
                  const LabelVector& labels, double bg_score) {
  return make_cam(features, head, std::span<const LabelVector>(&labels, 1),
                  bg_score);
}

CamStack upsample_cam(const CamStack& cam, std::size_t factor, double bg_score) {
  require(factor >= 1, Errc::argument, "upsample_cam: factor must be >= 1");
  if (factor == 1) return cam;
  const auto& act = cam.activations;
  const std::size_t B = act.dim(0), C = act.dim(1), H = act.dim(2), W = act.dim(3);
  const std::size_t Ho = H * factor, Wo = W * factor;
  std::vector<double> up(B * C * Ho * Wo);
  const auto a = act.data();
  auto coord = [factor](std::size_t dst, std::size_t n, std::size_t& i0,
                        std::size_t& i1, double& t) {
    double src = (static_cast<double>(dst) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    t = src - static_cast<double>(i0);
  };
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* src = a.data() + bc * H * W;
    double* dst = up.data() + bc * Ho * Wo;
    for (std::size_t y = 0; y < Ho; ++y) {
      std::size_t y0, y1;
      double ty;
      coord(y, H, y0, y1, ty);
      for (std::size_t x = 0; x < Wo; ++x) {
        std::size_t x0, x1;
        double tx;
        coord(x, W, x0, x1, tx);
        const double top = src[y0 * W + x0] * (1 - tx) + src[y0 * W + x1] * tx;
        const double bot = src[y1 * W + x0] * (1 - tx) + src[y1 * W + x1] * tx;
        dst[y * Wo + x] = top * (1 - ty) + bot * ty;
      }
    }
  }
  CamStack out;
  out.num_classes = cam.num_classes;
  out.activations = Tensor::from({B, C, Ho, Wo}, std::move(up));
  out.scores = categorical_scores(out.activations, bg_score);
  return out;
}

Tensor class_scores(const CamStack& cam, int class_id) {
  const std::size_t C = cam.num_classes;
  require(class_id >= 1 && static_cast<std::size_t>(class_id) <= C,
          Errc::argument, "class_scores: class id out of range");
  const std::size_t B = cam.batch(), P = cam.height() * cam.width();
  std::vector<std::size_t> idx(B * P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p)
      idx[b * P + p] = (b * (C + 1) + static_cast<std::size_t>(class_id - 1)) * P + p;
  return gather(cam.scores, std::move(idx), {B, cam.height(), cam.width()});
}

Tensor class_activations(const CamStack& cam, int class_id) {
  const std::size_t C = cam.num_classes;
  require(class_id >= 1 && static_cast<std::size_t>(class_id) <= C,
          Errc::argument, "class_activations: class id out of range");
  const std::size_t B = cam.batch(), P = cam.height() * cam.width();
  std::vector<std::size_t> idx(B * P);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p)
      idx[b * P + p] = (b * C + static_cast<std::size_t>(class_id - 1)) * P + p;
  return gather(cam.activations, std::move(idx), {B, cam.height(), cam.width()});
}

SeedMap seed_map(const CamStack& cam, std::size_t image) {
  require(image < cam.batch(), Errc::argument, "seed_map: image out of range");
  const std::size_t C = cam.num_classes, P = cam.height() * cam.width();
  SeedMap out(cam.height(), cam.width(), static_cast<int>(C), cam.bg_index());
  const double* s = cam.scores.data().data() + image * (C + 1) * P;
  for (std::size_t p = 0; p < P; ++p) {
    double best = s[C * P + p];
    int label = cam.bg_index();
    for (std::size_t c = 0; c < C; ++c)
      if (s[c * P + p] > best) {
        best = s[c * P + p];
        label = static_cast<int>(c) + 1;
      }
    out.labels[p] = label;
  }
  return out;
}

std::vector<SeedMap> seed_maps(const CamStack& cam) {
  std::vector<SeedMap> out;
  out.reserve(cam.batch());
  for (std::size_t b = 0; b < cam.batch(); ++b) out.push_back(seed_map(cam, b));
  return out;
}

std::vector<std::uint8_t> bg_pseudo_mask(const CamStack& cam, std::size_t image,
                                         double threshold) {
  require(image < cam.batch(), Errc::argument,
          "bg_pseudo_mask: image out of range");
  const std::size_t C = cam.num_classes, P = cam.height() * cam.width();
  const double* a = cam.activations.data().data() + image * C * P;
  std::vector<std::uint8_t> mask(P);
  for (std::size_t p = 0; p < P; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += a[c * P + p];
    mask[p] = s < threshold ? 1 : 0;
  }
  return mask;
}

void write_seed_pgm(const std::string& path, const SeedMap& seeds) {
  require(seeds.background() <= 255, Errc::argument,
          "write_seed_pgm: too many classes for one byte");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Errc::io, "cannot write " + path);
  os << "P5\n" << seeds.width << ' ' << seeds.height << "\n255\n";
  std::vector<char> bytes(seeds.labels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(seeds.labels[i]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(Errc::io, "failed writing " + path);
}

SeedMap read_seed_pgm(const std::string& path, int num_classes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io, "cannot read " + path);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || !is)
    fail(Errc::argument, "not an 8-bit binary PGM: " + path);
  is.get();
  SeedMap out(h, w, num_classes, num_classes + 1);
  std::vector<char> bytes(w * h);
  if (!is.read(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    fail(Errc::io, "truncated PGM: " + path);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    out.labels[i] = static_cast<unsigned char>(bytes[i]);
  return out;
}

}  // namespace fbr
