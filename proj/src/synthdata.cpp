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

#include "fbr/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "fbr/error.hpp"
#include "fbr/rng.hpp"

namespace fbr {

namespace {

using Rgb = std::array<double, 3>;

constexpr double kMinFgFraction = 0.05;
constexpr double kMaxFgFraction = 0.5;
constexpr int kMaxAttempts = 200;

// Two base colors per texture kind.
constexpr std::array<std::array<Rgb, 2>, 4> kPalette = {{
    {{{0.85, 0.75, 0.20}, {0.35, 0.28, 0.10}}},  // stripes
    {{{0.25, 0.45, 0.85}, {0.10, 0.15, 0.40}}},  // checker
    {{{0.10, 0.45, 0.20}, {0.60, 0.90, 0.50}}},  // gradient
    {{{0.65, 0.35, 0.35}, {0.40, 0.40, 0.40}}},  // speckle
}};

// One characteristic colour per class, away from every texture palette.
constexpr std::array<Rgb, 4> kShapeColor = {{
    {0.90, 0.20, 0.80},
    {0.20, 0.90, 0.90},
    {1.00, 0.50, 0.05},
    {0.95, 0.95, 0.95},
}};

Rgb jitter(const Rgb& c, Rng& rng, double amount) {
  Rgb out;
  for (int i = 0; i < 3; ++i) out[i] = std::clamp(c[i] + rng.uniform(-amount, amount), 0.0, 1.0);
  return out;
}

struct Canvas {
  std::size_t h, w;
  std::vector<double> rgb;  // [3, h, w]
  void set(std::size_t y, std::size_t x, const Rgb& c) {
    for (int k = 0; k < 3; ++k) rgb[(static_cast<std::size_t>(k) * h + y) * w + x] = c[k];
  }
};

void paint_texture(Canvas& cv, TextureKind kind, Rng& rng) {
  const auto& pal = kPalette[static_cast<std::size_t>(kind)];
  const Rgb a = jitter(pal[0], rng, 0.08), b = jitter(pal[1], rng, 0.08);
  const double s = static_cast<double>(std::min(cv.h, cv.w));
  switch (kind) {
    case TextureKind::stripes: {
      const int period = std::max(2, static_cast<int>(std::lround(s * rng.uniform(0.06, 0.12))));
      const int orient = rng.integer(0, 2);
      const int phase = rng.integer(0, period - 1);
      for (std::size_t y = 0; y < cv.h; ++y)
        for (std::size_t x = 0; x < cv.w; ++x) {
          const int t = orient == 0 ? static_cast<int>(y)
                        : orient == 1 ? static_cast<int>(x)
                                      : static_cast<int>(x + y);
          cv.set(y, x, ((t + phase) % period) < period / 2 ? a : b);
        }
      break;
    }
    case TextureKind::checker: {
      const int cell = std::max(1, static_cast<int>(std::lround(s * rng.uniform(0.06, 0.12))));
      const int oy = rng.integer(0, cell - 1), ox = rng.integer(0, cell - 1);
      for (std::size_t y = 0; y < cv.h; ++y)
        for (std::size_t x = 0; x < cv.w; ++x) {
          const int cy = (static_cast<int>(y) + oy) / cell;
          const int cx = (static_cast<int>(x) + ox) / cell;
          cv.set(y, x, ((cy + cx) % 2) ? a : b);
        }
      break;
    }
    case TextureKind::gradient: {
      const double angle = rng.uniform(0.0, 2.0 * M_PI);
      const double dy = std::sin(angle), dx = std::cos(angle);
      for (std::size_t y = 0; y < cv.h; ++y)
        for (std::size_t x = 0; x < cv.w; ++x) {
          const double u = ((static_cast<double>(y) / (cv.h - 1) - 0.5) * dy +
                            (static_cast<double>(x) / (cv.w - 1) - 0.5) * dx) / std::sqrt(2.0) + 0.5;
          Rgb c;
          for (int k = 0; k < 3; ++k) c[k] = a[k] * (1 - u) + b[k] * u;
          cv.set(y, x, c);
        }
      break;
    }
    case TextureKind::speckle: {
      for (std::size_t y = 0; y < cv.h; ++y)
        for (std::size_t x = 0; x < cv.w; ++x) cv.set(y, x, rng.bernoulli(0.5) ? a : b);
      break;
    }
  }
}

struct Placed {
  int class_id;
  long y0, x0, size_y, size_x;  // bounding box
};

// Rasterizes a shape of `kind` inside its box; calls `hit(y, x)` per pixel.
template <typename Fn>
void rasterize(ShapeKind kind, const Placed& p, long thickness, Fn&& hit) {
  for (long y = 0; y < p.size_y; ++y)
    for (long x = 0; x < p.size_x; ++x) {
      bool in = false;
      const double fy = y + 0.5, fx = x + 0.5;
      switch (kind) {
        case ShapeKind::square:
          in = true;
          break;
        case ShapeKind::disc: {
          const double r = p.size_x / 2.0;
          in = (fy - r) * (fy - r) + (fx - r) * (fx - r) <= r * r;
          break;
        }
        case ShapeKind::triangle: {
          // apex at top centre, base along the bottom edge
          const double half = (fy / p.size_y) * (p.size_x / 2.0);
          in = std::abs(fx - p.size_x / 2.0) <= half;
          break;
        }
        case ShapeKind::cross: {
          const double cy = p.size_y / 2.0, cx = p.size_x / 2.0, t = thickness / 2.0;
          in = std::abs(fy - cy) <= t || std::abs(fx - cx) <= t;
          break;
        }
      }
      if (in) hit(p.y0 + y, p.x0 + x);
    }
}

}  // namespace

const char* split_name(Split s) { return s == Split::train ? "train" : "val"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  fail(Errc::argument, "unknown split '" + s + "' (expected train or val)");
}

void SynthConfig::validate() const {
  require(num_classes >= 2 && num_classes <= 4, Errc::config,
          "data.num_classes must be between 2 and 4 (one shape kind per class)");
  require(textures >= 1 && textures <= 4, Errc::config,
          "data.textures must be between 1 and 4");
  require(height >= 8 && width >= 8, Errc::config,
          "data.image_size must be at least 8x8");
  require(cooccurrence_strength >= 0.0 && cooccurrence_strength <= 1.0,
          Errc::config, "data.cooccurrence must lie in [0, 1]");
  if (!cooccurrence.empty()) {
    require(cooccurrence.size() == num_classes, Errc::config,
            "data.cooccurrence must have one row per class");
    for (const auto& row : cooccurrence) {
      require(row.size() == textures, Errc::config,
              "data.cooccurrence rows must have one entry per texture");
      double s = 0.0;
      for (double v : row) {
        require(v >= 0.0, Errc::config, "data.cooccurrence entries must be >= 0");
        s += v;
      }
      require(std::abs(s - 1.0) <= 1e-9, Errc::config,
              "data.cooccurrence rows must sum to 1");
    }
  }
}

std::vector<Vec> SynthConfig::cooccurrence_matrix() const {
  if (!cooccurrence.empty()) return cooccurrence;
  std::vector<Vec> m(num_classes, Vec(textures, 0.0));
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (textures == 1) {
      m[c][0] = 1.0;
      continue;
    }
    const double off = (1.0 - cooccurrence_strength) / static_cast<double>(textures - 1);
    for (std::size_t t = 0; t < textures; ++t)
      m[c][t] = t == c % textures ? cooccurrence_strength : off;
  }
  return m;
}

std::size_t SynthConfig::dominant_texture(int class_id) const {
  const auto m = cooccurrence_matrix();
  const auto& row = m.at(static_cast<std::size_t>(class_id - 1));
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Sample generate_sample(const SynthConfig& config, Split split, std::size_t index) {
  config.validate();
  Rng rng(derive_seed(derive_seed(config.rng_seed, split_name(split)), index));
  const std::size_t H = config.height, W = config.width;
  const double s = static_cast<double>(std::min(H, W));
  const int C = static_cast<int>(config.num_classes);
  const auto cooc = config.cooccurrence_matrix();

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    // Classes: one or two distinct ones; the first picks the texture.
    std::vector<int> classes{rng.integer(1, C)};
    if (rng.bernoulli(0.5)) {
      int other = rng.integer(1, C - 1);
      if (other >= classes[0]) ++other;
      classes.push_back(other);
    }
    const Vec& row = cooc[static_cast<std::size_t>(classes[0] - 1)];
    double r = rng.uniform(), acc = 0.0;
    std::size_t texture = row.size() - 1;
    for (std::size_t t = 0; t < row.size(); ++t) {
      acc += row[t];
      if (r < acc) {
        texture = t;
        break;
      }
    }
    while (row[texture] == 0.0 && texture > 0) --texture;

    Canvas cv{H, W, std::vector<double>(3 * H * W)};
    paint_texture(cv, static_cast<TextureKind>(texture), rng);
    SeedMap mask(H, W, C, C + 1);

    std::vector<Placed> placed;
    bool ok = true;
    for (int cls : classes) {
      const auto kind = static_cast<ShapeKind>((cls - 1) % 4);
      long sy = 0, sx = 0, thick = 0;
      switch (kind) {
        case ShapeKind::square:
          sy = sx = std::lround(s * rng.uniform(0.25, 0.40));
          break;
        case ShapeKind::disc:
          sy = sx = 2 * std::lround(s * rng.uniform(0.14, 0.22));
          break;
        case ShapeKind::triangle:
          sy = sx = std::lround(s * rng.uniform(0.36, 0.50));
          break;
        case ShapeKind::cross:
          sy = sx = std::lround(s * rng.uniform(0.34, 0.45));
          thick = std::max(2L, std::lround(s * rng.uniform(0.11, 0.14)));
          break;
      }
      bool fits = false;
      Placed p{cls, 0, 0, sy, sx};
      for (int tries = 0; tries < 50 && !fits; ++tries) {
        p.y0 = rng.integer(0, static_cast<int>(H) - static_cast<int>(sy));
        p.x0 = rng.integer(0, static_cast<int>(W) - static_cast<int>(sx));
        fits = std::all_of(placed.begin(), placed.end(), [&](const Placed& q) {
          return p.y0 + p.size_y + 2 <= q.y0 || q.y0 + q.size_y + 2 <= p.y0 ||
                 p.x0 + p.size_x + 2 <= q.x0 || q.x0 + q.size_x + 2 <= p.x0;
        });
      }
      if (!fits) {
        ok = false;
        break;
      }
      const Rgb color = jitter(kShapeColor[static_cast<std::size_t>(cls - 1) % 4], rng, 0.12);
      rasterize(kind, p, thick, [&](long y, long x) {
        cv.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), color);
        mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = cls;
      });
      placed.push_back(p);
    }
    if (!ok) continue;

    std::size_t fg = 0;
    for (int v : mask.labels) fg += v != C + 1;
    const double frac = static_cast<double>(fg) / static_cast<double>(H * W);
    if (frac < kMinFgFraction || frac > kMaxFgFraction) continue;

    for (double& v : cv.rgb) v = std::clamp(v + rng.uniform(-0.03, 0.03), 0.0, 1.0);

    Sample out;
    out.index = index;
    out.texture = texture;
    out.image = Tensor::from({3, H, W}, std::move(cv.rgb));
    out.label.assign(config.num_classes, 0);
    for (int v : mask.labels)
      if (v != C + 1) out.label[static_cast<std::size_t>(v - 1)] = 1;
    out.gt_mask = std::move(mask);
    return out;
  }
  fail(Errc::generation, "generate: could not place shapes for sample " +
                             std::to_string(index) + " after retries");
}

std::vector<Sample> generate(const SynthConfig& config, Split split) {
  const std::size_t n = split == Split::train ? config.train_count : config.val_count;
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(config, split, i));
  return out;
}

void write_ppm(const std::string& path, const Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, Errc::argument,
          "write_ppm: expected [3,H,W]");
  const std::size_t H = image.dim(1), W = image.dim(2);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Errc::io, "cannot write " + path);
  os << "P6\n" << W << ' ' << H << "\n255\n";
  std::vector<char> bytes(3 * H * W);
  const auto v = image.data();
  for (std::size_t p = 0; p < H * W; ++p)
    for (std::size_t k = 0; k < 3; ++k)
      bytes[p * 3 + k] = static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(v[k * H * W + p], 0.0, 1.0) * 255.0)));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(Errc::io, "failed writing " + path);
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                   const SynthConfig& config, Split split) {
  namespace fs = std::filesystem;
  const fs::path root = fs::path(dir) / split_name(split);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) fail(Errc::io, "cannot create " + root.string() + ": " + ec.message());
  std::ofstream labels(root / "labels.csv", std::ios::trunc);
  if (!labels) fail(Errc::io, "cannot write " + (root / "labels.csv").string());
  labels << "index";
  for (std::size_t c = 1; c <= config.num_classes; ++c) labels << ",c" << c;
  labels << '\n';
  char name[32];
  for (const auto& s : samples) {
    std::snprintf(name, sizeof(name), "%05zu", s.index);
    write_ppm((root / (std::string(name) + ".ppm")).string(), s.image);
    write_seed_pgm((root / (std::string(name) + "_mask.pgm")).string(), s.gt_mask);
    labels << s.index;
    for (int v : s.label) labels << ',' << v;
    labels << '\n';
  }
  if (!labels) fail(Errc::io, "failed writing labels.csv");
}

}  // namespace fbr
