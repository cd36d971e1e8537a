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

#include "fbr/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fbr/error.hpp"

namespace fbr {

namespace {

constexpr char kMagic[5] = {'F', 'B', 'R', 'W', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void EncoderConfig::validate() const {
  require(in_channels >= 1, Errc::config, "encoder.in_channels must be >= 1");
  require(feature_dim >= 1, Errc::config, "encoder.feature_dim (L) must be >= 1");
  require(downsample_factor == 1 || downsample_factor == 2 ||
              downsample_factor == 4 || downsample_factor == 8,
          Errc::config, "encoder.downsample_factor must be 1, 2, 4 or 8");
  require(hidden.size() == 2 && hidden[0] >= 1 && hidden[1] >= 1, Errc::config,
          "encoder.hidden must list two positive widths");
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain) {
  const double bound = std::sqrt(gain / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Encoder::Encoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.rng_seed);
  const std::size_t widths[4] = {config_.in_channels, config_.hidden[0],
                                 config_.hidden[1], config_.feature_dim};
  std::size_t remaining = config_.downsample_factor;
  for (int i = 0; i < 3; ++i) {
    Block b;
    const std::size_t cin = widths[i], cout = widths[i + 1];
    b.weight = init_uniform({cout, cin, 3, 3}, cin * 9, rng);
    b.bias = Tensor::zeros({cout}, true);
    b.stride = remaining > 1 ? 2 : 1;
    remaining /= b.stride;
    blocks_.push_back(std::move(b));
  }
}

Tensor Encoder::encode(const Tensor& images) const {
  require(!blocks_.empty(), Errc::argument, "encode: encoder not initialized");
  const bool single = images.rank() == 3;
  require(single || images.rank() == 4, Errc::argument,
          "encode: expected [C,H,W] or [B,C,H,W], got " +
              shape_str(images.shape()));
  Tensor x = single ? reshape(images, {1, images.dim(0), images.dim(1),
                                       images.dim(2)})
                    : images;
  require(x.dim(1) == config_.in_channels, Errc::argument,
          "encode: expected " + std::to_string(config_.in_channels) +
              " input channels");
  const std::size_t f = config_.downsample_factor;
  require(x.dim(2) % f == 0 && x.dim(3) % f == 0, Errc::argument,
          "encode: spatial extents " + std::to_string(x.dim(2)) + "x" +
              std::to_string(x.dim(3)) + " not divisible by " +
              std::to_string(f));
  for (const auto& b : blocks_) x = relu(conv2d(x, b.weight, b.bias, b.stride, 1));
  if (single) x = reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
  return x;
}

std::vector<NamedTensor> Encoder::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "encoder.conv" + std::to_string(i + 1);
    out.push_back({p + ".weight", blocks_[i].weight});
    out.push_back({p + ".bias", blocks_[i].bias});
  }
  return out;
}

Tensor encode(const Tensor& images, const Encoder& encoder) {
  return encoder.encode(images);
}

ProjectionHead ProjectionHead::init(std::size_t input_dim,
                                    std::size_t output_dim, Rng& rng) {
  require(input_dim >= 1 && output_dim >= 1, Errc::argument,
          "ProjectionHead: dimensions must be positive");
  ProjectionHead h;
  h.weight = init_uniform({output_dim, input_dim}, input_dim, rng);
  h.bias = Tensor::zeros({output_dim}, true);
  return h;
}

Tensor project(const Tensor& features, const ProjectionHead& head) {
  const bool single = features.rank() == 3;
  require(single || features.rank() == 4, Errc::argument,
          "project: expected rank 3 or 4 features");
  const std::size_t channels = features.dim(single ? 0 : 1);
  require(channels == head.input_dim(), Errc::argument,
          "project: head expects " + std::to_string(head.input_dim()) +
              " channels, features have " + std::to_string(channels));
  Tensor x = single ? reshape(features, {1, features.dim(0), features.dim(1),
                                         features.dim(2)})
                    : features;
  Tensor z = relu(pointwise_linear(x, head.weight, head.bias));
  if (single) z = reshape(z, {z.dim(1), z.dim(2), z.dim(3)});
  return z;
}

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Errc::io, "cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  for (const auto& p : params) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t e : p.tensor.shape()) write_pod<std::uint64_t>(os, e);
    for (double v : p.tensor.data()) write_pod<double>(os, v);
  }
  if (!os) fail(Errc::io, "failed writing checkpoint: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io, "cannot open checkpoint: " + path);
  char magic[sizeof(kMagic)] = {};
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail(Errc::checkpoint, "not an FBRW1 checkpoint: " + path);

  std::vector<NamedTensor> out;
  std::uint32_t name_len = 0;
  while (read_pod(is, name_len)) {
    if (name_len > 4096) fail(Errc::checkpoint, "corrupt parameter name length");
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !read_pod(is, rank) || rank > 8)
      fail(Errc::checkpoint, "truncated parameter header in " + path);
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint64_t v = 0;
      if (!read_pod(is, v)) fail(Errc::checkpoint, "truncated extents in " + path);
      e = static_cast<std::size_t>(v);
    }
    const std::size_t n = shape_numel(shape);
    if (n > (std::size_t{1} << 28)) fail(Errc::checkpoint, "parameter too large");
    std::vector<double> values(n);
    if (n > 0 && !is.read(reinterpret_cast<char*>(values.data()),
                          static_cast<std::streamsize>(n * sizeof(double))))
      fail(Errc::checkpoint, "truncated values for " + name);
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace fbr
