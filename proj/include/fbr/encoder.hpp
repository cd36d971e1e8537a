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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbr/numerics.hpp"
#include "fbr/rng.hpp"

namespace fbr {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::size_t feature_dim = 64;        // L
  std::size_t downsample_factor = 4;   // one of 1, 2, 4, 8
  std::vector<std::size_t> hidden = {16, 32};  // widths of blocks 1 and 2
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Three 3x3 conv blocks, each rectified. Strides of 2 are spent from the
// first block onward until the downsample factor is reached.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& config);

  // images [B, C_in, H, W] -> [B, L, H/f, W/f]; a rank-3 input is treated as
  // a single image and the output is rank 3 as well.
  Tensor encode(const Tensor& images) const;

  const EncoderConfig& config() const { return config_; }
  std::vector<NamedTensor> parameters() const;

 private:
  struct Block {
    Tensor weight;
    Tensor bias;
    std::size_t stride = 1;
  };

  EncoderConfig config_;
  std::vector<Block> blocks_;
};

Tensor encode(const Tensor& images, const Encoder& encoder);

// 1x1 convolution followed by ReLU.
struct ProjectionHead {
  Tensor weight;  // [D, L]
  Tensor bias;    // [D]

  static ProjectionHead init(std::size_t input_dim, std::size_t output_dim,
                             Rng& rng);
  std::size_t input_dim() const { return weight.dim(1); }
  std::size_t output_dim() const { return weight.dim(0); }
};

// f [B, L, H, W] or [L, H, W] -> same rank with D channels, values >= 0.
Tensor project(const Tensor& features, const ProjectionHead& head);

// Fan-in scaled uniform initialization, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng,
                    double gain = 6.0);

// Flat binary weight record: "FBRW1", then for each parameter a u32 name
// length, the name bytes, a u32 rank, u64 extents and float64 values, all
// little-endian.
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace fbr
