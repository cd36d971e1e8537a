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
#include <map>
#include <string>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/encoder.hpp"
#include "fbr/losses.hpp"
#include "fbr/synthdata.hpp"

namespace fbr {

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  std::size_t n_prototype = 32;
  std::size_t k = 8;
  std::size_t kmeans_restarts = 1;
  std::size_t bank_capacity = 50000;
  bool enable_fb = true;
  bool enable_if = true;
  bool enable_seg = true;
  bool hflip = true;

  void validate() const;
};

struct EvalConfig {
  std::vector<std::size_t> widths = {1, 2, 4, 8, 16};
  std::size_t export_stride = 2;  // embedding export keeps every n-th row/col

  void validate() const;
};

// Everything a run needs. Sub-seeds are derived from `seed`, never set
// directly.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig data;
  EncoderConfig encoder;
  std::size_t output_dim = 128;
  TapConfig tap;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
  std::uint64_t sub_seed(const char* stream) const;
};

extern const char* const kSeedStreams[4];  // data, init, clustering, sampling

// Parses a config document (or a manifest carrying one under "config").
// Missing keys take defaults; unknown keys and bad values are config errors
// naming the key.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
// Fully populated document, defaults included.
std::string config_json(const RunConfig& config);

struct RunManifest {
  RunConfig config;
  std::map<std::string, std::string> artifacts;  // role -> path
  std::string version;
};

std::string manifest_json(const RunManifest& manifest);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

const char* version_string();

}  // namespace fbr
