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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/config.hpp"
#include "fbr/encoder.hpp"
#include "fbr/losses.hpp"
#include "fbr/nroi.hpp"
#include "fbr/rng.hpp"
#include "fbr/synthdata.hpp"

namespace fbr {

struct FbrModel {
  Encoder encoder;
  ClassifierHead classifier;
  ProjectionHead fg_head;  // phi_fg
  ProjectionHead bg_head;  // phi_bg
  SegHead seg_head;        // phi_seg

  static FbrModel init(const RunConfig& config);

  std::vector<NamedTensor> parameters() const;
  // Encoder and classifier only; the heads exist for training alone.
  std::vector<NamedTensor> inference_parameters() const;
  // Copies values by name. Every inference parameter must be present with a
  // matching shape, else a checkpoint error; training heads are optional.
  void load(const std::vector<NamedTensor>& params);
};

std::size_t parameter_count(const std::vector<NamedTensor>& params);

struct StepTrace {
  std::size_t step = 0;
  LossBreakdown loss;
  bool fb_skipped = true;
  bool if_skipped = true;
  bool seg_skipped = true;
  std::size_t bank_size = 0;
  std::size_t nrois_pushed = 0;
  std::size_t queries = 0;
  std::vector<int> present_classes;
};

std::string trace_json(const StepTrace& trace);  // one line, no newline

class Trainer {
 public:
  Trainer(const RunConfig& config, std::vector<Sample> train_set);

  // One step on the next batch of the seeded epoch order.
  StepTrace step();
  // One step on an explicit batch.
  StepTrace step_on(std::span<const Sample> batch);
  // `steps` consecutive steps; the callback sees every trace.
  void run(std::size_t steps,
           const std::function<void(const StepTrace&)>& on_step = {});

  const FbrModel& model() const { return model_; }
  FbrModel& model() { return model_; }
  const NroiBank& bank() const { return bank_; }
  NroiBank& bank() { return bank_; }
  std::size_t steps_done() const { return step_; }
  const RunConfig& config() const { return config_; }

 private:
  RunConfig config_;
  std::vector<Sample> data_;
  FbrModel model_;
  NroiBank bank_;
  Rng order_rng_;
  Rng clustering_rng_;
  Rng sampling_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t step_ = 0;
};

// Seeds at image resolution from encoder and classifier only: the CAM is
// computed at feature resolution, bilinearly upsampled, then arg-maxed.
std::vector<SeedMap> infer_seeds(const FbrModel& model,
                                 std::span<const Sample> samples,
                                 const RunConfig& config);

}  // namespace fbr
