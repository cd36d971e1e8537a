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

// Seed quality: IoU over a confusion matrix, boundary-band (trimap) IoU and
// the boundary F-measure.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbr/cam.hpp"
#include "fbr/synthdata.hpp"

namespace fbr {

// Labels 1..C+1, background last.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Adds every pixel, or only those with mask[p] != 0 when a mask is given.
  void add(const SeedMap& pred, const SeedMap& gt,
           std::span<const std::uint8_t> mask = {});

  int num_labels() const { return labels_; }
  std::uint64_t at(int pred, int gt) const;
  // IoU per label with a non-empty union.
  std::map<int, double> iou() const;
  // Mean of iou(); 0 when no label has a non-empty union.
  double miou() const;

 private:
  int labels_;
  std::vector<std::uint64_t> counts_;  // [pred-1][gt-1]
};

struct MetricReport {
  std::map<int, double> per_class_iou;
  double miou = 0.0;
  std::map<std::size_t, double> trimap;
  std::map<std::size_t, double> boundary_f;
  std::optional<double> cooccurrence_fp;
  std::size_t images = 0;
};

MetricReport miou(const SeedMap& pred, const SeedMap& gt, int num_classes);

// 1 where a 4-neighbour carries a different label.
std::vector<std::uint8_t> boundary_mask(const SeedMap& m);
// Pixels within Chebyshev distance `width` of a set pixel.
std::vector<std::uint8_t> dilate(std::span<const std::uint8_t> mask,
                                 std::size_t height, std::size_t width,
                                 std::size_t radius);

// mIoU restricted to the band around the gt boundary. A gt without
// boundaries is an undefined-band error.
double trimap_miou(const SeedMap& pred, const SeedMap& gt, std::size_t width);

// F-measure between the boundary sets of pred and gt with a tolerance of
// `width` pixels (Chebyshev). Both empty gives 1, one empty gives 0.
double boundary_fmeasure(const SeedMap& pred, const SeedMap& gt,
                         std::size_t width);
// Same, on explicit boundary sets.
double boundary_fmeasure_masks(std::span<const std::uint8_t> pred_boundary,
                               std::span<const std::uint8_t> gt_boundary,
                               std::size_t height, std::size_t width,
                               std::size_t tolerance);

// Dataset level: IoU and trimap from confusion matrices summed over images
// (images without a gt boundary do not enter the band), boundary F as the
// mean over images, and the fraction of gt-background pixels predicted as
// foreground in images whose texture is a class's dominant one.
MetricReport evaluate(std::span<const SeedMap> preds,
                      std::span<const Sample> samples, const SynthConfig& data,
                      std::span<const std::size_t> widths);

std::string report_json(const MetricReport& report);
// "width,value" rows.
std::string curve_csv(const std::map<std::size_t, double>& curve);

}  // namespace fbr
