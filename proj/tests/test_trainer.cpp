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


#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fbr/error.hpp"
#include "fbr/trainer.hpp"

using namespace fbr;

namespace {

RunConfig small_config(std::uint64_t seed, bool fb, bool ifg, bool seg) {
  RunConfig c = parse_config(R"({
    "data": {"image_size": [32, 32], "train_count": 32, "val_count": 8},
    "encoder": {"feature_dim": 16, "hidden": [8, 16]},
    "heads": {"output_dim": 16},
    "loss": {"negatives": 32},
    "train": {"batch_size": 4, "learning_rate": 0.1, "bank_capacity": 200}
  })");
  c.seed = seed;
  c.data.rng_seed = c.sub_seed("data");
  c.encoder.rng_seed = c.sub_seed("init");
  c.train.enable_fb = fb;
  c.train.enable_if = ifg;
  c.train.enable_seg = seg;
  return c;
}

Trainer make_trainer(const RunConfig& c) { return Trainer(c, generate(c.data, Split::train)); }

std::vector<double> snapshot(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("baseline switches reduce the objective to classification") {
  Trainer tr = make_trainer(small_config(1, false, false, false));
  const auto bg_w = snapshot(tr.model().bg_head.weight);
  const auto seg_w = snapshot(tr.model().seg_head.weight);
  const auto fg_w = snapshot(tr.model().fg_head.weight);
  for (int i = 0; i < 5; ++i) {
    const StepTrace t = tr.step();
    CHECK(t.fb_skipped);
    CHECK(t.if_skipped);
    CHECK(t.seg_skipped);
    CHECK(t.loss.total == t.loss.cls);
    CHECK(t.bank_size == 0);
  }
  // no gradient ever reaches the training-only heads
  CHECK(snapshot(tr.model().bg_head.weight) == bg_w);
  CHECK(snapshot(tr.model().seg_head.weight) == seg_w);
  CHECK(snapshot(tr.model().fg_head.weight) == fg_w);
}

TEST_CASE("first step contrasts against an empty bank") {
  Trainer tr = make_trainer(small_config(2, true, true, true));
  const StepTrace t0 = tr.step();
  CHECK(t0.fb_skipped);
  CHECK(t0.loss.fb == 0.0);
  CHECK_FALSE(t0.seg_skipped);
  CHECK(t0.bank_size == t0.nrois_pushed);
  CHECK(t0.nrois_pushed <= 4 * 8);
  for (int i = 0; i < 30; ++i) {
    const StepTrace t = tr.step();
    CHECK(t.bank_size <= 200);
    CHECK(std::isfinite(t.loss.total));
    const double expect = t.loss.cls + 0.1 * t.loss.fb + 0.01 * t.loss.ifg + 0.01 * t.loss.seg;
    CHECK(std::abs(t.loss.total - expect) <= 1e-12);
  }
  CHECK(tr.bank().size() > 0);
}

TEST_CASE("seg head trains the background projection alone") {
  Trainer tr = make_trainer(small_config(3, false, false, true));
  const auto bg_w = snapshot(tr.model().bg_head.weight);
  const auto fg_w = snapshot(tr.model().fg_head.weight);
  tr.run(3);
  CHECK(snapshot(tr.model().bg_head.weight) != bg_w);
  CHECK(snapshot(tr.model().fg_head.weight) == fg_w);
}

TEST_CASE("identical seeds replay identical traces") {
  const RunConfig c = small_config(4, true, true, true);
  Trainer a = make_trainer(c), b = make_trainer(c);
  for (int i = 0; i < 8; ++i) CHECK(trace_json(a.step()) == trace_json(b.step()));
  Trainer d = make_trainer(small_config(5, true, true, true));
  CHECK(trace_json(d.step()) != trace_json(make_trainer(c).step()));
}

TEST_CASE("inference uses fewer parameters and ignores the bank") {
  const RunConfig c = small_config(6, true, true, true);
  Trainer tr = make_trainer(c);
  tr.run(4);
  const FbrModel& m = tr.model();
  CHECK(parameter_count(m.inference_parameters()) < parameter_count(m.parameters()));
  const auto val = generate(c.data, Split::val);
  const auto s1 = infer_seeds(m, val, c);
  REQUIRE(s1.size() == val.size());
  CHECK(s1[0].height == 32);
  tr.bank().clear();
  Rng rng(1);
  std::vector<Vec> junk(50, Vec(16, 0.25));
  tr.bank().push(junk);
  CHECK(infer_seeds(tr.model(), val, c) == s1);

  // heads are optional when loading
  FbrModel fresh = FbrModel::init(c);
  fresh.load(m.inference_parameters());
  CHECK(infer_seeds(fresh, val, c) == s1);
  auto partial = m.inference_parameters();
  partial.pop_back();
  try {
    fresh.load(partial);
    FAIL("expected checkpoint error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::checkpoint);
  }
}

TEST_CASE("trace serialization is one JSON line") {
  Trainer tr = make_trainer(small_config(7, true, true, true));
  const std::string j = trace_json(tr.step());
  CHECK(j.find('\n') == std::string::npos);
  CHECK(j.find("\"fb\":true") != std::string::npos);
  CHECK(j.find("\"total\"") != std::string::npos);
}

TEST_CASE("windowed loss does not increase in most seeded runs") {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Trainer tr = make_trainer(small_config(100 + seed, true, true, true));
    std::vector<double> loss;
    tr.run(400, [&](const StepTrace& t) { loss.push_back(t.loss.total); });
    const double first = std::accumulate(loss.begin(), loss.begin() + 200, 0.0) / 200.0;
    const double second = std::accumulate(loss.begin() + 200, loss.end(), 0.0) / 200.0;
    ok += second <= first;
  }
  CHECK(ok >= 4);
}
