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

#include "fbr/trainer.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "fbr/error.hpp"
#include "fbr/prototypes.hpp"
#include "fbr/sampler.hpp"
#include "json.hpp"

namespace fbr {

namespace {

constexpr std::size_t kInferBatch = 16;

void append(std::vector<NamedTensor>& out, const std::string& name, const Tensor& t) {
  out.push_back({name, t});
}

// Stacks images into [B, 3, H, W]; `flip[i]` mirrors image i horizontally.
Tensor stack_images(std::span<const Sample> batch, const std::vector<bool>& flip) {
  require(!batch.empty(), Errc::argument, "stack_images: empty batch");
  const Shape& s = batch[0].image.shape();
  const std::size_t C = s[0], H = s[1], W = s[2];
  std::vector<double> v(batch.size() * C * H * W);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    require(batch[b].image.shape() == s, Errc::argument,
            "stack_images: images differ in shape");
    const auto src = batch[b].image.data();
    double* dst = v.data() + b * C * H * W;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
          dst[(c * H + y) * W + x] =
              src[(c * H + y) * W + (flip.empty() || !flip[b] ? x : W - 1 - x)];
  }
  return Tensor::from({batch.size(), C, H, W}, std::move(v));
}

// Image b of a [B, D, H, W] map as a detached [D, H, W] tensor.
Tensor slice_image(const Tensor& z, std::size_t b) {
  const std::size_t D = z.dim(1), H = z.dim(2), W = z.dim(3);
  const auto v = z.data().subspan(b * D * H * W, D * H * W);
  return Tensor::from({D, H, W}, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

FbrModel FbrModel::init(const RunConfig& config) {
  config.validate();
  FbrModel m;
  m.encoder = Encoder(config.encoder);
  Rng rng(derive_seed(config.encoder.rng_seed, "heads"));
  const std::size_t L = config.encoder.feature_dim, D = config.output_dim;
  m.classifier = ClassifierHead::init(config.data.num_classes, L, rng);
  m.fg_head = ProjectionHead::init(L, D, rng);
  m.bg_head = ProjectionHead::init(L, D, rng);
  m.seg_head = SegHead::init(D, rng);
  return m;
}

std::vector<NamedTensor> FbrModel::inference_parameters() const {
  auto out = encoder.parameters();
  append(out, "classifier.weight", classifier.weight);
  return out;
}

std::vector<NamedTensor> FbrModel::parameters() const {
  auto out = inference_parameters();
  append(out, "fg_head.weight", fg_head.weight);
  append(out, "fg_head.bias", fg_head.bias);
  append(out, "bg_head.weight", bg_head.weight);
  append(out, "bg_head.bias", bg_head.bias);
  append(out, "seg_head.weight", seg_head.weight);
  append(out, "seg_head.bias", seg_head.bias);
  return out;
}

void FbrModel::load(const std::vector<NamedTensor>& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& p : params) by_name[p.name] = &p.tensor;
  const auto required = inference_parameters();
  for (const auto& p : parameters()) {
    const auto it = by_name.find(p.name);
    const bool needed = std::any_of(required.begin(), required.end(),
                                    [&](const NamedTensor& r) { return r.name == p.name; });
    if (it == by_name.end()) {
      if (needed) fail(Errc::checkpoint, "checkpoint lacks parameter " + p.name);
      continue;
    }
    if (it->second->shape() != p.tensor.shape())
      fail(Errc::checkpoint, "checkpoint parameter " + p.name + " has shape " +
                                 shape_str(it->second->shape()) + ", expected " +
                                 shape_str(p.tensor.shape()));
    const auto src = it->second->data();
    auto dst = Tensor(p.tensor).mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::size_t parameter_count(const std::vector<NamedTensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

std::string trace_json(const StepTrace& t) {
  nlohmann::ordered_json j;
  j["step"] = t.step;
  j["loss"] = {{"cls", t.loss.cls},
               {"fb", t.loss.fb},
               {"if", t.loss.ifg},
               {"seg", t.loss.seg},
               {"total", t.loss.total}};
  j["skipped"] = {{"fb", t.fb_skipped}, {"if", t.if_skipped}, {"seg", t.seg_skipped}};
  j["bank_size"] = t.bank_size;
  j["nrois_pushed"] = t.nrois_pushed;
  j["queries"] = t.queries;
  j["present_classes"] = t.present_classes;
  return j.dump();
}

Trainer::Trainer(const RunConfig& config, std::vector<Sample> train_set)
    : config_(config),
      data_(std::move(train_set)),
      model_(FbrModel::init(config)),
      bank_(config.train.bank_capacity, config.output_dim),
      order_rng_(derive_seed(config.sub_seed("data"), "order")),
      clustering_rng_(config.sub_seed("clustering")),
      sampling_rng_(config.sub_seed("sampling")) {
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();  // forces a shuffle on the first step
}

StepTrace Trainer::step() {
  require(!data_.empty(), Errc::argument, "Trainer::step: no training data");
  std::vector<Sample> batch;
  const std::size_t bs = std::min(config_.train.batch_size, data_.size());
  while (batch.size() < bs) {
    if (cursor_ >= order_.size()) {
      // Fisher-Yates with the hand-rolled generator for portability.
      for (std::size_t i = order_.size(); i > 1; --i)
        std::swap(order_[i - 1], order_[order_rng_.index(i)]);
      cursor_ = 0;
    }
    batch.push_back(data_[order_[cursor_++]]);
  }
  return step_on(batch);
}

StepTrace Trainer::step_on(std::span<const Sample> batch) {
  const RunConfig& cfg = config_;
  const std::size_t B = batch.size();
  const int C = static_cast<int>(cfg.data.num_classes);
  StepTrace trace;
  trace.step = step_;

  std::vector<bool> flip(B, false);
  if (cfg.train.hflip)
    for (std::size_t b = 0; b < B; ++b) flip[b] = order_rng_.bernoulli(0.5);
  std::vector<LabelVector> labels;
  std::vector<double> flat_labels;
  for (const auto& s : batch) {
    require(s.label.size() == static_cast<std::size_t>(C), Errc::argument,
            "train_step: label vector size mismatch");
    labels.push_back(s.label);
    for (int v : s.label) flat_labels.push_back(v);
  }

  // encode -> TAP -> classification loss
  const Tensor images = stack_images(batch, flip);
  const Tensor f = model_.encoder.encode(images);
  const Tensor cls = cls_loss(tap_scores(f, model_.classifier, cfg.tap.alpha), flat_labels);

  // CAM -> seeds
  const CamStack cam = make_cam(f, model_.classifier, labels, cfg.tap.bg_score);
  const std::vector<SeedMap> seeds = seed_maps(cam);

  const bool need_fg = cfg.train.enable_fb || cfg.train.enable_if;
  const bool need_bg = cfg.train.enable_fb || cfg.train.enable_seg;
  Tensor z_fg, z_bg;
  if (need_fg) z_fg = project(f, model_.fg_head);
  if (need_bg) z_bg = project(f, model_.bg_head);

  // prototypes and queries per present class
  std::vector<Prototype> prototypes;
  std::vector<QuerySet> queries;
  for (int c = 1; c <= C; ++c) {
    const bool present = std::any_of(labels.begin(), labels.end(),
                                     [&](const LabelVector& l) { return l[c - 1] == 1; });
    if (!present) continue;
    trace.present_classes.push_back(c);
    if (!need_fg) continue;
    const Tensor scores = class_activations(cam, c);
    try {
      prototypes.push_back(compute_prototype(scores, z_fg, c, cfg.train.n_prototype));
    } catch (const Error& e) {
      if (e.code() != Errc::class_absent) throw;
      continue;
    }
    queries.push_back(select_queries(seeds, scores.detach(), z_fg, c, cfg.tap.beta));
    trace.queries += queries.back().size();
  }

  Tensor fb = Tensor::scalar(0.0), ifg = Tensor::scalar(0.0), seg = Tensor::scalar(0.0);

  if (cfg.train.enable_fb) {
    // NROIs of this step are queued only after the step's negatives are drawn.
    std::vector<Vec> nrois;
    for (std::size_t b = 0; b < B; ++b) {
      try {
        const ClusterResult r =
            extract_nrois(slice_image(z_bg, b), seeds[b], cfg.train.k,
                          clustering_rng_, cfg.train.kmeans_restarts);
        nrois.insert(nrois.end(), r.centroids.begin(), r.centroids.end());
      } catch (const Error& e) {
        if (e.code() != Errc::empty_background) throw;
      }
    }
    const ContrastTerm term = fb_loss(prototypes, queries, bank_, cfg.loss, sampling_rng_);
    fb = term.value;
    trace.fb_skipped = term.skipped;
    bank_.push(nrois);
    trace.nrois_pushed = nrois.size();
  }

  if (cfg.train.enable_if) {
    const NegativePool pool = build_negative_pool(seeds, z_fg.detach());
    const ContrastTerm term = if_loss(prototypes, queries, pool,
                                      cfg.data.num_classes, cfg.loss, sampling_rng_);
    ifg = term.value;
    trace.if_skipped = term.skipped;
  }

  if (cfg.train.enable_seg) {
    std::vector<double> mask;
    for (std::size_t b = 0; b < B; ++b) {
      const auto m = bg_pseudo_mask(cam, b);
      mask.insert(mask.end(), m.begin(), m.end());
    }
    seg = bg_seg_loss(z_bg, mask, model_.seg_head);
    trace.seg_skipped = false;
  }

  const Tensor total = total_loss(cls, fb, ifg, seg, cfg.loss);
  trace.loss = total_loss(LossParts{cls.item(), fb.item(), ifg.item(), seg.item()}, cfg.loss);
  trace.loss.total = total.item();

  // plain SGD
  const auto params = model_.parameters();
  for (const auto& p : params) Tensor(p.tensor).zero_grad();
  total.backward();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto v = t.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.train.learning_rate * g[i];
    t.zero_grad();
  }

  trace.bank_size = bank_.size();
  ++step_;
  return trace;
}

void Trainer::run(std::size_t steps,
                  const std::function<void(const StepTrace&)>& on_step) {
  for (std::size_t i = 0; i < steps; ++i) {
    const StepTrace t = step();
    if (on_step) on_step(t);
  }
}

std::vector<SeedMap> infer_seeds(const FbrModel& model,
                                 std::span<const Sample> samples,
                                 const RunConfig& config) {
  std::vector<SeedMap> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += kInferBatch) {
    const auto batch = samples.subspan(start, std::min(kInferBatch, samples.size() - start));
    std::vector<LabelVector> labels;
    for (const auto& s : batch) labels.push_back(s.label);
    const Tensor f = model.encoder.encode(stack_images(batch, {}));
    const CamStack cam = make_cam(f.detach(), ClassifierHead{model.classifier.weight.detach()},
                                  labels, config.tap.bg_score);
    const std::size_t factor = batch[0].image.dim(1) / f.dim(2);
    for (auto& s : seed_maps(upsample_cam(cam, factor, config.tap.bg_score)))
      out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fbr
