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

#include "fbr/fbr.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "fbr/config.hpp"
#include "fbr/error.hpp"
#include "fbr/eval.hpp"
#include "fbr/trainer.hpp"

struct fbr_config {
  fbr::RunConfig value;
};

struct fbr_dataset {
  fbr::RunConfig config;
  fbr::Split split;
  std::vector<fbr::Sample> samples;
};

struct fbr_trainer {
  explicit fbr_trainer(const fbr::RunConfig& c)
      : trainer(c, fbr::generate(c.data, fbr::Split::train)) {}
  fbr::Trainer trainer;
};

struct fbr_model {
  fbr::RunConfig config;
  fbr::FbrModel model;
  bool has_heads = true;
};

namespace {

thread_local std::string g_last_error;

fbr_status status_of(fbr::Errc code) {
  switch (code) {
    case fbr::Errc::config:
      return FBR_ERR_CONFIG;
    case fbr::Errc::io:
      return FBR_ERR_IO;
    case fbr::Errc::checkpoint:
      return FBR_ERR_CHECKPOINT;
    case fbr::Errc::argument:
      return FBR_ERR_ARGUMENT;
    default:
      return FBR_ERR_INTERNAL;
  }
}

template <typename Fn>
fbr_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return FBR_OK;
  } catch (const fbr::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FBR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FBR_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  fbr::require(p != nullptr, fbr::Errc::argument, std::string(what) + " is null");
}

void make_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) fbr::fail(fbr::Errc::io, "cannot create " + p.string() + ": " + ec.message());
}

}  // namespace

extern "C" {

const char* fbr_version(void) { return fbr::version_string(); }

const char* fbr_last_error(void) { return g_last_error.c_str(); }

const char* fbr_status_name(fbr_status status) {
  switch (status) {
    case FBR_OK: return "ok";
    case FBR_ERR_ARGUMENT: return "argument";
    case FBR_ERR_CONFIG: return "config";
    case FBR_ERR_IO: return "io";
    case FBR_ERR_CHECKPOINT: return "checkpoint";
    case FBR_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void fbr_string_free(char* s) { std::free(s); }

fbr_status fbr_config_parse(const char* json, fbr_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    auto c = std::make_unique<fbr_config>();
    c->value = fbr::parse_config(json);
    *out = c.release();
  });
}

fbr_status fbr_config_load(const char* path, fbr_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto c = std::make_unique<fbr_config>();
    c->value = fbr::load_config(path);
    *out = c.release();
  });
}

fbr_status fbr_config_to_json(const fbr_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup_string(fbr::config_json(config->value));
  });
}

size_t fbr_config_steps(const fbr_config* config) {
  return config ? config->value.train.steps : 0;
}

void fbr_config_free(fbr_config* config) { delete config; }

fbr_status fbr_dataset_generate(const fbr_config* config, const char* split,
                                fbr_dataset** out) {
  return guarded([&] {
    need(config, "config");
    need(split, "split");
    need(out, "out");
    auto d = std::make_unique<fbr_dataset>();
    d->config = config->value;
    d->split = fbr::parse_split(split);
    d->samples = fbr::generate(d->config.data, d->split);
    *out = d.release();
  });
}

size_t fbr_dataset_size(const fbr_dataset* dataset) {
  return dataset ? dataset->samples.size() : 0;
}

fbr_status fbr_dataset_write(const fbr_dataset* dataset, const char* dir) {
  return guarded([&] {
    need(dataset, "dataset");
    need(dir, "dir");
    fbr::write_dataset(dir, dataset->samples, dataset->config.data, dataset->split);
  });
}

void fbr_dataset_free(fbr_dataset* dataset) { delete dataset; }

fbr_status fbr_trainer_create(const fbr_config* config, fbr_trainer** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new fbr_trainer(config->value);
  });
}

fbr_status fbr_trainer_step(fbr_trainer* trainer, char** trace_json) {
  return guarded([&] {
    need(trainer, "trainer");
    const fbr::StepTrace t = trainer->trainer.step();
    if (trace_json) *trace_json = dup_string(fbr::trace_json(t));
  });
}

fbr_status fbr_trainer_run(fbr_trainer* trainer, size_t steps, const char* log_path) {
  return guarded([&] {
    need(trainer, "trainer");
    std::ofstream log;
    if (log_path) {
      log.open(log_path, std::ios::app);
      if (!log) fbr::fail(fbr::Errc::io, std::string("cannot write ") + log_path);
    }
    trainer->trainer.run(steps, [&](const fbr::StepTrace& t) {
      if (!log_path) return;
      log << fbr::trace_json(t) << '\n';
      if (!log) fbr::fail(fbr::Errc::io, std::string("failed writing ") + log_path);
    });
  });
}

size_t fbr_trainer_steps_done(const fbr_trainer* trainer) {
  return trainer ? trainer->trainer.steps_done() : 0;
}

size_t fbr_trainer_bank_size(const fbr_trainer* trainer) {
  return trainer ? trainer->trainer.bank().size() : 0;
}

fbr_status fbr_trainer_save(const fbr_trainer* trainer, const char* checkpoint_path) {
  return guarded([&] {
    need(trainer, "trainer");
    need(checkpoint_path, "checkpoint_path");
    fbr::save_checkpoint(checkpoint_path, trainer->trainer.model().parameters());
  });
}

fbr_status fbr_trainer_model(const fbr_trainer* trainer, fbr_model** out) {
  return guarded([&] {
    need(trainer, "trainer");
    need(out, "out");
    auto m = std::make_unique<fbr_model>();
    m->config = trainer->trainer.config();
    m->model = fbr::FbrModel::init(m->config);
    m->model.load(trainer->trainer.model().parameters());
    *out = m.release();
  });
}

void fbr_trainer_free(fbr_trainer* trainer) { delete trainer; }

fbr_status fbr_model_create(const fbr_config* config, fbr_model** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    auto m = std::make_unique<fbr_model>();
    m->config = config->value;
    m->model = fbr::FbrModel::init(m->config);
    *out = m.release();
  });
}

fbr_status fbr_model_load(const fbr_config* config, const char* checkpoint_path,
                          fbr_model** out) {
  return guarded([&] {
    need(config, "config");
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    auto m = std::make_unique<fbr_model>();
    m->config = config->value;
    m->model = fbr::FbrModel::init(m->config);
    const auto params = fbr::load_checkpoint(checkpoint_path);
    m->model.load(params);
    m->has_heads = false;
    for (const auto& p : params)
      if (p.name == "fg_head.weight") m->has_heads = true;
    *out = m.release();
  });
}

fbr_status fbr_model_evaluate(const fbr_model* model, const fbr_dataset* dataset,
                              const char* out_dir, char** metrics_json) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(out_dir, "out_dir");
    fbr::require(dataset->config.data.num_classes == model->config.data.num_classes,
                 fbr::Errc::argument, "evaluate: dataset and model class counts differ");
    namespace fs = std::filesystem;
    const fs::path root(out_dir);
    make_dir(root / "seeds");
    const auto seeds = fbr::infer_seeds(model->model, dataset->samples, model->config);
    const auto report = fbr::evaluate(seeds, dataset->samples, dataset->config.data,
                                      model->config.eval.widths);
    char name[32];
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      std::snprintf(name, sizeof(name), "%05zu.pgm", dataset->samples[i].index);
      fbr::write_seed_pgm((root / "seeds" / name).string(), seeds[i]);
    }
    const std::string json = fbr::report_json(report);
    fbr::write_text((root / "metrics.json").string(), json);
    fbr::write_text((root / "trimap.csv").string(), fbr::curve_csv(report.trimap));
    fbr::write_text((root / "boundary_f.csv").string(), fbr::curve_csv(report.boundary_f));
    if (metrics_json) *metrics_json = dup_string(json);
  });
}

fbr_status fbr_model_export_embeddings(const fbr_model* model, const fbr_dataset* dataset,
                                       const char* csv_path, size_t stride) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(csv_path, "csv_path");
    fbr::require(stride >= 1, fbr::Errc::argument, "export: stride must be >= 1");
    fbr::require(model->has_heads, fbr::Errc::checkpoint,
                 "export: checkpoint has no foreground projection head");
    std::ofstream os(csv_path, std::ios::trunc);
    if (!os) fbr::fail(fbr::Errc::io, std::string("cannot write ") + csv_path);
    const std::size_t D = model->model.fg_head.output_dim();
    os << "image,row,col,label";
    for (std::size_t d = 0; d < D; ++d) os << ",f" << d;
    os << '\n';
    char buf[32];
    for (const auto& s : dataset->samples) {
      const fbr::Tensor f = model->model.encoder.encode(s.image).detach();
      const fbr::CamStack cam = fbr::make_cam(
          f, fbr::ClassifierHead{model->model.classifier.weight.detach()}, s.label,
          model->config.tap.bg_score);
      const fbr::SeedMap seeds = fbr::seed_map(cam);
      const fbr::Tensor z = fbr::project(f, model->model.fg_head).detach();
      const std::size_t H = z.dim(1), W = z.dim(2);
      const auto v = z.data();
      for (std::size_t y = 0; y < H; y += stride)
        for (std::size_t x = 0; x < W; x += stride) {
          os << s.index << ',' << y << ',' << x << ',' << seeds.at(y, x);
          for (std::size_t d = 0; d < D; ++d) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v[(d * H + y) * W + x]);
            os << buf;
          }
          os << '\n';
        }
    }
    if (!os) fbr::fail(fbr::Errc::io, std::string("failed writing ") + csv_path);
  });
}

void fbr_model_free(fbr_model* model) { delete model; }

fbr_status fbr_manifest_write(const fbr_config* config, const char* path,
                              const char* const* roles, const char* const* paths,
                              size_t n) {
  return guarded([&] {
    need(config, "config");
    need(path, "path");
    fbr::RunManifest m;
    m.config = config->value;
    m.version = fbr::version_string();
    for (size_t i = 0; i < n; ++i) {
      need(roles[i], "role");
      need(paths[i], "artifact path");
      m.artifacts[roles[i]] = paths[i];
    }
    fbr::write_text(path, fbr::manifest_json(m));
  });
}

}  // extern "C"
