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

// fbr: dataset generation, training, evaluation and embedding export.
// Exit codes: 0 success, 2 usage/config/checkpoint error, 3 IO error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "fbr/fbr.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 2;
constexpr int kExitIo = 3;

struct Failure {
  int code;
};

int exit_code(fbr_status s) {
  if (s == FBR_OK) return kExitOk;
  return s == FBR_ERR_IO ? kExitIo : kExitUser;
}

void check(fbr_status s, const char* what) {
  if (s == FBR_OK) return;
  std::fprintf(stderr, "fbr: %s failed (%s): %s\n", what, fbr_status_name(s),
               fbr_last_error());
  throw Failure{exit_code(s)};
}

// Frees a C handle on scope exit.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() {
    if (p) Free(p);
  }
};

using Config = Handle<fbr_config, fbr_config_free>;
using Dataset = Handle<fbr_dataset, fbr_dataset_free>;
using Trainer = Handle<fbr_trainer, fbr_trainer_free>;
using Model = Handle<fbr_model, fbr_model_free>;

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::fprintf(stderr, "fbr: cannot create %s: %s\n", dir.c_str(), ec.message().c_str());
    throw Failure{kExitIo};
  }
}

// The worker cap; the library runs single-threaded, so any positive value
// is honoured trivially. Malformed values are still rejected.
void check_threads() {
  const char* v = std::getenv("FBR_THREADS");
  if (!v || !*v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) {
    std::fprintf(stderr, "fbr: FBR_THREADS must be a positive integer, got '%s'\n", v);
    throw Failure{kExitUser};
  }
}

// --config if given, else manifest.json next to the checkpoint.
std::string resolve_config(const std::string& config, const std::string& ckpt) {
  if (!config.empty()) return config;
  const fs::path m = fs::path(ckpt).parent_path() / "manifest.json";
  if (!fs::exists(m)) {
    std::fprintf(stderr, "fbr: no --config given and %s does not exist\n", m.string().c_str());
    throw Failure{kExitUser};
  }
  return m.string();
}

int cmd_train(const std::string& config_path, const std::string& out) {
  Config cfg;
  check(fbr_config_load(config_path.c_str(), &cfg.p), "loading config");
  make_dir(out);
  const std::string ckpt = (fs::path(out) / "model.ckpt").string();
  const std::string log = (fs::path(out) / "log.jsonl").string();
  const std::string manifest = (fs::path(out) / "manifest.json").string();
  const std::string metrics = (fs::path(out) / "metrics.json").string();

  std::error_code ec;
  fs::remove(log, ec);
  Trainer tr;
  check(fbr_trainer_create(cfg.p, &tr.p), "creating trainer");
  check(fbr_trainer_run(tr.p, fbr_config_steps(cfg.p), log.c_str()), "training");
  check(fbr_trainer_save(tr.p, ckpt.c_str()), "saving checkpoint");

  Model model;
  check(fbr_trainer_model(tr.p, &model.p), "snapshotting model");
  Dataset val;
  check(fbr_dataset_generate(cfg.p, "val", &val.p), "generating validation data");
  check(fbr_model_evaluate(model.p, val.p, out.c_str(), nullptr), "evaluating");

  const char* roles[] = {"checkpoint", "log", "metrics", "seeds"};
  const std::string seeds = (fs::path(out) / "seeds").string();
  const char* paths[] = {ckpt.c_str(), log.c_str(), metrics.c_str(), seeds.c_str()};
  check(fbr_manifest_write(cfg.p, manifest.c_str(), roles, paths, 4), "writing manifest");
  std::printf("trained %zu steps; bank %zu; outputs in %s\n", fbr_trainer_steps_done(tr.p),
              fbr_trainer_bank_size(tr.p), out.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& config, const std::string& split,
             const std::string& out) {
  Config cfg;
  check(fbr_config_load(resolve_config(config, ckpt).c_str(), &cfg.p), "loading config");
  Model model;
  check(fbr_model_load(cfg.p, ckpt.c_str(), &model.p), "loading checkpoint");
  Dataset data;
  check(fbr_dataset_generate(cfg.p, split.c_str(), &data.p), "generating data");
  make_dir(out);
  char* json = nullptr;
  check(fbr_model_evaluate(model.p, data.p, out.c_str(), &json), "evaluating");
  std::fputs(json, stdout);
  fbr_string_free(json);
  return kExitOk;
}

int cmd_gen_data(const std::string& config, const std::string& out, const std::string& split) {
  Config cfg;
  check(fbr_config_load(config.c_str(), &cfg.p), "loading config");
  make_dir(out);
  for (const char* s : {"train", "val"}) {
    if (split != "both" && split != s) continue;
    Dataset d;
    check(fbr_dataset_generate(cfg.p, s, &d.p), "generating data");
    check(fbr_dataset_write(d.p, out.c_str()), "writing data");
    std::printf("%s: %zu samples\n", s, fbr_dataset_size(d.p));
  }
  return kExitOk;
}

int cmd_export(const std::string& ckpt, const std::string& config, const std::string& split,
               const std::string& out, std::size_t stride) {
  Config cfg;
  check(fbr_config_load(resolve_config(config, ckpt).c_str(), &cfg.p), "loading config");
  Model model;
  check(fbr_model_load(cfg.p, ckpt.c_str(), &model.p), "loading checkpoint");
  Dataset data;
  check(fbr_dataset_generate(cfg.p, split.c_str(), &data.p), "generating data");
  const fs::path parent = fs::path(out).parent_path();
  if (!parent.empty()) make_dir(parent.string());
  check(fbr_model_export_embeddings(model.p, data.p, out.c_str(), stride),
        "exporting embeddings");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fore- and background contrast for weakly supervised segmentation seeds"};
  app.set_version_flag("--version", fbr_version());
  app.require_subcommand(1);

  std::string config, out, ckpt, split = "val", gen_split = "both";
  std::size_t stride = 2;

  auto* train = app.add_subcommand("train", "train a model and evaluate its seeds");
  train->add_option("--config", config, "JSON config or run manifest")->required();
  train->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate seeds of a checkpoint");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--config", config, "config (default: manifest.json beside the checkpoint)");
  eval->add_option("--out", out, "output directory")->required();

  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset");
  gen->add_option("--config", config, "JSON config")->required();
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--split", gen_split, "train, val or both")
      ->check(CLI::IsMember({"train", "val", "both"}));

  auto* exp = app.add_subcommand("export-emb", "export foreground embeddings as CSV");
  exp->add_option("--ckpt", ckpt, "checkpoint")->required();
  exp->add_option("--out", out, "CSV path")->required();
  exp->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  exp->add_option("--config", config, "config (default: manifest.json beside the checkpoint)");
  exp->add_option("--stride", stride, "keep every n-th feature row and column")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUser;
  }

  try {
    check_threads();
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(ckpt, config, split, out);
    if (*gen) return cmd_gen_data(config, out, gen_split);
    if (*exp) return cmd_export(ckpt, config, split, out, stride);
  } catch (const Failure& f) {
    return f.code;
  }
  return kExitUser;
}
