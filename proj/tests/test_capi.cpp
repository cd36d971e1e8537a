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


// The shared library through its C interface, and the CLI on top of it.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fbr/fbr.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "seed": 3,
  "data": {"image_size": [32, 32], "train_count": 8, "val_count": 4},
  "encoder": {"feature_dim": 8, "hidden": [4, 8]},
  "heads": {"output_dim": 8},
  "loss": {"negatives": 8},
  "train": {"steps": 3, "batch_size": 2, "bank_capacity": 64},
  "eval": {"widths": [1, 2]}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fbr_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FBR_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(fbr_version()).rfind("fbr ", 0) == 0);
  CHECK(std::string(fbr_status_name(FBR_ERR_IO)) == "io");
  CHECK(std::string(fbr_status_name(FBR_OK)) == "ok");
}

TEST_CASE("config errors surface as status codes with a message") {
  fbr_config* cfg = nullptr;
  CHECK(fbr_config_parse(R"({"train": {"K": 0}})", &cfg) == FBR_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(fbr_last_error()).find("K") != std::string::npos);
  CHECK(fbr_config_parse(nullptr, &cfg) == FBR_ERR_ARGUMENT);
  CHECK(fbr_config_load("/nonexistent/fbr.json", &cfg) == FBR_ERR_IO);
  REQUIRE(fbr_config_parse(kTiny, &cfg) == FBR_OK);
  CHECK(fbr_config_steps(cfg) == 3);
  char* json = nullptr;
  REQUIRE(fbr_config_to_json(cfg, &json) == FBR_OK);
  CHECK(nlohmann::json::parse(json).at("loss").at("lambda1") == 0.1);
  fbr_string_free(json);
  fbr_config_free(cfg);
}

TEST_CASE("train, checkpoint, evaluate and export through handles") {
  const fs::path dir = scratch("flow");
  fbr_config* cfg = nullptr;
  REQUIRE(fbr_config_parse(kTiny, &cfg) == FBR_OK);
  fbr_dataset* val = nullptr;
  REQUIRE(fbr_dataset_generate(cfg, "val", &val) == FBR_OK);
  CHECK(fbr_dataset_size(val) == 4);
  fbr_dataset* bad = nullptr;
  CHECK(fbr_dataset_generate(cfg, "test", &bad) == FBR_ERR_ARGUMENT);

  REQUIRE(fbr_dataset_write(val, dir.c_str()) == FBR_OK);
  CHECK(fs::exists(dir / "val" / "00000.ppm"));
  CHECK(fs::exists(dir / "val" / "00003_mask.pgm"));
  CHECK(slurp(dir / "val" / "labels.csv").rfind("index,c1,c2,c3,c4\n", 0) == 0);

  fbr_trainer* tr = nullptr;
  REQUIRE(fbr_trainer_create(cfg, &tr) == FBR_OK);
  char* trace = nullptr;
  REQUIRE(fbr_trainer_step(tr, &trace) == FBR_OK);
  CHECK(nlohmann::json::parse(trace).at("skipped").at("fb") == true);
  fbr_string_free(trace);
  const std::string log = (dir / "log.jsonl").string();
  REQUIRE(fbr_trainer_run(tr, 2, log.c_str()) == FBR_OK);
  CHECK(fbr_trainer_steps_done(tr) == 3);
  std::ifstream ls(log);
  int lines = 0;
  for (std::string l; std::getline(ls, l);) ++lines;
  CHECK(lines == 2);
  const std::string ckpt = (dir / "model.ckpt").string();
  REQUIRE(fbr_trainer_save(tr, ckpt.c_str()) == FBR_OK);

  fbr_model* live = nullptr;
  REQUIRE(fbr_trainer_model(tr, &live) == FBR_OK);
  fbr_model* loaded = nullptr;
  REQUIRE(fbr_model_load(cfg, ckpt.c_str(), &loaded) == FBR_OK);
  char* m1 = nullptr;
  char* m2 = nullptr;
  REQUIRE(fbr_model_evaluate(live, val, (dir / "e1").c_str(), &m1) == FBR_OK);
  REQUIRE(fbr_model_evaluate(loaded, val, (dir / "e2").c_str(), &m2) == FBR_OK);
  CHECK(std::string(m1) == std::string(m2));
  const auto report = nlohmann::json::parse(m1);
  CHECK(report.at("images") == 4);
  CHECK(report.at("miou").get<double>() >= 0.0);
  CHECK(report.at("trimap").size() == 2);
  fbr_string_free(m1);
  fbr_string_free(m2);
  CHECK(slurp(dir / "e1" / "seeds" / "00001.pgm") == slurp(dir / "e2" / "seeds" / "00001.pgm"));
  CHECK(slurp(dir / "e1" / "trimap.csv").rfind("width,value\n", 0) == 0);

  const std::string csv = (dir / "emb.csv").string();
  REQUIRE(fbr_model_export_embeddings(loaded, val, csv.c_str(), 2) == FBR_OK);
  std::ifstream es(csv);
  std::string header;
  std::getline(es, header);
  CHECK(header.rfind("image,row,col,label,f0,", 0) == 0);
  int rows = 0;
  for (std::string l; std::getline(es, l);) {
    ++rows;
    const int label = std::stoi(l.substr(l.find(',', l.find(',', l.find(',') + 1) + 1) + 1));
    CHECK(label >= 1);
    CHECK(label <= 5);
  }
  CHECK(rows == 4 * 4 * 4);  // 8x8 feature grid, stride 2
  const std::string csv2 = (dir / "emb2.csv").string();
  REQUIRE(fbr_model_export_embeddings(loaded, val, csv2.c_str(), 2) == FBR_OK);
  CHECK(slurp(csv) == slurp(csv2));

  // a fresh, untrained model evaluates to finite metrics
  fbr_model* fresh = nullptr;
  REQUIRE(fbr_model_create(cfg, &fresh) == FBR_OK);
  CHECK(fbr_model_evaluate(fresh, val, (dir / "e3").c_str(), nullptr) == FBR_OK);

  // corrupt checkpoint
  { std::ofstream(dir / "junk.ckpt") << "not a checkpoint"; }
  fbr_model* junk = nullptr;
  CHECK(fbr_model_load(cfg, (dir / "junk.ckpt").c_str(), &junk) == FBR_ERR_CHECKPOINT);
  CHECK(junk == nullptr);

  const char* roles[] = {"checkpoint"};
  const char* paths[] = {ckpt.c_str()};
  REQUIRE(fbr_manifest_write(cfg, (dir / "manifest.json").c_str(), roles, paths, 1) == FBR_OK);
  const auto man = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(man.at("artifacts").at("checkpoint") == ckpt);
  CHECK(man.at("seeds").contains("clustering"));

  fbr_model_free(fresh);
  fbr_model_free(loaded);
  fbr_model_free(live);
  fbr_trainer_free(tr);
  fbr_dataset_free(val);
  fbr_config_free(cfg);
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes and outputs") {
  const fs::path dir = scratch("cli");
  const fs::path out = dir / "out.txt";
  { std::ofstream(dir / "tiny.json") << kTiny; }
  { std::ofstream(dir / "badk.json") << R"({"train": {"K": 0}})"; }
  { std::ofstream(dir / "typo.json") << R"({"loss": {"lamda1": 0.1}})"; }

  CHECK(run_cli("train --config " + (dir / "badk.json").string() + " --out " + (dir / "r").string(), out) == 2);
  CHECK(slurp(out).find("K") != std::string::npos);
  CHECK(run_cli("train --config " + (dir / "typo.json").string() + " --out " + (dir / "r").string(), out) == 2);
  CHECK(slurp(out).find("loss.lamda1") != std::string::npos);
  CHECK(run_cli("train --config " + (dir / "missing.json").string() + " --out " + (dir / "r").string(), out) == 3);
  CHECK(run_cli("frobnicate", out) == 2);

  const fs::path run = dir / "run";
  REQUIRE(run_cli("train --config " + (dir / "tiny.json").string() + " --out " + run.string(), out) == 0);
  for (const char* f : {"model.ckpt", "log.jsonl", "manifest.json", "metrics.json", "trimap.csv",
                        "boundary_f.csv"})
    CHECK(fs::exists(run / f));
  // missing lambda1 -> default recorded in the manifest
  CHECK(nlohmann::json::parse(slurp(run / "manifest.json")).at("config").at("loss").at("lambda1") == 0.1);

  CHECK(run_cli("eval --ckpt " + (run / "model.ckpt").string() + " --split val --out " +
                    (dir / "ev").string(),
                out) == 0);
  CHECK(slurp(dir / "ev" / "metrics.json") == slurp(run / "metrics.json"));
  CHECK(run_cli("export-emb --ckpt " + (run / "model.ckpt").string() + " --out " +
                    (dir / "emb.csv").string(),
                out) == 0);
  CHECK(run_cli("gen-data --config " + (dir / "tiny.json").string() + " --out " +
                    (dir / "data").string() + " --split val",
                out) == 0);
  CHECK(fs::exists(dir / "data" / "val" / "labels.csv"));

  { std::ofstream(dir / "bad.ckpt") << "garbage"; }
  CHECK(run_cli("eval --ckpt " + (dir / "bad.ckpt").string() + " --config " +
                    (dir / "tiny.json").string() + " --out " + (dir / "ev2").string(),
                out) == 2);
  CHECK(run_cli("eval --ckpt " + (dir / "none.ckpt").string() + " --config " +
                    (dir / "tiny.json").string() + " --out " + (dir / "ev3").string(),
                out) == 3);
  fs::remove_all(dir);
}
