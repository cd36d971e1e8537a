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

#include "fbr/config.hpp"

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "fbr/error.hpp"
#include "fbr/rng.hpp"
#include "json.hpp"

namespace fbr {

using json = nlohmann::ordered_json;

const char* const kSeedStreams[4] = {"data", "init", "clustering", "sampling"};

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      fail(Errc::config, "config key '" + path_ + "' must be an object");
  }

  std::string key(const std::string& k) const {
    return path_.empty() ? k : path_ + "." + k;
  }

  const json* find(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void count(const std::string& k, std::size_t& out, std::size_t min = 0) {
    if (const json* v = find(k)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        fail(Errc::config, "config key '" + key(k) + "' must be a non-negative integer");
      out = v->get<std::size_t>();
    }
    if (out < min)
      fail(Errc::config, "config key '" + key(k) + "' must be >= " + std::to_string(min));
  }

  void real(const std::string& k, double& out) {
    if (const json* v = find(k)) {
      if (!v->is_number())
        fail(Errc::config, "config key '" + key(k) + "' must be a number");
      out = v->get<double>();
    }
  }

  void flag(const std::string& k, bool& out) {
    if (const json* v = find(k)) {
      if (!v->is_boolean())
        fail(Errc::config, "config key '" + key(k) + "' must be true or false");
      out = v->get<bool>();
    }
  }

  void counts(const std::string& k, std::vector<std::size_t>& out) {
    if (const json* v = find(k)) {
      if (!v->is_array())
        fail(Errc::config, "config key '" + key(k) + "' must be an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer() || e.get<long long>() < 0)
          fail(Errc::config, "config key '" + key(k) + "' must be an array of integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  std::optional<Section> child(const std::string& k) {
    if (const json* v = find(k)) return Section(*v, key(k));
    return std::nullopt;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        fail(Errc::config, "unknown config key '" + key(it.key()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_data(Section& s, SynthConfig& d) {
  s.count("num_classes", d.num_classes);
  s.count("textures", d.textures);
  std::vector<std::size_t> size{d.height, d.width};
  s.counts("image_size", size);
  if (size.size() != 2)
    fail(Errc::config, "config key '" + s.key("image_size") + "' must be [height, width]");
  d.height = size[0];
  d.width = size[1];
  if (const json* v = s.find("cooccurrence")) {
    if (v->is_number()) {
      d.cooccurrence_strength = v->get<double>();
      d.cooccurrence.clear();
    } else if (v->is_array()) {
      d.cooccurrence.clear();
      for (const auto& row : *v) {
        if (!row.is_array())
          fail(Errc::config, "config key '" + s.key("cooccurrence") +
                                 "' must be a number or a matrix");
        Vec r;
        for (const auto& e : row) {
          if (!e.is_number())
            fail(Errc::config, "config key '" + s.key("cooccurrence") +
                                   "' must contain numbers");
          r.push_back(e.get<double>());
        }
        d.cooccurrence.push_back(std::move(r));
      }
    } else {
      fail(Errc::config, "config key '" + s.key("cooccurrence") +
                             "' must be a number or a matrix");
    }
  }
  s.count("train_count", d.train_count, 1);
  s.count("val_count", d.val_count, 1);
}

}  // namespace

void TrainConfig::validate() const {
  require(steps >= 1, Errc::config, "train.steps must be >= 1");
  require(batch_size >= 1, Errc::config, "train.batch_size must be >= 1");
  require(learning_rate > 0.0, Errc::config, "train.learning_rate must be positive");
  require(n_prototype >= 1, Errc::config, "train.N_prototype must be >= 1");
  require(k >= 1, Errc::config, "train.K must be >= 1");
  require(kmeans_restarts >= 1, Errc::config, "train.kmeans_restarts must be >= 1");
  require(bank_capacity >= 1, Errc::config, "train.bank_capacity must be >= 1");
}

void EvalConfig::validate() const {
  require(!widths.empty(), Errc::config, "eval.widths must not be empty");
  for (auto w : widths) require(w >= 1, Errc::config, "eval.widths must be >= 1");
  require(export_stride >= 1, Errc::config, "eval.export_stride must be >= 1");
}

void RunConfig::validate() const {
  data.validate();
  encoder.validate();
  require(output_dim >= 1, Errc::config, "heads.output_dim must be >= 1");
  tap.validate();
  loss.validate();
  train.validate();
  eval.validate();
}

std::uint64_t RunConfig::sub_seed(const char* stream) const {
  return derive_seed(seed, stream);
}

RunConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(Errc::config, std::string("config is not valid JSON: ") + e.what());
  }
  // A manifest carries its config under "config".
  if (doc.is_object() && doc.contains("config") && doc.contains("version"))
    doc = doc["config"];

  RunConfig c;
  Section root(doc, "");
  if (const json* v = root.find("seed")) {
    if (!v->is_number_unsigned())
      fail(Errc::config, "config key 'seed' must be a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }
  if (auto s = root.child("data")) {
    read_data(*s, c.data);
    s->finish();
  }
  if (auto s = root.child("encoder")) {
    s->count("in_channels", c.encoder.in_channels);
    s->count("feature_dim", c.encoder.feature_dim);
    s->count("downsample_factor", c.encoder.downsample_factor);
    s->counts("hidden", c.encoder.hidden);
    s->finish();
  }
  if (auto s = root.child("heads")) {
    s->count("output_dim", c.output_dim);
    s->finish();
  }
  if (auto s = root.child("tap")) {
    s->real("alpha", c.tap.alpha);
    s->real("bg_score", c.tap.bg_score);
    s->real("beta", c.tap.beta);
    s->finish();
  }
  if (auto s = root.child("loss")) {
    s->real("tau_bg", c.loss.tau_bg);
    s->real("tau_fg", c.loss.tau_fg);
    s->real("lambda1", c.loss.lambda1);
    s->real("lambda2", c.loss.lambda2);
    s->real("alpha_seg", c.loss.alpha_seg);
    s->count("negatives", c.loss.negatives);
    s->finish();
  }
  if (auto s = root.child("train")) {
    s->count("steps", c.train.steps);
    s->count("batch_size", c.train.batch_size);
    s->real("learning_rate", c.train.learning_rate);
    s->count("N_prototype", c.train.n_prototype);
    s->count("K", c.train.k);
    s->count("kmeans_restarts", c.train.kmeans_restarts);
    s->count("bank_capacity", c.train.bank_capacity);
    s->flag("enable_fb", c.train.enable_fb);
    s->flag("enable_if", c.train.enable_if);
    s->flag("enable_seg", c.train.enable_seg);
    s->flag("hflip", c.train.hflip);
    s->finish();
  }
  if (auto s = root.child("eval")) {
    s->counts("widths", c.eval.widths);
    s->count("export_stride", c.eval.export_stride);
    s->finish();
  }
  root.finish();

  c.data.rng_seed = c.sub_seed("data");
  c.encoder.rng_seed = c.sub_seed("init");
  c.validate();
  return c;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) fail(Errc::io, "failed reading " + path);
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Errc::io, "cannot write " + path);
  os << text;
  if (!os) fail(Errc::io, "failed writing " + path);
}

RunConfig load_config(const std::string& path) { return parse_config(read_text(path)); }

namespace {

json config_object(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  json data;
  data["num_classes"] = c.data.num_classes;
  data["textures"] = c.data.textures;
  data["image_size"] = {c.data.height, c.data.width};
  if (c.data.cooccurrence.empty())
    data["cooccurrence"] = c.data.cooccurrence_strength;
  else
    data["cooccurrence"] = c.data.cooccurrence;
  data["train_count"] = c.data.train_count;
  data["val_count"] = c.data.val_count;
  j["data"] = data;
  j["encoder"] = {{"in_channels", c.encoder.in_channels},
                  {"feature_dim", c.encoder.feature_dim},
                  {"downsample_factor", c.encoder.downsample_factor},
                  {"hidden", c.encoder.hidden}};
  j["heads"] = {{"output_dim", c.output_dim}};
  j["tap"] = {{"alpha", c.tap.alpha}, {"bg_score", c.tap.bg_score}, {"beta", c.tap.beta}};
  j["loss"] = {{"tau_bg", c.loss.tau_bg},     {"tau_fg", c.loss.tau_fg},
               {"lambda1", c.loss.lambda1},   {"lambda2", c.loss.lambda2},
               {"alpha_seg", c.loss.alpha_seg}, {"negatives", c.loss.negatives}};
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"N_prototype", c.train.n_prototype},
                {"K", c.train.k},
                {"kmeans_restarts", c.train.kmeans_restarts},
                {"bank_capacity", c.train.bank_capacity},
                {"enable_fb", c.train.enable_fb},
                {"enable_if", c.train.enable_if},
                {"enable_seg", c.train.enable_seg},
                {"hflip", c.train.hflip}};
  j["eval"] = {{"widths", c.eval.widths}, {"export_stride", c.eval.export_stride}};
  return j;
}

}  // namespace

std::string config_json(const RunConfig& config) {
  return config_object(config).dump(2) + "\n";
}

std::string manifest_json(const RunManifest& m) {
  json j;
  j["version"] = m.version;
  j["config"] = config_object(m.config);
  json seeds;
  seeds["root"] = m.config.seed;
  for (const char* s : kSeedStreams) seeds[s] = m.config.sub_seed(s);
  j["seeds"] = seeds;
  json art = json::object();
  for (const auto& [k, v] : m.artifacts) art[k] = v;
  j["artifacts"] = art;
  return j.dump(2) + "\n";
}

const char* version_string() { return "fbr 0.1.0"; }

}  // namespace fbr
