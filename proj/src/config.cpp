/*
 * Copyright 2026 The ecgcls Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ecgcls/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"

namespace ecgcls {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(Errc::ConfigInvalid, msg); }

void check_keys(const YAML::Node& node, std::string_view section,
                std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) invalid(std::string(section) + ": expected a mapping");
  const std::set<std::string_view> keys(allowed);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!keys.count(key)) invalid(std::string(section) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node[key]) out = node[key].as<T>();
}

template <typename T>
void read_list(const YAML::Node& node, const char* key, std::vector<T>& out) {
  if (!node[key]) return;
  out.clear();
  if (node[key].IsSequence()) {
    for (const auto& v : node[key]) out.push_back(v.as<T>());
  } else {
    out.push_back(node[key].as<T>());
  }
}

Range read_range(const YAML::Node& n) {
  if (n.IsSequence() && n.size() == 2) return {n[0].as<double>(), n[1].as<double>()};
  if (n.IsScalar()) return parse_range(n.as<std::string>());
  invalid("range must be [lo, hi] or \"lo:hi\"");
}

std::string_view interpolation_name(Interpolation i) {
  return i == Interpolation::Nearest ? "nearest" : "bilinear";
}
std::string_view normalize_name(Normalize n) {
  return n == Normalize::UnitRange ? "unit_range" : "none";
}
std::string_view density_name(DensityMode d) {
  return d == DensityMode::RedChannel ? "red_channel" : "luminance";
}

template <typename E>
E parse_enum(const std::string& text, std::initializer_list<std::pair<std::string_view, E>> options,
             std::string_view what) {
  for (const auto& [name, value] : options) {
    if (text == name) return value;
  }
  invalid("unknown " + std::string(what) + " '" + text + "'");
}

}  // namespace

RunConfig parse_config(std::string_view yaml) {
  RunConfig cfg;
  try {
    const YAML::Node root = YAML::Load(std::string(yaml));
    if (root.IsNull()) return cfg;
    check_keys(root, "config",
               {"seed", "log_level", "data_root", "manifest", "ingest", "preprocess", "augment",
                "model", "train", "gridsearch", "evaluate"});
    read(root, "seed", cfg.seed);
    read(root, "log_level", cfg.log_level);
    if (root["data_root"]) cfg.data_root = root["data_root"].as<std::string>();
    if (root["manifest"]) cfg.manifest = root["manifest"].as<std::string>();

    if (const auto n = root["ingest"]) {
      check_keys(n, "ingest", {"labels", "ratios", "k"});
      read(n, "labels", cfg.ingest.labels);
      read(n, "k", cfg.ingest.k);
      if (n["ratios"]) {
        const auto r = n["ratios"];
        if (!r.IsSequence() || r.size() != 3) invalid("ingest.ratios: expected [train, test, val]");
        cfg.ingest.ratios = {r[0].as<double>(), r[1].as<double>(), r[2].as<double>()};
      }
    }
    if (const auto n = root["preprocess"]) {
      check_keys(n, "preprocess",
                 {"crop", "threshold", "target", "interpolation", "normalize", "density"});
      auto& p = cfg.preprocess;
      if (n["crop"]) {
        const auto c = n["crop"];
        if (!c.IsSequence() || c.size() != 4) invalid("preprocess.crop: expected [x, y, w, h]");
        p.crop_rect = Rect{c[0].as<int>(), c[1].as<int>(), c[2].as<int>(), c[3].as<int>()};
      }
      read(n, "threshold", p.density_threshold);
      if (n["target"]) {
        const auto t = n["target"];
        if (!t.IsSequence() || t.size() != 2) invalid("preprocess.target: expected [w, h]");
        p.target = {t[0].as<int>(), t[1].as<int>()};
      }
      if (n["interpolation"]) {
        p.interpolation = parse_enum<Interpolation>(
            n["interpolation"].as<std::string>(),
            {{"nearest", Interpolation::Nearest}, {"bilinear", Interpolation::Bilinear}},
            "interpolation");
      }
      if (n["normalize"]) {
        p.normalize = parse_enum<Normalize>(
            n["normalize"].as<std::string>(),
            {{"none", Normalize::None}, {"unit_range", Normalize::UnitRange}}, "normalize mode");
      }
      if (n["density"]) {
        p.density_mode = parse_enum<DensityMode>(
            n["density"].as<std::string>(),
            {{"luminance", DensityMode::Luminance}, {"red_channel", DensityMode::RedChannel}},
            "density mode");
      }
    }
    if (const auto n = root["augment"]) {
      check_keys(n, "augment",
                 {"brightness", "zoom", "mirror_horizontal", "mirror_vertical", "copies", "seed"});
      auto& a = cfg.augment;
      if (n["brightness"]) a.brightness = read_range(n["brightness"]);
      if (n["zoom"]) a.zoom = read_range(n["zoom"]);
      read(n, "mirror_horizontal", a.mirror_horizontal);
      read(n, "mirror_vertical", a.mirror_vertical);
      read(n, "copies", a.copies_per_image);
      read(n, "seed", a.seed);
    }
    if (const auto n = root["model"]) {
      check_keys(n, "model", {"backbone", "init", "weights", "init_seed", "mode", "policy"});
      auto& m = cfg.model;
      read(n, "backbone", m.backbone);
      if (n["init"]) {
        m.pretrained = parse_enum<bool>(n["init"].as<std::string>(),
                                        {{"pretrained", true}, {"random", false}}, "init");
      }
      if (n["weights"]) m.weights = n["weights"].as<std::string>();
      read(n, "init_seed", m.init_seed);
      read(n, "mode", m.mode);
      if (n["policy"]) m.policy = n["policy"].as<std::string>();
    }
    if (const auto n = root["train"]) {
      check_keys(n, "train", {"epochs", "batch_size", "dropout", "neurons", "learning_rate"});
      read(n, "epochs", cfg.train.epochs);
      read(n, "batch_size", cfg.train.batch_size);
      read(n, "dropout", cfg.train.dropout);
      read(n, "neurons", cfg.train.neurons);
      read(n, "learning_rate", cfg.train.learning_rate);
    }
    if (const auto n = root["gridsearch"]) {
      check_keys(n, "gridsearch",
                 {"epochs", "batch_size", "dropout", "neurons", "learning_rate", "k", "workers"});
      auto& g = cfg.search.grid;
      read_list(n, "epochs", g.epochs_set);
      read_list(n, "batch_size", g.batch_set);
      read_list(n, "dropout", g.dropout_set);
      read_list(n, "neurons", g.neurons_set);
      read_list(n, "learning_rate", g.lr_set);
      read(n, "k", cfg.search.k);
      read(n, "workers", cfg.search.workers);
    }
    if (const auto n = root["evaluate"]) {
      check_keys(n, "evaluate", {"threshold"});
      read(n, "threshold", cfg.threshold);
    }
  } catch (const YAML::Exception& e) {
    invalid(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_yaml(const RunConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::Key << "log_level" << YAML::Value << cfg.log_level;
  if (cfg.data_root) out << YAML::Key << "data_root" << YAML::Value << cfg.data_root->string();
  if (cfg.manifest) out << YAML::Key << "manifest" << YAML::Value << cfg.manifest->string();

  out << YAML::Key << "ingest" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "labels" << YAML::Value << cfg.ingest.labels;
  out << YAML::Key << "ratios" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << cfg.ingest.ratios.train << cfg.ingest.ratios.test << cfg.ingest.ratios.val
      << YAML::EndSeq;
  out << YAML::Key << "k" << YAML::Value << cfg.ingest.k;
  out << YAML::EndMap;

  const auto& p = cfg.preprocess;
  out << YAML::Key << "preprocess" << YAML::Value << YAML::BeginMap;
  if (p.crop_rect) {
    out << YAML::Key << "crop" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.crop_rect->x
        << p.crop_rect->y << p.crop_rect->w << p.crop_rect->h << YAML::EndSeq;
  }
  out << YAML::Key << "threshold" << YAML::Value << p.density_threshold;
  out << YAML::Key << "target" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.target.width
      << p.target.height << YAML::EndSeq;
  out << YAML::Key << "interpolation" << YAML::Value << std::string(interpolation_name(p.interpolation));
  out << YAML::Key << "normalize" << YAML::Value << std::string(normalize_name(p.normalize));
  out << YAML::Key << "density" << YAML::Value << std::string(density_name(p.density_mode));
  out << YAML::EndMap;

  const auto& a = cfg.augment;
  out << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "brightness" << YAML::Value << YAML::Flow << YAML::BeginSeq << a.brightness.lo
      << a.brightness.hi << YAML::EndSeq;
  out << YAML::Key << "zoom" << YAML::Value << YAML::Flow << YAML::BeginSeq << a.zoom.lo << a.zoom.hi
      << YAML::EndSeq;
  out << YAML::Key << "mirror_horizontal" << YAML::Value << a.mirror_horizontal;
  out << YAML::Key << "mirror_vertical" << YAML::Value << a.mirror_vertical;
  out << YAML::Key << "copies" << YAML::Value << a.copies_per_image;
  out << YAML::Key << "seed" << YAML::Value << a.seed;
  out << YAML::EndMap;

  const auto& m = cfg.model;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "backbone" << YAML::Value << m.backbone;
  out << YAML::Key << "init" << YAML::Value << (m.pretrained ? "pretrained" : "random");
  if (m.weights) out << YAML::Key << "weights" << YAML::Value << m.weights->string();
  out << YAML::Key << "init_seed" << YAML::Value << m.init_seed;
  out << YAML::Key << "mode" << YAML::Value << m.mode;
  if (m.policy) out << YAML::Key << "policy" << YAML::Value << *m.policy;
  out << YAML::EndMap;

  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << cfg.train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.train.batch_size;
  out << YAML::Key << "dropout" << YAML::Value << cfg.train.dropout;
  out << YAML::Key << "neurons" << YAML::Value << cfg.train.neurons;
  out << YAML::Key << "learning_rate" << YAML::Value << cfg.train.learning_rate;
  out << YAML::EndMap;

  const auto& g = cfg.search.grid;
  out << YAML::Key << "gridsearch" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << YAML::Flow << g.epochs_set;
  out << YAML::Key << "batch_size" << YAML::Value << YAML::Flow << g.batch_set;
  out << YAML::Key << "dropout" << YAML::Value << YAML::Flow << g.dropout_set;
  out << YAML::Key << "neurons" << YAML::Value << YAML::Flow << g.neurons_set;
  out << YAML::Key << "learning_rate" << YAML::Value << YAML::Flow << g.lr_set;
  out << YAML::Key << "k" << YAML::Value << cfg.search.k;
  out << YAML::Key << "workers" << YAML::Value << cfg.search.workers;
  out << YAML::EndMap;

  out << YAML::Key << "evaluate" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "threshold" << YAML::Value << cfg.threshold;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const RunConfig& config) {
  return to_hex(fnv1a(config_to_yaml(config)));
}

}  // namespace ecgcls
