#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/attacks/attacks.hpp"
#include "lfaa/classifiers/classifier.hpp"
#include "lfaa/core/errors.hpp"
#include "lfaa/imaging/corpus.hpp"
#include "lfaa/trainer/trainer.hpp"

namespace lfaa::cli {

// Precedence, lowest first: built-in defaults, the --config file, --set key=value
// overrides (in command-line order), then the dedicated --seed / --out flags.

struct ModelEntry {
  std::string id;
  std::string arch;
  int width = kDefaultClassifierWidth;
  std::string checkpoint;  // empty until trained
};

struct RunConfig {
  std::uint64_t seed = 0;
  // dataset
  std::string dataset_root;  // empty: generate the procedural desk corpus in memory
  DeskCorpusOptions desk;
  std::string train_split = "train";
  std::string eval_split = "test";
  int eval_stride = 1;
  int eval_limit = 0;  // 0 keeps every image
  // models
  std::vector<ModelEntry> models;
  ClassifierTrainOptions classifier_training;
  // generator
  std::string generator_source;
  std::map<std::string, std::string> generators;  // model id -> generator checkpoint
  TrainConfig generator_training;
  // targets
  std::vector<int> target_classes;  // explicit list; empty means sample target_count by seed
  int target_count = 4;
  // attacks
  std::vector<AttackSpec> attacks;
  int hf_swap_kernel_k = 4;
  double hf_swap_epsilon = 1.0;
  int hf_swap_target_image = -1;  // eval-set index; -1 picks the first image of the target class
  std::vector<int> ablation_k{1, 2, 3, 4, 5, 6};
  int ablation_steps = 0;  // 0 reuses generator_training.steps
  bool defense_resize_pad = false;
  std::uint64_t defense_seed = 0;
  // output
  std::string output_dir = "runs";
  bool plots = true;
  int save_adversaries = 0;

  nlohmann::json to_json() const;
};

/// Default document; every accepted key appears here.
inline nlohmann::json default_config_json() {
  return nlohmann::json::parse(R"({
  "seed": 0,
  "epsilon_scale": "unit",
  "dataset": {
    "root": "",
    "train_split": "train",
    "eval_split": "test",
    "eval_stride": 1,
    "eval_limit": 0,
    "desk": {"seed": 7, "train_per_class": 200, "test_per_class": 50, "object_contrast": 0.12}
  },
  "models": [
    {"id": "plain", "arch": "plain", "width": 16, "checkpoint": ""},
    {"id": "residual", "arch": "residual", "width": 16, "checkpoint": ""},
    {"id": "wide", "arch": "wide", "width": 16, "checkpoint": ""}
  ],
  "classifier_training": {"epochs": 8, "learning_rate": 0.001, "batch_size": 32},
  "generator": {
    "source": "plain",
    "checkpoints": {},
    "training": {
      "learning_rate": 0.0005, "beta1": 0.5, "beta2": 0.999, "batch_size": 16, "steps": 2000,
      "epsilon": 0.06274509803921569, "kernel_k": 4, "base_width": 32, "embed_dim": 8, "res_blocks": 4,
      "early_stop_min_improvement": 0.01, "early_stop_window": 500,
      "keep_best_window": 50
    }
  },
  "targets": {"classes": [], "count": 4},
  "attacks": [
    {"kind": "lfaa", "epsilon": 0.06274509803921569},
    {"kind": "mifgsm", "epsilon": 0.06274509803921569, "iterations": 10, "momentum": 1.0}
  ],
  "hf_swap": {"kernel_k": 4, "epsilon": 1.0, "target_image": -1},
  "ablation": {"k_values": [1, 2, 3, 4, 5, 6], "steps": 0},
  "defense": {"resize_pad": false, "seed": 0},
  "output": {"dir": "runs", "plots": true, "save_adversaries": 0}
})");
}

namespace detail {

/// Rejects keys absent from `schema`, naming the full dotted path. Arrays of objects
/// are checked against the first schema element; "checkpoints" maps are free-form.
inline void check_keys(const nlohmann::json& doc, const nlohmann::json& schema, const std::string& prefix) {
  if (!doc.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ArgumentError("unknown config key '" + path + "'");
    const auto& sub = schema.at(key);
    if (key == "checkpoints" || key == "attacks") continue;
    if (sub.is_object()) {
      if (!value.is_object()) throw ArgumentError("config key '" + path + "' must be an object");
      check_keys(value, sub, path);
    } else if (sub.is_array() && !sub.empty() && sub.front().is_object()) {
      if (!value.is_array()) throw ArgumentError("config key '" + path + "' must be an array");
      for (std::size_t i = 0; i < value.size(); ++i) check_keys(value[i], sub.front(), path + "[" + std::to_string(i) + "]");
    }
  }
}

template <typename T>
T get(const nlohmann::json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ArgumentError("config key '" + path + "' has the wrong type");
  }
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal().string();
}

}  // namespace detail

/// Parses `--set a.b.c=value`; the value is read as JSON, falling back to a plain string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ArgumentError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json::json_pointer ptr;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ArgumentError("malformed override key '" + key + "'");
    const bool index = !part.empty() && part.find_first_not_of("0123456789") == std::string::npos;
    if (index && doc.contains(ptr) && doc.at(ptr).is_array())
      ptr /= static_cast<std::size_t>(std::stoul(part));
    else
      ptr /= part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  doc[ptr] = value;
}

/// Merges `file` over the defaults; arrays are replaced wholesale.
inline nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& file) {
  if (!file.is_object()) throw ArgumentError("config document must be an object");
  base.merge_patch(file);
  return base;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ArgumentError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Validates a merged document and converts it to a RunConfig. Relative paths are
/// resolved against `base_dir`; epsilons given in 0-255 units are rescaled to [0,1].
inline RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::get;
  detail::check_keys(doc, default_config_json(), "");
  RunConfig c;
  const auto& d = doc;
  c.seed = get<std::uint64_t>(d.at("seed"), "seed");

  // `--set epsilon_scale=255` arrives as a number.
  const auto& scale_j = d.at("epsilon_scale");
  const auto scale_name = scale_j.is_number() ? scale_j.dump() : get<std::string>(scale_j, "epsilon_scale");
  double scale = 1.0;
  if (scale_name == "255")
    scale = 255.0;
  else if (scale_name != "unit")
    throw ArgumentError("config key 'epsilon_scale' must be \"unit\" or \"255\", got \"" + scale_name + "\"");
  auto eps = [&](const nlohmann::json& j, const std::string& path) {
    const double v = get<double>(j, path) / scale;
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("config key '" + path + "' is outside the epsilon range");
    return v;
  };

  const auto& ds = d.at("dataset");
  c.dataset_root = detail::resolve_path(get<std::string>(ds.at("root"), "dataset.root"), base_dir);
  c.train_split = get<std::string>(ds.at("train_split"), "dataset.train_split");
  c.eval_split = get<std::string>(ds.at("eval_split"), "dataset.eval_split");
  parse_split(c.train_split);
  parse_split(c.eval_split);
  c.eval_stride = get<int>(ds.at("eval_stride"), "dataset.eval_stride");
  c.eval_limit = get<int>(ds.at("eval_limit"), "dataset.eval_limit");
  if (c.eval_stride < 1) throw ArgumentError("config key 'dataset.eval_stride' must be >= 1");
  if (c.eval_limit < 0) throw ArgumentError("config key 'dataset.eval_limit' must be >= 0");
  const auto& desk = ds.at("desk");
  c.desk.seed = get<std::uint64_t>(desk.at("seed"), "dataset.desk.seed");
  c.desk.train_per_class = get<int>(desk.at("train_per_class"), "dataset.desk.train_per_class");
  c.desk.test_per_class = get<int>(desk.at("test_per_class"), "dataset.desk.test_per_class");
  c.desk.object_contrast = get<double>(desk.at("object_contrast"), "dataset.desk.object_contrast");
  if (c.desk.train_per_class < 1 || c.desk.test_per_class < 1)
    throw ArgumentError("config keys 'dataset.desk.*_per_class' must be >= 1");
  if (!(c.desk.object_contrast > 0.0 && c.desk.object_contrast <= 1.0))
    throw ArgumentError("config key 'dataset.desk.object_contrast' must lie in (0,1]");

  const auto model_schema = default_config_json()["models"][0];
  if (!d.at("models").is_array() || d.at("models").empty()) throw ArgumentError("config key 'models' must be a non-empty array");
  for (std::size_t i = 0; i < d.at("models").size(); ++i) {
    const auto& m = d.at("models")[i];
    const std::string p = "models[" + std::to_string(i) + "]";
    ModelEntry e;
    e.id = get<std::string>(m.value("id", nlohmann::json()), p + ".id");
    e.arch = get<std::string>(m.value("arch", nlohmann::json(e.id)), p + ".arch");
    e.width = get<int>(m.value("width", model_schema["width"]), p + ".width");
    e.checkpoint = detail::resolve_path(get<std::string>(m.value("checkpoint", nlohmann::json("")), p + ".checkpoint"), base_dir);
    if (e.id.empty() || e.id.find_first_of(",\"\n/\\") != std::string::npos)
      throw ArgumentError("config key '" + p + ".id' must be a plain non-empty name");
    if (!is_registered_arch(e.arch)) throw ArgumentError("config key '" + p + ".arch' names unknown architecture '" + e.arch + "'");
    if (e.width < 1) throw ArgumentError("config key '" + p + ".width' must be >= 1");
    for (const auto& prev : c.models)
      if (prev.id == e.id) throw ArgumentError("duplicate model id '" + e.id + "'");
    c.models.push_back(e);
  }

  const auto& ct = d.at("classifier_training");
  c.classifier_training.epochs = get<int>(ct.at("epochs"), "classifier_training.epochs");
  c.classifier_training.learning_rate = get<double>(ct.at("learning_rate"), "classifier_training.learning_rate");
  c.classifier_training.batch_size = get<int>(ct.at("batch_size"), "classifier_training.batch_size");
  c.classifier_training.seed = c.seed;

  const auto& g = d.at("generator");
  c.generator_source = get<std::string>(g.at("source"), "generator.source");
  for (const auto& [id, path] : g.at("checkpoints").items())
    c.generators[id] = detail::resolve_path(get<std::string>(path, "generator.checkpoints." + id), base_dir);
  const auto& t = g.at("training");
  auto& tc = c.generator_training;
  tc.learning_rate = get<double>(t.at("learning_rate"), "generator.training.learning_rate");
  tc.beta1 = get<double>(t.at("beta1"), "generator.training.beta1");
  tc.beta2 = get<double>(t.at("beta2"), "generator.training.beta2");
  tc.batch_size = get<int>(t.at("batch_size"), "generator.training.batch_size");
  tc.steps = get<int>(t.at("steps"), "generator.training.steps");
  tc.epsilon = eps(t.at("epsilon"), "generator.training.epsilon");
  tc.kernel_k = get<int>(t.at("kernel_k"), "generator.training.kernel_k");
  tc.arch.base_width = get<int>(t.at("base_width"), "generator.training.base_width");
  tc.arch.embed_dim = get<int>(t.at("embed_dim"), "generator.training.embed_dim");
  tc.arch.res_blocks = get<int>(t.at("res_blocks"), "generator.training.res_blocks");
  tc.early_stop_min_improvement = get<double>(t.at("early_stop_min_improvement"), "generator.training.early_stop_min_improvement");
  tc.early_stop_window = get<int>(t.at("early_stop_window"), "generator.training.early_stop_window");
  tc.keep_best_window = get<int>(t.at("keep_best_window"), "generator.training.keep_best_window");
  tc.seed = c.seed;

  const auto& tg = d.at("targets");
  c.target_classes = get<std::vector<int>>(tg.at("classes"), "targets.classes");
  c.target_count = get<int>(tg.at("count"), "targets.count");
  if (c.target_classes.empty() && c.target_count < 1) throw ArgumentError("config key 'targets.count' must be >= 1");

  if (!d.at("attacks").is_array()) throw ArgumentError("config key 'attacks' must be an array");
  for (std::size_t i = 0; i < d.at("attacks").size(); ++i) {
    nlohmann::json a = d.at("attacks")[i];
    const std::string p = "attacks[" + std::to_string(i) + "]";
    if (!a.is_object()) throw ArgumentError("config key '" + p + "' must be an object");
    for (const char* key : {"epsilon", "step_size"})
      if (a.contains(key) && !a.at(key).is_null()) a[key] = eps(a.at(key), p + "." + key);
    try {
      c.attacks.push_back(a.get<AttackSpec>());
    } catch (const ArgumentError& e) {
      throw ArgumentError("config key '" + p + "': " + e.what());
    } catch (const nlohmann::json::exception&) {
      throw ArgumentError("config key '" + p + "' is malformed");
    }
  }

  const auto& hf = d.at("hf_swap");
  c.hf_swap_kernel_k = get<int>(hf.at("kernel_k"), "hf_swap.kernel_k");
  c.hf_swap_epsilon = eps(hf.at("epsilon"), "hf_swap.epsilon");
  c.hf_swap_target_image = get<int>(hf.at("target_image"), "hf_swap.target_image");
  if (c.hf_swap_kernel_k < 1) throw ArgumentError("config key 'hf_swap.kernel_k' must be >= 1");

  const auto& ab = d.at("ablation");
  c.ablation_k = get<std::vector<int>>(ab.at("k_values"), "ablation.k_values");
  c.ablation_steps = get<int>(ab.at("steps"), "ablation.steps");
  if (c.ablation_k.empty()) throw ArgumentError("config key 'ablation.k_values' must be non-empty");
  for (int k : c.ablation_k)
    if (k < 1) throw ArgumentError("config key 'ablation.k_values' holds k < 1");

  const auto& df = d.at("defense");
  c.defense_resize_pad = get<bool>(df.at("resize_pad"), "defense.resize_pad");
  c.defense_seed = get<std::uint64_t>(df.at("seed"), "defense.seed");

  const auto& o = d.at("output");
  c.output_dir = detail::resolve_path(get<std::string>(o.at("dir"), "output.dir"), base_dir);
  c.plots = get<bool>(o.at("plots"), "output.plots");
  c.save_adversaries = get<int>(o.at("save_adversaries"), "output.save_adversaries");
  return c;
}

/// The canonical document for a parsed config: absolute paths, epsilons in [0,1].
/// Parsing it again yields an identical RunConfig.
inline nlohmann::json RunConfig::to_json() const {
  nlohmann::json models_j = nlohmann::json::array();
  for (const auto& m : models)
    models_j.push_back({{"id", m.id}, {"arch", m.arch}, {"width", m.width}, {"checkpoint", m.checkpoint}});
  nlohmann::json attacks_j = nlohmann::json::array();
  for (const auto& a : attacks) {
    nlohmann::json j = a;
    j.erase("target_class");
    attacks_j.push_back(j);
  }
  const auto& tc = generator_training;
  return {
      {"seed", seed},
      {"epsilon_scale", "unit"},
      {"dataset",
       {{"root", dataset_root},
        {"train_split", train_split},
        {"eval_split", eval_split},
        {"eval_stride", eval_stride},
        {"eval_limit", eval_limit},
        {"desk", {{"seed", desk.seed}, {"train_per_class", desk.train_per_class}, {"test_per_class", desk.test_per_class}, {"object_contrast", desk.object_contrast}}}}},
      {"models", models_j},
      {"classifier_training",
       {{"epochs", classifier_training.epochs},
        {"learning_rate", classifier_training.learning_rate},
        {"batch_size", classifier_training.batch_size}}},
      {"generator",
       {{"source", generator_source},
        {"checkpoints", generators},
        {"training",
         {{"learning_rate", tc.learning_rate},
          {"beta1", tc.beta1},
          {"beta2", tc.beta2},
          {"batch_size", tc.batch_size},
          {"steps", tc.steps},
          {"epsilon", tc.epsilon},
          {"kernel_k", tc.kernel_k},
          {"base_width", tc.arch.base_width},
          {"embed_dim", tc.arch.embed_dim},
          {"res_blocks", tc.arch.res_blocks},
          {"early_stop_min_improvement", tc.early_stop_min_improvement},
          {"early_stop_window", tc.early_stop_window},
          {"keep_best_window", tc.keep_best_window}}}}},
      {"targets", {{"classes", target_classes}, {"count", target_count}}},
      {"attacks", attacks_j},
      {"hf_swap", {{"kernel_k", hf_swap_kernel_k}, {"epsilon", hf_swap_epsilon}, {"target_image", hf_swap_target_image}}},
      {"ablation", {{"k_values", ablation_k}, {"steps", ablation_steps}}},
      {"defense", {{"resize_pad", defense_resize_pad}, {"seed", defense_seed}}},
      {"output", {{"dir", output_dir}, {"plots", plots}, {"save_adversaries", save_adversaries}}},
  };
}

}  // namespace lfaa::cli
