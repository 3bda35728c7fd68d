#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/attacks/attacks.hpp"
#include "lfaa/classifiers/classifier.hpp"
#include "lfaa/cli/config.hpp"
#include "lfaa/core/digest.hpp"
#include "lfaa/core/errors.hpp"
#include "lfaa/eval/harness.hpp"
#include "lfaa/eval/reports.hpp"
#include "lfaa/frequency/gaussian.hpp"
#include "lfaa/generator/generator.hpp"
#include "lfaa/imaging/corpus.hpp"
#include "lfaa/imaging/dataset.hpp"
#include "lfaa/imaging/image_io.hpp"
#include "lfaa/trainer/trainer.hpp"

namespace lfaa::cli {

namespace fs = std::filesystem;

inline constexpr const char* kIncompleteMarker = "INCOMPLETE";

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// An open run directory. Reports written here depend only on the resolved config;
/// wall-clock data goes to timing.json.
struct Run {
  std::string verb;
  RunConfig config;
  fs::path dir;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  nlohmann::json timing = nlohmann::json::object();
  std::ostream* log = &std::cerr;

  void note(const std::string& msg) const {
    if (log) *log << "[" << verb << "] " << msg << std::endl;
  }
};

inline std::string default_run_name(const std::string& verb) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return verb + "-" + buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

/// Creates the run directory, drops the INCOMPLETE marker and echoes the resolved config.
inline Run open_run(const std::string& verb, const RunConfig& cfg, std::string run_name = {}) {
  if (run_name.empty()) run_name = default_run_name(verb);
  fs::path dir = fs::path(cfg.output_dir) / run_name;
  for (int n = 2; fs::exists(dir) && !fs::is_empty(dir); ++n) dir = fs::path(cfg.output_dir) / (run_name + "-" + std::to_string(n));
  fs::create_directories(dir);
  Run run{verb, cfg, dir};
  write_text(dir / kIncompleteMarker, verb + " did not finish\n");
  write_text(dir / "resolved_config.json", cfg.to_json().dump(2) + "\n");
  run.note("run directory " + dir.string());
  return run;
}

inline void close_run(Run& run) {
  run.timing["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run.started).count();
  write_text(run.dir / "timing.json", run.timing.dump(2) + "\n");
  fs::remove(run.dir / kIncompleteMarker);
}

inline std::string config_digest(const RunConfig& cfg) { return sha256_hex(cfg.to_json().dump()); }

// ---- inputs ----------------------------------------------------------------

struct Data {
  LabeledDataset train;
  LabeledDataset eval;
};

inline LabeledDataset thin(const LabeledDataset& ds, int stride, int limit) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); i += static_cast<std::size_t>(stride)) {
    if (limit > 0 && keep.size() >= static_cast<std::size_t>(limit)) break;
    keep.push_back(i);
  }
  return ds.subset(keep);
}

inline Data load_data(const RunConfig& cfg, bool need_train) {
  Data d;
  if (cfg.dataset_root.empty()) {
    auto corpus = make_desk_corpus(cfg.desk);
    auto pick = [&](const std::string& s) { return parse_split(s) == Split::train ? corpus.train : corpus.test; };
    if (need_train) d.train = pick(cfg.train_split);
    d.eval = pick(cfg.eval_split);
  } else {
    if (need_train) d.train = load_dataset(cfg.dataset_root, parse_split(cfg.train_split));
    d.eval = load_dataset(cfg.dataset_root, parse_split(cfg.eval_split));
  }
  d.eval = thin(d.eval, cfg.eval_stride, cfg.eval_limit);
  if (d.eval.size() == 0) throw ArgumentError("evaluation split is empty after thinning");
  return d;
}

inline void require_checkpoint(const std::string& what, const std::string& path) {
  if (path.empty()) throw ArgumentError(what + " has no checkpoint path");
  if (!fs::is_regular_file(path)) throw IoError(what + " checkpoint not found: " + path);
}

/// Checks every checkpoint a verb will read before any run directory is created.
inline void preflight(const std::string& verb, const RunConfig& cfg) {
  if (verb == "train-classifier" || verb == "make-corpus") return;
  for (std::size_t i = 0; i < cfg.models.size(); ++i)
    require_checkpoint("model '" + cfg.models[i].id + "'", cfg.models[i].checkpoint);
  auto has_model = [&](const std::string& id) {
    for (const auto& m : cfg.models)
      if (m.id == id) return true;
    return false;
  };
  if (verb == "train-generator" || verb == "ablate-k" || verb == "attack") {
    if (!has_model(cfg.generator_source))
      throw ArgumentError("config key 'generator.source' names unknown model '" + cfg.generator_source + "'");
  }
  for (const auto& [id, path] : cfg.generators) {
    if (!has_model(id)) throw ArgumentError("config key 'generator.checkpoints." + id + "' names an unknown model");
    require_checkpoint("generator for '" + id + "'", path);
  }
  bool wants_lfaa = false;
  for (const auto& a : cfg.attacks) wants_lfaa |= a.kind == AttackKind::lfaa;
  if (verb == "attack" && wants_lfaa && !cfg.generators.count(cfg.generator_source))
    throw ArgumentError("lfaa attack needs 'generator.checkpoints." + cfg.generator_source + "'");
  if (verb == "transfer" && wants_lfaa && cfg.generators.empty())
    throw ArgumentError("lfaa transfer needs at least one entry in 'generator.checkpoints'");
  if ((verb == "attack" || verb == "transfer") && cfg.attacks.empty())
    throw ArgumentError("config key 'attacks' is empty");
}

struct Models {
  std::vector<std::string> ids;
  std::vector<std::unique_ptr<Classifier>> nets;

  std::size_t index(const std::string& id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return i;
    throw ArgumentError("unknown model id '" + id + "'");
  }
  std::vector<Victim> victims(const RunConfig& cfg) const {
    std::vector<Victim> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(make_victim(ids[i], *nets[i]));
    if (cfg.defense_resize_pad)
      for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(with_resize_pad(make_victim(ids[i], *nets[i]), cfg.defense_seed));
    return out;
  }
};

inline Models load_models(const RunConfig& cfg, int num_classes) {
  Models m;
  for (const auto& e : cfg.models) {
    auto net = std::make_unique<Classifier>(Classifier::load(e.checkpoint, num_classes));
    if (net->arch() != e.arch)
      throw ShapeError("checkpoint " + e.checkpoint + " holds a '" + net->arch() + "' model, config says '" + e.arch + "'");
    m.ids.push_back(e.id);
    m.nets.push_back(std::move(net));
  }
  return m;
}

inline std::vector<int> resolve_targets(const RunConfig& cfg, int num_classes) {
  if (!cfg.target_classes.empty()) {
    for (int t : cfg.target_classes)
      if (t < 0 || t >= num_classes) throw ArgumentError("target class " + std::to_string(t) + " out of range");
    return cfg.target_classes;
  }
  return sample_target_classes(num_classes, cfg.target_count, cfg.seed);
}

/// Distinct labels for the configured attacks: the kind, suffixed by position on clashes.
inline std::vector<std::string> attack_labels(const std::vector<AttackSpec>& specs) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    int same = 0;
    for (const auto& s : specs) same += s.label() == specs[i].label();
    out.push_back(same > 1 ? specs[i].label() + "_" + std::to_string(i) : specs[i].label());
  }
  return out;
}

inline int first_of_class(const LabeledDataset& ds, int label) {
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == label) return static_cast<int>(i);
  throw ArgumentError("evaluation split holds no image of class " + std::to_string(label));
}

// ---- verbs -----------------------------------------------------------------

inline void cmd_make_corpus(Run& run) {
  auto corpus = make_desk_corpus(run.config.desk);
  write_dataset(run.dir / "corpus", corpus.train);
  write_dataset(run.dir / "corpus", corpus.test);
  run.note("wrote " + std::to_string(corpus.train.size() + corpus.test.size()) + " images under " +
           (run.dir / "corpus").string());
}

inline void cmd_train_classifier(Run& run) {
  const auto& cfg = run.config;
  const Data data = load_data(cfg, true);
  std::ofstream summary(run.dir / "classifiers.csv", std::ios::binary);
  summary << "id,arch,width,test_accuracy,digest\n";
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    const auto& e = cfg.models[i];
    const std::uint64_t seed = cfg.seed * 1000 + i + 1;
    auto net = build_classifier<float>(e.arch, data.train.num_classes(), seed, data.train.shape(), e.width);
    auto opt = cfg.classifier_training;
    opt.seed = seed;
    std::vector<EpochRecord> curve;
    net = train_classifier(net, data.train, opt, &curve, [&](const EpochRecord& r) {
      run.note(e.id + " epoch " + std::to_string(r.epoch) + " loss " + format_double(r.mean_loss));
    });
    const fs::path ckpt = run.dir / "models" / (e.id + ".ckpt");
    fs::create_directories(ckpt.parent_path());
    net.save(ckpt);
    std::ofstream c(run.dir / "models" / (e.id + "_curve.csv"), std::ios::binary);
    c << "epoch,mean_loss,train_accuracy\n";
    for (const auto& r : curve) c << r.epoch << ',' << format_double(r.mean_loss) << ',' << format_double(r.train_accuracy) << '\n';
    const double acc = accuracy(net, data.eval);
    summary << e.id << ',' << e.arch << ',' << e.width << ',' << format_double(acc) << ',' << net.digest() << '\n';
    entries.push_back({{"id", e.id}, {"arch", e.arch}, {"width", e.width}, {"checkpoint", fs::absolute(ckpt).string()}});
    run.note(e.id + " test accuracy " + format_double(acc));
  }
  // Ready to paste into the "models" key of later configs.
  write_text(run.dir / "models.json", entries.dump(2) + "\n");
}

inline void cmd_train_generator(Run& run) {
  const auto& cfg = run.config;
  const Data data = load_data(cfg, true);
  const Models models = load_models(cfg, data.train.num_classes());
  const auto& source = *models.nets[models.index(cfg.generator_source)];
  TrainConfig tc = cfg.generator_training;
  tc.target_classes = resolve_targets(cfg, data.train.num_classes());
  const std::string before = source.digest();
  auto trained = train_generator(tc, source, data.train, [&](const StepRecord& r) {
    if (r.step % 100 == 0) run.note("step " + std::to_string(r.step) + " loss " + format_double(r.loss));
  });
  trained.generator.save(run.dir / "generator.ckpt");
  trained.log.write_jsonl(run.dir / "train_log.jsonl");
  double tail = 0.0;
  const std::size_t n = std::min<std::size_t>(50, trained.log.steps.size());
  for (std::size_t i = trained.log.steps.size() - n; i < trained.log.steps.size(); ++i) tail += trained.log.steps[i].loss;
  const nlohmann::json summary{{"source", cfg.generator_source},
                               {"targets", tc.target_classes},
                               {"steps_run", trained.log.steps.size()},
                               {"early_stopped", trained.log.early_stopped},
                               {"kept_step", trained.log.kept_step},
                               {"final_loss_mean_last_50", n ? tail / static_cast<double>(n) : 0.0},
                               {"classifier_digest_before", before},
                               {"classifier_digest_after", source.digest()},
                               {"generator_digest", trained.generator.digest()},
                               {"config_digest", config_digest(cfg)}};
  write_text(run.dir / "summary.json", summary.dump(2) + "\n");
  run.timing["generator_training_seconds"] = trained.log.wall_clock_seconds;
}

namespace detail {

/// Runs one attack spec as a transfer matrix over `sources`.
inline TransferMatrix attack_matrix(const RunConfig& cfg, const Models& models, const std::vector<Victim>& victims,
                                    const LabeledDataset& eval, const std::vector<int>& targets, const AttackSpec& spec,
                                    const std::string& label, std::vector<std::size_t> sources) {
  std::map<std::size_t, std::unique_ptr<ConditionalGenerator>> gens;
  if (spec.kind == AttackKind::lfaa)
    for (std::size_t s : sources)
      gens[s] = std::make_unique<ConditionalGenerator>(ConditionalGenerator::load(cfg.generators.at(models.ids[s])));
  Crafter craft = [&](std::size_t s, std::span<const ImageTensor> x, int target) {
    AttackSpec t = spec;
    t.target_class = target;
    AttackResources<float> res;
    std::optional<ImageTensor> timg;
    if (s < models.nets.size()) res.surrogate = models.nets[s].get();
    if (spec.kind == AttackKind::lfaa) {
      res.generator = gens.at(s).get();
      if (res.generator->trained_k()) t.kernel_k = *res.generator->trained_k();
    }
    if (spec.kind == AttackKind::hf_swap) {
      timg = eval.images[first_of_class(eval, target)];
      res.target_image = &*timg;
    }
    return run_attack<float>(t, x, res);
  };
  return transfer_matrix(victims, label, craft, eval, targets, std::move(sources));
}

inline void write_matrices(const Run& run, const std::vector<TransferMatrix>& mats, const std::vector<int>& targets) {
  std::vector<AttackReport> reports;
  std::vector<PredictionRecord> preds;
  nlohmann::json summary{{"targets", targets}, {"config_digest", config_digest(run.config)}, {"matrices", nlohmann::json::array()}};
  for (const auto& m : mats) {
    reports.insert(reports.end(), m.reports.begin(), m.reports.end());
    preds.insert(preds.end(), m.predictions.begin(), m.predictions.end());
    summary["matrices"].push_back(matrix_json(m));
    write_transfer_table_csv(run.dir / ("transfer_" + m.attack + ".csv"), m);
    if (run.config.plots) write_transfer_heatmap_svg(run.dir / ("heatmap_" + m.attack + ".svg"), m);
  }
  write_reports_csv(run.dir / "reports.csv", reports);
  write_predictions_csv(run.dir / "predictions.csv", preds);
  write_text(run.dir / "summary.json", summary.dump(2) + "\n");
}

inline void save_adversaries(const Run& run, const Models& models, const LabeledDataset& eval, const std::vector<int>& targets,
                             const AttackSpec& spec, const std::string& label, std::size_t source) {
  const int n = run.config.save_adversaries;
  if (n <= 0) return;
  const int target = targets.front();
  const auto idx = non_target_indices(eval, target);
  std::vector<int> keep(idx.begin(), idx.begin() + std::min<std::size_t>(n, idx.size()));
  LabeledDataset part;
  part.class_names = eval.class_names;
  for (int i : keep) {
    part.images.push_back(eval.images[i]);
    part.labels.push_back(eval.labels[i]);
  }
  std::vector<ImageTensor> adv;
  {
    AttackSpec t = spec;
    t.target_class = target;
    AttackResources<float> res;
    res.surrogate = models.nets[source].get();
    std::unique_ptr<ConditionalGenerator> gen;
    std::optional<ImageTensor> timg;
    if (spec.kind == AttackKind::lfaa) {
      gen = std::make_unique<ConditionalGenerator>(ConditionalGenerator::load(run.config.generators.at(models.ids[source])));
      res.generator = gen.get();
      if (gen->trained_k()) t.kernel_k = *gen->trained_k();
    }
    if (spec.kind == AttackKind::hf_swap) {
      timg = eval.images[first_of_class(eval, target)];
      res.target_image = &*timg;
    }
    adv = run_attack<float>(t, part.images, res);
  }
  for (std::size_t i = 0; i < adv.size(); ++i) {
    char name[96];
    std::snprintf(name, sizeof(name), "%s_%s_t%d_%05d.png", label.c_str(), models.ids[source].c_str(), target, keep[i]);
    const fs::path p = run.dir / "adversaries" / name;
    fs::create_directories(p.parent_path());
    write_image(p, adv[i].array());
  }
}

}  // namespace detail

/// One surrogate (generator.source), every configured attack, every victim.
inline void cmd_attack(Run& run) {
  const auto& cfg = run.config;
  const Data data = load_data(cfg, false);
  const Models models = load_models(cfg, data.eval.num_classes());
  const auto victims = models.victims(cfg);
  const auto targets = resolve_targets(cfg, data.eval.num_classes());
  const auto labels = attack_labels(cfg.attacks);
  const std::size_t source = models.index(cfg.generator_source);
  std::vector<TransferMatrix> mats;
  for (std::size_t a = 0; a < cfg.attacks.size(); ++a) {
    run.note("attack " + labels[a]);
    mats.push_back(detail::attack_matrix(cfg, models, victims, data.eval, targets, cfg.attacks[a], labels[a], {source}));
    detail::save_adversaries(run, models, data.eval, targets, cfg.attacks[a], labels[a], source);
  }
  detail::write_matrices(run, mats, targets);
}

/// Every model as a surrogate; lfaa rows only exist for models with a generator checkpoint.
inline void cmd_transfer(Run& run) {
  const auto& cfg = run.config;
  const Data data = load_data(cfg, false);
  const Models models = load_models(cfg, data.eval.num_classes());
  const auto victims = models.victims(cfg);
  const auto targets = resolve_targets(cfg, data.eval.num_classes());
  const auto labels = attack_labels(cfg.attacks);
  std::vector<TransferMatrix> mats;
  for (std::size_t a = 0; a < cfg.attacks.size(); ++a) {
    std::vector<std::size_t> sources;
    for (std::size_t s = 0; s < models.ids.size(); ++s)
      if (cfg.attacks[a].kind != AttackKind::lfaa || cfg.generators.count(models.ids[s])) sources.push_back(s);
    run.note("transfer " + labels[a] + " from " + std::to_string(sources.size()) + " source(s)");
    mats.push_back(detail::attack_matrix(cfg, models, victims, data.eval, targets, cfg.attacks[a], labels[a], sources));
  }
  detail::write_matrices(run, mats, targets);
}

inline void cmd_ablate_k(Run& run) {
  const auto& cfg = run.config;
  const Data data = load_data(cfg, true);
  const Models models = load_models(cfg, data.train.num_classes());
  const auto victims = models.victims(cfg);
  const auto targets = resolve_targets(cfg, data.train.num_classes());
  const std::size_t source = models.index(cfg.generator_source);
  std::vector<std::unique_ptr<ConditionalGenerator>> keep;
  nlohmann::json gen_digests = nlohmann::json::object();
  auto craft_for_k = [&](int k) -> Crafter {
    TrainConfig tc = cfg.generator_training;
    tc.kernel_k = k;
    tc.target_classes = targets;
    if (cfg.ablation_steps > 0) tc.steps = cfg.ablation_steps;
    run.note("training generator for k=" + std::to_string(k));
    auto trained = train_generator(tc, *models.nets[source], data.train);
    const fs::path ckpt = run.dir / "generators" / ("k" + std::to_string(k) + ".ckpt");
    fs::create_directories(ckpt.parent_path());
    trained.generator.save(ckpt);
    trained.log.write_jsonl(run.dir / "generators" / ("k" + std::to_string(k) + "_log.jsonl"));
    gen_digests[std::to_string(k)] = trained.generator.digest();
    run.timing["k" + std::to_string(k) + "_training_seconds"] = trained.log.wall_clock_seconds;
    keep.push_back(std::make_unique<ConditionalGenerator>(std::move(trained.generator)));
    const ConditionalGenerator* gen = keep.back().get();
    const EpsilonBudget eps(tc.epsilon);
    return [gen, k, eps](std::size_t, std::span<const ImageTensor> x, int target) {
      const std::vector<int> t(x.size(), target);
      return lfaa_compose<float>(x, encode_targets(t, gen->num_classes()), *gen, GaussianFilter(k), eps);
    };
  };
  const auto summary = ablate_kernel(cfg.ablation_k, craft_for_k, victims, source, data.eval, targets);
  std::vector<AttackReport> reports;
  std::vector<PredictionRecord> preds;
  for (const auto& m : summary.matrices) {
    reports.insert(reports.end(), m.reports.begin(), m.reports.end());
    preds.insert(preds.end(), m.predictions.begin(), m.predictions.end());
  }
  write_ablation_csv(run.dir / "ablation.csv", summary);
  write_reports_csv(run.dir / "reports.csv", reports);
  write_predictions_csv(run.dir / "predictions.csv", preds);
  auto j = ablation_json(summary);
  j["generator_digests"] = gen_digests;
  j["config_digest"] = config_digest(cfg);
  write_text(run.dir / "summary.json", j.dump(2) + "\n");
  if (cfg.plots) write_ablation_svg(run.dir / "ablation.svg", summary);
  run.note("argmax k = " + std::to_string(summary.argmax_k));
}

/// High-frequency substitution against a fixed target-class image, scored per victim.
inline void cmd_hf_swap(Run& run) {
  const auto& cfg = run.config;
  const Data data = load_data(cfg, false);
  const auto& eval = data.eval;
  const Models models = load_models(cfg, eval.num_classes());
  const auto victims = models.victims(cfg);
  std::vector<int> targets;
  if (cfg.hf_swap_target_image >= 0) {
    if (static_cast<std::size_t>(cfg.hf_swap_target_image) >= eval.size())
      throw ArgumentError("config key 'hf_swap.target_image' is past the end of the evaluation split");
    targets = {eval.labels[cfg.hf_swap_target_image]};
  } else {
    targets = resolve_targets(cfg, eval.num_classes());
  }
  const GaussianFilter filter(cfg.hf_swap_kernel_k);
  const EpsilonBudget eps(cfg.hf_swap_epsilon);
  std::vector<std::vector<int>> clean(victims.size());
  for (std::size_t v = 0; v < victims.size(); ++v) clean[v] = victims[v].classify(eval.images);
  std::vector<AttackReport> reports;
  std::vector<PredictionRecord> preds;
  for (int target : targets) {
    const int timg = cfg.hf_swap_target_image >= 0 ? cfg.hf_swap_target_image : first_of_class(eval, target);
    const auto idx = non_target_indices(eval, target);
    std::vector<ImageTensor> x;
    std::vector<int> labels;
    for (int i : idx) {
      x.push_back(eval.images[i]);
      labels.push_back(eval.labels[i]);
    }
    const auto adv = hf_swap_attack(x, eval.images[timg], filter, eps);
    for (std::size_t v = 0; v < victims.size(); ++v) {
      std::vector<int> c;
      for (int i : idx) c.push_back(clean[v][i]);
      reports.push_back(evaluate_attack(adv, labels, target, victims[v], EvalContext{"none", "hf_swap", idx, c, false}, &preds));
    }
  }
  // Table layout: one row per metric, one column per victim, counts pooled over targets.
  std::ofstream table(run.dir / "success_rates.csv", std::ios::binary);
  table << "metric";
  for (const auto& v : victims) table << ',' << v.id;
  table << '\n';
  nlohmann::json per_victim = nlohmann::json::array();
  std::vector<AttackReport> pooled(victims.size());
  for (const auto& r : reports) {
    for (std::size_t v = 0; v < victims.size(); ++v) {
      if (victims[v].id != r.victim) continue;
      pooled[v].n_images += r.n_images;
      pooled[v].n_target_hits += r.n_target_hits;
      pooled[v].n_label_flips += r.n_label_flips;
      pooled[v].n_clean_correct += r.n_clean_correct;
      pooled[v].n_flips_of_correct += r.n_flips_of_correct;
    }
  }
  auto row = [&](const char* name, auto value) {
    table << name;
    for (const auto& p : pooled) table << ',' << format_double(100.0 * value(p));
    table << '\n';
  };
  row("UASR", [](const AttackReport& p) { return rate(p.n_label_flips, p.n_images); });
  row("TASR", [](const AttackReport& p) { return rate(p.n_target_hits, p.n_images); });
  row("UASR_correct_only", [](const AttackReport& p) { return rate(p.n_flips_of_correct, p.n_clean_correct); });
  for (std::size_t v = 0; v < victims.size(); ++v)
    per_victim.push_back({{"victim", victims[v].id},
                          {"n_images", pooled[v].n_images},
                          {"uasr", rate(pooled[v].n_label_flips, pooled[v].n_images)},
                          {"tasr", rate(pooled[v].n_target_hits, pooled[v].n_images)},
                          {"uasr_correct", rate(pooled[v].n_flips_of_correct, pooled[v].n_clean_correct)}});
  write_reports_csv(run.dir / "reports.csv", reports);
  write_predictions_csv(run.dir / "predictions.csv", preds);
  const nlohmann::json summary{{"targets", targets},
                               {"kernel_k", cfg.hf_swap_kernel_k},
                               {"epsilon", cfg.hf_swap_epsilon},
                               {"victims", per_victim},
                               {"config_digest", config_digest(cfg)}};
  write_text(run.dir / "summary.json", summary.dump(2) + "\n");
}

/// Writes the low-pass, high-pass (shifted by 0.5) and reconstruction of one image.
inline void cmd_decompose(const fs::path& image, int k, const fs::path& out_dir) {
  const auto x = clamp_valid(read_image(image));
  const GaussianFilter filter(k);
  fs::create_directories(out_dir);
  const auto stem = image.stem().string();
  const ImageArray low = low_pass(x.array(), filter);
  write_image(out_dir / (stem + "_low.png"), clamp_valid(low).array());
  write_image(out_dir / (stem + "_high.png"), visualize_residual(high_pass(x.array(), filter)).array());
}

}  // namespace lfaa::cli
