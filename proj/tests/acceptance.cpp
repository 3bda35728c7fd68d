// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero if any
// criterion fails. Criteria 8-11 drive the lfaa command-line tool end to end on the
// desk corpus; finished stages are cached under the work directory.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "lfaa/attacks/attacks.hpp"
#include "lfaa/cli/commands.hpp"
#include "lfaa/eval/reports.hpp"
#include "oracles.hpp"

namespace {

using namespace lfaa;
namespace fs = std::filesystem;
namespace ts = lfaa::test_support;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::string pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// ---- criteria 1-7: library-level checks -------------------------------------

Outcome frequency_identity() {
  std::mt19937_64 rng(101);
  double recon = 0.0, fixed = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto x = ts::random_image(rng, {24, 24, 3});
    for (int k = 1; k <= 6; ++k) {
      const GaussianFilter f(k);
      const ImageArray lo = low_pass(x.array(), f), hi = high_pass(x.array(), f);
      for (std::size_t j = 0; j < x.size(); ++j) recon = std::max(recon, std::abs(lo[j] + hi[j] - x[j]));
    }
  }
  for (double level : {0.0, 0.25, 0.5, 0.77, 1.0}) {
    const ImageTensor c({24, 24, 3}, level);
    for (int k = 1; k <= 6; ++k) {
      const ImageArray lo = low_pass(c.array(), GaussianFilter(k));
      for (double v : lo.values()) fixed = std::max(fixed, std::abs(v - level));
    }
  }
  return {recon < 1e-12 && fixed < 1e-12, "max reconstruction error " + fmt(recon) + ", constant drift " + fmt(fixed)};
}

Outcome convolution_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    std::mt19937_64 rng(seed);
    const auto x = ts::random_image(rng, {8, 8, 3});
    const int k = 1 + static_cast<int>(seed % 6);
    worst = std::max(worst, ts::max_abs_diff(low_pass(x.array(), GaussianFilter(k)), ts::brute_low_pass(x.array(), k)));
  }
  return {worst < 1e-6, "120 seeds, max abs error " + fmt(worst)};
}

Outcome kernel_facts() {
  const GaussianFilter k4(4), k1(1);
  bool ok = k4.size() == 17;
  double sum_err = 0.0;
  bool symmetric = true;
  for (int k = 1; k <= 6; ++k) {
    const GaussianFilter f(k);
    double s = 0.0;
    for (double w : f.weights()) s += w;
    sum_err = std::max(sum_err, std::abs(s - 1.0));
    for (int i = -f.radius(); i <= f.radius(); ++i)
      for (int j = -f.radius(); j <= f.radius(); ++j)
        symmetric = symmetric && f.weight(i, j) == f.weight(-i, j) && f.weight(i, j) == f.weight(i, -j) &&
                    f.weight(i, j) == f.weight(j, i);
  }
  const double centre_err = std::abs(k1.raw_weight(0, 0) - 1.0 / (2.0 * std::numbers::pi));
  ok = ok && sum_err < 1e-12 && symmetric && centre_err < 1e-9;
  return {ok, "k=4 size " + std::to_string(k4.size()) + ", sum error " + fmt(sum_err) + ", symmetric " +
                  (symmetric ? "yes" : "no") + ", k=1 centre error " + fmt(centre_err)};
}

Outcome epsilon_ball() {
  const ImageShape shape{8, 8, 3};
  const auto model = build_classifier<float>("residual", 5, 17, shape, 2);
  const auto gen = build_generator<float>(5, shape, 18, GeneratorArch{4, 2, 1});
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int cases = 0, violations = 0;
  double worst = 0.0;
  std::string per_kind;
  for (auto kind : {AttackKind::lfaa, AttackKind::fgsm, AttackKind::ifgsm, AttackKind::mifgsm, AttackKind::hf_swap}) {
    int kind_cases = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      AttackSpec s;
      s.kind = kind;
      // Mix tiny, typical and saturating budgets.
      const double r = u(rng);
      s.budget = EpsilonBudget(r < 0.1 ? 0.0 : r < 0.8 ? r * 0.1 : r);
      s.iterations = 1 + trial % 4;
      s.momentum = trial % 2 ? 1.0 : 0.0;
      s.kernel_k = 1 + trial % 3;
      s.target_class = trial % 5;
      const std::vector<ImageTensor> x{ts::random_image(rng, shape)};
      const auto timg = ts::random_image(rng, shape);
      const auto adv = run_attack<float>(s, x, AttackResources<float>{&model, &gen, &timg});
      const double d = linf_distance(adv[0], x[0]);
      worst = std::max(worst, d - s.budget.value());
      bool in_range = true;
      for (double v : adv[0].values()) in_range = in_range && v >= 0.0 && v <= 1.0;
      violations += !(d <= s.budget.value() + 1e-9) || !in_range;
      ++cases;
      ++kind_cases;
    }
    per_kind += (per_kind.empty() ? "" : ", ") + to_string(kind) + " " + std::to_string(kind_cases);
  }
  return {violations == 0, std::to_string(cases) + " cases (" + per_kind + "), violations " + std::to_string(violations) +
                               ", max excess " + fmt(worst)};
}

Outcome gradient_oracles() {
  double worst_cls = 0.0;
  for (const auto& arch : classifier_registry()) worst_cls = std::max(worst_cls, ts::classifier_input_fd_error(arch, 3));
  double worst_gen = 0.0;
  for (std::uint64_t seed : {2, 9}) worst_gen = std::max(worst_gen, ts::lfaa_theta_fd_error(seed));
  return {worst_cls < 1e-4 && worst_gen < 1e-3,
          "classifier input relative error " + fmt(worst_cls) + " (< 1e-4), lfaa theta relative error " + fmt(worst_gen) +
              " (< 1e-3)"};
}

Outcome baseline_reductions() {
  const ImageShape shape{16, 16, 3};
  const auto model = build_classifier<float>("plain", 6, 23, shape, 4);
  int equal_mi = 0, equal_i = 0;
  for (std::uint64_t c = 0; c < 10; ++c) {
    std::mt19937_64 rng(500 + c);
    const auto x = ts::random_images(rng, 3, shape);
    const std::vector<int> t{static_cast<int>(c % 6), static_cast<int>((c + 1) % 6), static_cast<int>((c + 3) % 6)};
    const EpsilonBudget eps(0.01 * static_cast<double>(c + 1));
    const int iters = 1 + static_cast<int>(c % 5);
    bool same = true;
    for (int steps = 1; steps <= iters; ++steps)
      same = same && mifgsm_targeted<float>(x, t, model, eps, steps, eps.value() / iters, 0.0) ==
                         ifgsm_targeted<float>(x, t, model, eps, steps, eps.value() / iters);
    equal_mi += same;
    equal_i += ifgsm_targeted<float>(x, t, model, eps, 1, eps.value()) == fgsm_targeted<float>(x, t, model, eps);
  }
  return {equal_mi == 10 && equal_i == 10,
          "mifgsm(mu=0)==ifgsm step-for-step " + std::to_string(equal_mi) + "/10, ifgsm(T=1,alpha=eps)==fgsm " +
              std::to_string(equal_i) + "/10"};
}

Outcome training_contract(const fs::path& gen_run) {
  // Digest and determinism on a small in-process problem.
  DeskCorpusOptions o;
  o.train_per_class = 20;
  o.test_per_class = 1;
  const auto corpus = make_desk_corpus(o);
  ClassifierTrainOptions copt;
  copt.epochs = 12;
  copt.learning_rate = 3e-3;
  copt.seed = 3;
  auto cls = train_classifier(build_classifier<float>("plain", kDeskClasses, 3, {32, 32, 3}, 4), corpus.train, copt);
  cls.freeze();
  const std::string before = cls.digest();

  TrainConfig cfg;
  cfg.arch = GeneratorArch{4, 4, 1};
  cfg.batch_size = 8;
  cfg.steps = 60;
  cfg.kernel_k = 2;
  cfg.target_classes = {3, 8};
  cfg.seed = 5;
  cfg.early_stop_min_improvement = 0.0;
  const auto a = train_generator(cfg, cls, corpus.train);
  const auto b = train_generator(cfg, cls, corpus.train);
  const bool unchanged = cls.digest() == before;
  const bool reproducible = a.generator.digest() == b.generator.digest();

  // Single-batch overfit within 200 steps.
  const auto batch = corpus.train.subset({0, 25, 50, 75, 100, 125, 150, 175});
  TrainConfig fit = cfg;
  fit.batch_size = 8;
  fit.steps = 200;
  fit.kernel_k = 1;
  fit.target_classes = {3};
  fit.learning_rate = 2e-3;
  const auto out = train_generator(fit, cls, batch);
  const GaussianFilter f(1);
  const std::vector<int> targets(batch.size(), 3);
  const ConditionalGenerator init(kDeskClasses, batch.shape(), fit.arch, fit.seed);
  const double start = lfaa_loss<float>(init, cls, f, batch.images, targets, fit.epsilon);
  const double end = lfaa_loss<float>(out.generator, cls, f, batch.images, targets, fit.epsilon);
  const double drop = 1.0 - end / start;

  // The full-size CLI run records the classifier digest on both sides of training.
  bool cli_unchanged = true;
  std::string cli_note;
  if (fs::exists(gen_run / "summary.json")) {
    const auto s = nlohmann::json::parse(slurp(gen_run / "summary.json"));
    cli_unchanged = s.at("classifier_digest_before") == s.at("classifier_digest_after");
    cli_note = ", desk run digest unchanged " + std::string(cli_unchanged ? "yes" : "no");
  }
  return {unchanged && reproducible && drop >= 0.5 && cli_unchanged,
          "classifier digest unchanged " + std::string(unchanged ? "yes" : "no") + ", seeded theta digest reproduced " +
              (reproducible ? "yes" : "no") + ", single-batch loss " + fmt(start) + " -> " + fmt(end) + " (drop " +
              pct(drop) + " in 200 steps)" + cli_note};
}

// ---- CLI-driven stages ------------------------------------------------------

class Pipeline {
 public:
  Pipeline(fs::path cli, fs::path work, bool fresh) : cli_(std::move(cli)), work_(std::move(work)), fresh_(fresh) {
    fs::create_directories(work_ / "runs");
  }

  fs::path runs() const { return work_ / "runs"; }

  /// Runs `verb` with the config document `doc` into runs/<name>, unless a finished
  /// run with the same resolved config is already there.
  fs::path stage(const std::string& verb, const std::string& name, nlohmann::json doc, bool cacheable = true) {
    doc["output"]["dir"] = fs::absolute(runs()).string();
    const fs::path cfg_path = work_ / (name + ".json");
    {
      std::ofstream out(cfg_path, std::ios::binary);
      out << doc.dump(2) << "\n";
    }
    const fs::path dir = runs() / name;
    const auto expected = cli::parse_run_config(cli::merge_config(cli::default_config_json(), doc), work_).to_json().dump(2) + "\n";
    if (cacheable && !fresh_ && fs::exists(dir / "resolved_config.json") && !fs::exists(dir / cli::kIncompleteMarker) &&
        slurp(dir / "resolved_config.json") == expected) {
      std::cout << "  [cached] " << verb << " " << name << "\n" << std::flush;
      return dir;
    }
    fs::remove_all(dir);
    run(verb + " --config " + cfg_path.string() + " --run-name " + name, name);
    return dir;
  }

  /// Re-runs a command from an existing run's resolved_config.json.
  fs::path rerun(const std::string& verb, const fs::path& from, const std::string& name) {
    const fs::path dir = runs() / name;
    fs::remove_all(dir);
    run(verb + " --config " + (from / "resolved_config.json").string() + " --run-name " + name, name);
    return dir;
  }

 private:
  void run(const std::string& args, const std::string& name) {
    const auto start = std::chrono::steady_clock::now();
    std::cout << "  [run] lfaa " << args << "\n" << std::flush;
    const std::string cmd = cli_.string() + " " + args + " > " + (work_ / (name + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "        exit " << code << " after " << fmt(secs, 4) << " s\n" << std::flush;
    if (code != 0) throw std::runtime_error("lfaa " + args + " exited with " + std::to_string(code));
  }

  fs::path cli_;
  fs::path work_;
  bool fresh_;
};

/// Pooled UASR and TASR per victim from a prediction log.
std::map<std::string, std::pair<double, double>> pooled_rates(const std::vector<PredictionRecord>& log) {
  std::map<std::string, std::array<int, 3>> counts;  // n, flips, hits
  for (const auto& p : log) {
    auto& c = counts[p.victim];
    ++c[0];
    c[1] += p.adv_pred != p.true_label;
    c[2] += p.adv_pred == p.target;
  }
  std::map<std::string, std::pair<double, double>> out;
  for (const auto& [v, c] : counts) out[v] = {rate(c[1], c[0]), rate(c[2], c[0])};
  return out;
}

Outcome hf_swap_direction(const fs::path& run) {
  const auto rates = pooled_rates(read_predictions_csv(run / "predictions.csv"));
  bool every = !rates.empty();
  double best_uasr = 0.0;
  std::string detail;
  for (const auto& [victim, r] : rates) {
    every = every && r.first > r.second;
    best_uasr = std::max(best_uasr, r.first);
    detail += (detail.empty() ? "" : "; ") + victim + " UASR " + pct(r.first) + " TASR " + pct(r.second);
  }
  return {every && best_uasr >= 0.10, detail};
}

/// Mean TASR over targets for one (source, victim, attack) cell.
double cell_tasr(const std::vector<AttackReport>& reports, const std::string& source, const std::string& victim,
                 const std::string& attack) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : reports)
    if (r.source == source && r.victim == victim && r.attack == attack) {
      sum += r.tasr;
      ++n;
    }
  if (n == 0) throw std::runtime_error("no reports for " + source + "/" + victim + "/" + attack);
  return sum / n;
}

Outcome transfer_direction(const fs::path& run, const std::string& source, const std::vector<std::string>& victims,
                           double white_box_min, double margin_min) {
  const auto reports = read_reports_csv(run / "reports.csv");
  const double wb = cell_tasr(reports, source, source, "lfaa");
  bool ok = wb >= white_box_min;
  std::string detail = "white-box lfaa on " + source + " " + pct(wb) + " (mifgsm " +
                       pct(cell_tasr(reports, source, source, "mifgsm")) + ")";
  for (const auto& v : victims) {
    if (v == source) continue;
    const double l = cell_tasr(reports, source, v, "lfaa"), m = cell_tasr(reports, source, v, "mifgsm");
    ok = ok && l - m >= margin_min;
    detail += "; " + v + " lfaa " + pct(l) + " vs mifgsm " + pct(m) + " (margin " + fmt(100.0 * (l - m), 3) + " pts)";
  }
  return {ok, detail};
}

Outcome ablation_harness(const fs::path& a, const fs::path& b, std::size_t k_count) {
  std::vector<std::string> rows;
  {
    std::istringstream in(slurp(a / "ablation.csv"));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line))
      if (!line.empty()) rows.push_back(line);
  }
  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  const bool count_ok = rows.size() == k_count;
  const bool has_argmax = summary.contains("argmax_k");
  bool identical = true;
  for (const char* f : {"ablation.csv", "reports.csv", "predictions.csv", "summary.json"})
    identical = identical && slurp(a / f) == slurp(b / f);
  std::string detail = std::to_string(rows.size()) + " rows for " + std::to_string(k_count) + " k values, argmax k " +
                       (has_argmax ? summary.at("argmax_k").dump() : std::string("missing")) +
                       ", second seeded run identical " + (identical ? "yes" : "no");
  return {count_ok && has_argmax && identical, detail};
}

Outcome report_integrity(const std::vector<fs::path>& runs, const std::vector<std::pair<fs::path, fs::path>>& reruns) {
  int checked = 0, mismatched = 0;
  for (const auto& r : runs) {
    const auto reports = read_reports_csv(r / "reports.csv");
    const auto recomputed = reports_from_log(read_predictions_csv(r / "predictions.csv"));
    if (recomputed.size() != reports.size()) {
      ++mismatched;
      continue;
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
      ++checked;
      // white_box is a property of the matrix, not of the log, so compare rates and counts.
      AttackReport a = reports[i], b = recomputed[i];
      a.white_box = b.white_box = false;
      mismatched += !(a == b) || a.tasr != b.tasr || a.uasr != b.uasr;
    }
  }
  int identical = 0, files = 0;
  for (const auto& [orig, again] : reruns)
    for (const auto& entry : fs::directory_iterator(orig)) {
      const auto name = entry.path().filename().string();
      if (!entry.is_regular_file() || name == "timing.json") continue;
      ++files;
      identical += fs::exists(again / name) && slurp(entry.path()) == slurp(again / name);
    }
  return {mismatched == 0 && checked > 0 && identical == files,
          std::to_string(checked) + " report rows recomputed exactly (" + std::to_string(mismatched) +
              " mismatches); rerun from resolved config: " + std::to_string(identical) + "/" + std::to_string(files) +
              " files byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = "acceptance";
  std::string cli_path =
#ifdef LFAA_CLI_PATH
      LFAA_CLI_PATH;
#else
      "lfaa";
#endif
  bool fresh = false;
  int ablation_steps = 150;
  int ablation_stride = 5;
  app.add_option("--work", work, "work directory for runs and cached stages");
  app.add_option("--cli", cli_path, "path to the lfaa executable");
  app.add_flag("--fresh", fresh, "ignore cached stages");
  app.add_option("--ablation-steps", ablation_steps, "generator steps per k in the ablation harness check");
  app.add_option("--ablation-stride", ablation_stride, "evaluation stride for the ablation harness check");
  CLI11_PARSE(app, argc, argv);

  std::map<int, Outcome> results;
  auto record = [&](int n, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    results[n] = o;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n" << std::flush;
  };

  record(1, frequency_identity);
  record(2, convolution_oracle);
  record(3, kernel_facts);
  record(4, epsilon_ball);
  record(5, gradient_oracles);
  record(6, baseline_reductions);

  Pipeline p(cli_path, fs::absolute(work), fresh);
  const nlohmann::json base = nlohmann::json::object();
  fs::path cls_run, gen_run, hf_run, transfer_run, ablate_a, ablate_b, hf_again;
  nlohmann::json with_models;
  std::vector<std::string> model_ids;
  try {
    cls_run = p.stage("train-classifier", "classifiers", base);
    with_models = base;
    with_models["models"] = nlohmann::json::parse(slurp(cls_run / "models.json"));
    for (const auto& m : with_models["models"]) model_ids.push_back(m.at("id"));
    std::cout << "  held-out accuracy:";
    std::istringstream acc(slurp(cls_run / "classifiers.csv"));
    std::string line;
    std::getline(acc, line);
    while (std::getline(acc, line)) {
      const auto f = detail::split_csv_line(line);
      std::cout << " " << f[0] << "=" << f[3];
    }
    std::cout << "\n";
    gen_run = p.stage("train-generator", "generator", with_models);
  } catch (const std::exception& e) {
    std::cout << "  pipeline setup failed: " << e.what() << "\n";
  }

  record(7, [&] { return training_contract(gen_run); });

  record(8, [&] {
    nlohmann::json doc = with_models;
    doc["epsilon_scale"] = "255";
    doc["hf_swap"] = {{"epsilon", 255}};
    hf_run = p.stage("hf-swap", "hf_swap", doc);
    return hf_swap_direction(hf_run);
  });

  record(9, [&] {
    nlohmann::json doc = with_models;
    const auto source = cli::parse_run_config(cli::merge_config(cli::default_config_json(), doc)).generator_source;
    doc["generator"]["checkpoints"] = {{source, (gen_run / "generator.ckpt").string()}};
    transfer_run = p.stage("transfer", "transfer", doc);
    return transfer_direction(transfer_run, source, model_ids, 0.80, 0.10);
  });

  std::size_t k_count = 0;
  record(10, [&] {
    nlohmann::json doc = with_models;
    doc["ablation"] = {{"steps", ablation_steps}};
    doc["dataset"] = {{"eval_stride", ablation_stride}};
    k_count = cli::default_config_json()["ablation"]["k_values"].size();
    ablate_a = p.stage("ablate-k", "ablation_a", doc);
    ablate_b = p.stage("ablate-k", "ablation_b", doc, false);
    return ablation_harness(ablate_a, ablate_b, k_count);
  });

  record(11, [&] {
    hf_again = p.rerun("hf-swap", hf_run, "hf_swap_rerun");
    std::vector<fs::path> runs;
    for (const auto& r : {hf_run, transfer_run, ablate_a, ablate_b})
      if (!r.empty()) runs.push_back(r);
    return report_integrity(runs, {{hf_run, hf_again}, {ablate_a, ablate_b}});
  });

  int failed = 0;
  for (const auto& [n, o] : results) failed += !o.pass;
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << "\n";
  return failed ? 1 : 0;
}
