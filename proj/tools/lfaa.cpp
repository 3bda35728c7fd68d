// Command-line front end: one verb per experiment, each writing into a fresh run directory.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lfaa/cli/commands.hpp"

namespace {

using namespace lfaa;
using namespace lfaa::cli;

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string run_name;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON run config");
  sub->add_option("--set", f.overrides, "override a config key, e.g. --set generator.training.steps=500");
  sub->add_option("--seed", f.seed, "master seed (overrides the config)");
  sub->add_option("--out", f.out, "output root directory (overrides output.dir)");
  sub->add_option("--run-name", f.run_name, "run directory name (default <verb>-<UTC timestamp>)");
}

RunConfig resolve(const CommonFlags& f) {
  nlohmann::json doc = default_config_json();
  std::filesystem::path base;
  if (!f.config.empty()) {
    doc = merge_config(std::move(doc), read_config_file(f.config));
    base = std::filesystem::absolute(f.config).parent_path();
  }
  for (const auto& o : f.overrides) apply_override(doc, o);
  if (f.seed) doc["seed"] = *f.seed;
  if (!f.out.empty()) doc["output"]["dir"] = std::filesystem::absolute(f.out).string();
  // Paths given on the command line are relative to the working directory.
  auto cfg = parse_run_config(doc, base.empty() ? std::filesystem::current_path() : base);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-frequency adversarial attack toolkit"};
  app.require_subcommand(1);

  struct Verb {
    std::string name;
    std::string help;
    void (*fn)(Run&);
  };
  const std::vector<Verb> verbs{
      {"make-corpus", "render the procedural desk corpus to PNG files", cmd_make_corpus},
      {"train-classifier", "train every configured classifier", cmd_train_classifier},
      {"train-generator", "train a conditional generator against generator.source", cmd_train_generator},
      {"attack", "attack from generator.source and score every model", cmd_attack},
      {"transfer", "full source x victim x target transfer matrix per attack", cmd_transfer},
      {"ablate-k", "train and score one generator per kernel size k", cmd_ablate_k},
      {"hf-swap", "swap in a target-class image's high frequencies and score every model", cmd_hf_swap},
  };
  std::vector<CommonFlags> flags(verbs.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < verbs.size(); ++i) {
    subs.push_back(app.add_subcommand(verbs[i].name, verbs[i].help));
    add_common(subs.back(), flags[i]);
  }

  std::string image;
  int k = 4;
  std::string decompose_out = ".";
  auto* decompose = app.add_subcommand("decompose", "write the low- and high-frequency parts of one image");
  decompose->add_option("--image", image, "input PNG or PNM")->required();
  decompose->add_option("--k", k, "Gaussian kernel parameter");
  decompose->add_option("--out", decompose_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (decompose->parsed()) {
    try {
      cmd_decompose(image, k, decompose_out);
      return kExitOk;
    } catch (const ArgumentError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }

  for (std::size_t i = 0; i < verbs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    RunConfig cfg;
    try {
      cfg = resolve(flags[i]);
      preflight(verbs[i].name, cfg);
    } catch (const std::exception& e) {
      std::cerr << "invalid configuration: " << e.what() << "\n";
      return kExitValidation;
    }
    try {
      Run run = open_run(verbs[i].name, cfg, flags[i].run_name);
      verbs[i].fn(run);
      close_run(run);
      std::cout << run.dir.string() << "\n";
      return kExitOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }
  return kExitValidation;
}
