#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/attacks/projection.hpp"
#include "lfaa/classifiers/classifier.hpp"
#include "lfaa/core/errors.hpp"
#include "lfaa/frequency/gaussian.hpp"
#include "lfaa/generator/generator.hpp"
#include "lfaa/imaging/dataset.hpp"
#include "lfaa/nn/adam.hpp"
#include "lfaa/nn/image_batch.hpp"

namespace lfaa {

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 16;
  int steps = 2000;
  double epsilon = 16.0 / 255.0;
  int kernel_k = 4;
  std::vector<int> target_classes{0};
  std::uint64_t seed = 0;
  GeneratorArch arch{};
  /// Early stop once the mean loss over the last `early_stop_window` steps improves
  /// on the preceding window by less than this fraction. 0 disables.
  double early_stop_min_improvement = 0.01;
  int early_stop_window = 500;
  /// Return the weights that ended the lowest-mean-loss block of this many steps
  /// rather than the last ones. 0 keeps the final weights.
  int keep_best_window = 50;

  void validate(int num_classes) const {
    if (target_classes.empty()) throw ArgumentError("target class set must be non-empty");
    for (int t : target_classes)
      if (t < 0 || t >= num_classes) throw ArgumentError("target class " + std::to_string(t) + " out of range");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("epsilon must lie in [0,1]");
    if (kernel_k < 1) throw ArgumentError("kernel k must be >= 1");
    if (batch_size < 1) throw ArgumentError("batch_size must be positive");
    if (steps < 0) throw ArgumentError("steps must be non-negative");
    if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
    if (early_stop_window < 1) throw ArgumentError("early_stop_window must be positive");
    if (keep_best_window < 0) throw ArgumentError("keep_best_window must be non-negative");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"batch_size", c.batch_size},
                     {"steps", c.steps},
                     {"epsilon", c.epsilon},
                     {"kernel_k", c.kernel_k},
                     {"target_classes", c.target_classes},
                     {"seed", c.seed},
                     {"base_width", c.arch.base_width},
                     {"embed_dim", c.arch.embed_dim},
                     {"res_blocks", c.arch.res_blocks},
                     {"early_stop_min_improvement", c.early_stop_min_improvement},
                     {"early_stop_window", c.early_stop_window},
                     {"keep_best_window", c.keep_best_window}};
}

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double hit_fraction = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json config;
  bool early_stopped = false;
  /// Step after which the returned weights were taken.
  int kept_step = -1;

  /// One JSON object per line, one line per optimization step.
  void write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write training log " + path.string());
    for (const auto& s : steps)
      out << nlohmann::json{{"step", s.step}, {"loss", s.loss}, {"hit_fraction", s.hit_fraction}}.dump() << '\n';
  }
};

/// i.i.d. uniform draws from `target_set`.
inline std::vector<int> sample_targets(int batch_size, std::span<const int> target_set, std::mt19937_64& stream) {
  if (target_set.empty()) throw ArgumentError("target class set must be non-empty");
  std::uniform_int_distribution<std::size_t> pick(0, target_set.size() - 1);
  std::vector<int> out(batch_size);
  for (auto& t : out) t = target_set[pick(stream)];
  return out;
}

/// Result of one LFAA objective evaluation.
template <typename S>
struct LfaaObjective {
  double loss = 0.0;
  std::vector<double> per_sample;
  std::vector<int> predicted;
  std::vector<Tensor<S>> generator_grads;  ///< empty unless requested
};

/// Mean CE(F(clip_{x,eps}(G(x, 1_c) + W*x)), c). `low` holds W*x for each image.
/// The clip contributes zero gradient wherever it is active.
template <typename S>
LfaaObjective<S> evaluate_lfaa_objective(const BasicGenerator<S>& generator, const BasicClassifier<S>& classifier,
                                         std::span<const ImageTensor> images, std::span<const ImageArray> low,
                                         std::span<const int> targets, double epsilon, bool want_gradient) {
  if (images.size() != targets.size() || images.size() != low.size()) throw ShapeError("batch/target/low-pass size mismatch");
  if (generator.num_classes() != classifier.num_classes()) throw ShapeError("generator and classifier class counts differ");
  const auto enc = encode_targets(targets, generator.num_classes());
  const Tensor<S> x = nn::to_nchw<S>(images);
  GeneratorTape<S> tape;
  const Tensor<S> pert = generator.forward(x, enc, want_gradient ? &tape : nullptr);

  Tensor<S> adv(pert.shape);
  Tensor<S> pass(pert.shape);
  for (int b = 0; b < adv.n(); ++b)
    for (int c = 0; c < adv.c(); ++c)
      for (int y = 0; y < adv.h(); ++y)
        for (int xx = 0; xx < adv.w(); ++xx) {
          const double orig = images[b].at(y, xx, c);
          const double raw = static_cast<double>(pert(b, c, y, xx)) + low[b].at(y, xx, c);
          adv(b, c, y, xx) = static_cast<S>(clip_project_value(raw, orig, epsilon));
          pass(b, c, y, xx) = clip_project_passes(raw, orig, epsilon) ? S(1) : S(0);
        }

  LfaaObjective<S> out;
  LossGradient<S> lg;
  if (want_gradient) {
    lg = classifier.loss_and_input_gradient(adv, targets);
    for (std::size_t i = 0; i < lg.grad_input.size(); ++i) lg.grad_input.data[i] *= pass.data[i];
    out.generator_grads = generator.backward(lg.grad_input, tape);
  }
  const Tensor<S> logits = want_gradient ? std::move(lg.logits) : classifier.logits(adv);
  out.per_sample = nn::cross_entropy_per_sample(logits, targets);
  for (double v : out.per_sample) out.loss += v;
  out.loss /= static_cast<double>(out.per_sample.size());
  out.predicted.resize(logits.n());
  const int d = classifier.num_classes();
  for (int i = 0; i < logits.n(); ++i) {
    const S* row = logits.data.data() + static_cast<std::size_t>(i) * d;
    out.predicted[i] = static_cast<int>(std::max_element(row, row + d) - row);
  }
  return out;
}

/// Objective value only, computing W*x on the fly.
template <typename S>
double lfaa_loss(const BasicGenerator<S>& generator, const BasicClassifier<S>& classifier, const GaussianFilter& filter,
                 std::span<const ImageTensor> images, std::span<const int> targets, double epsilon) {
  std::vector<ImageArray> low;
  for (const auto& img : images) low.push_back(low_pass(img.array(), filter));
  return evaluate_lfaa_objective<S>(generator, classifier, images, low, targets, epsilon, false).loss;
}

/// Objective value and dL/dtheta.
template <typename S>
LfaaObjective<S> lfaa_loss_and_gradient(const BasicGenerator<S>& generator, const BasicClassifier<S>& classifier,
                                        const GaussianFilter& filter, std::span<const ImageTensor> images,
                                        std::span<const int> targets, double epsilon) {
  std::vector<ImageArray> low;
  for (const auto& img : images) low.push_back(low_pass(img.array(), filter));
  return evaluate_lfaa_objective<S>(generator, classifier, images, low, targets, epsilon, true);
}

template <typename S>
struct TrainedGenerator {
  BasicGenerator<S> generator;
  TrainLog log;
};

/// Optimizes the generator against a frozen classifier; only the generator's
/// parameters change. `on_step` observes each step record.
template <typename S>
TrainedGenerator<S> train_generator(const TrainConfig& config, const BasicClassifier<S>& classifier, const LabeledDataset& ds,
                                    const std::function<void(const StepRecord&)>& on_step = {},
                                    std::optional<BasicGenerator<S>> initial = std::nullopt) {
  if (!classifier.frozen()) throw StateError("train_generator requires a frozen classifier");
  config.validate(classifier.num_classes());
  if (ds.num_classes() != classifier.num_classes()) throw ShapeError("dataset and classifier class counts differ");
  if (ds.size() == 0) throw ArgumentError("empty training dataset");
  const auto start = std::chrono::steady_clock::now();

  BasicGenerator<S> generator =
      initial ? std::move(*initial) : BasicGenerator<S>(classifier.num_classes(), ds.shape(), config.arch, config.seed);
  generator.set_training_budget(config.kernel_k, config.epsilon);
  const GaussianFilter filter(config.kernel_k);
  std::vector<ImageArray> low;
  low.reserve(ds.size());
  for (const auto& img : ds.images) low.push_back(low_pass(img.array(), filter));

  nn::Adam<S> adam({config.learning_rate, config.beta1, config.beta2, 1e-8});
  auto params = generator.mutable_parameters();
  std::mt19937_64 target_stream(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const int batch_size = std::min<int>(config.batch_size, static_cast<int>(ds.size()));

  TrainLog log;
  log.seed = config.seed;
  log.config = config;
  std::uint64_t epoch = 0;
  std::vector<Batch> batches;
  std::size_t next = 0;
  double window_sum = 0.0, prev_window = -1.0;
  // Outputs drift past the clamp as training goes on; once every coordinate is
  // clamped the gradient is exactly zero and the run cannot recover. Keeping the
  // best block's weights means a late collapse does not cost the result.
  double best_block = std::numeric_limits<double>::infinity();
  std::optional<BasicGenerator<S>> best;
  int best_step = -1;
  double block_sum = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    if (next == batches.size()) {
      batches = batch_iter(ds, batch_size, config.seed, epoch++);
      next = 0;
    }
    const Batch& batch = batches[next++];
    std::vector<ImageArray> batch_low;
    for (std::size_t i : batch.indices) batch_low.push_back(low[i]);
    const auto targets = sample_targets(static_cast<int>(batch.images.size()), config.target_classes, target_stream);
    auto obj = evaluate_lfaa_objective<S>(generator, classifier, batch.images, batch_low, targets, config.epsilon, true);
    adam.step(params, obj.generator_grads);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) hits += obj.predicted[i] == targets[i];
    StepRecord rec{step, obj.loss, static_cast<double>(hits) / targets.size()};
    log.steps.push_back(rec);
    if (on_step) on_step(rec);

    window_sum += rec.loss;
    block_sum += rec.loss;
    if (config.keep_best_window > 0 && (step + 1) % config.keep_best_window == 0) {
      if (block_sum < best_block) {
        best_block = block_sum;
        best = generator;
        best_step = step;
      }
      block_sum = 0.0;
    }
    if ((step + 1) % config.early_stop_window == 0) {
      const double cur = window_sum / config.early_stop_window;
      window_sum = 0.0;
      if (config.early_stop_min_improvement > 0.0 && prev_window > 0.0 &&
          (prev_window - cur) / prev_window < config.early_stop_min_improvement) {
        log.early_stopped = true;
        break;
      }
      prev_window = cur;
    }
  }
  log.kept_step = log.steps.empty() ? -1 : log.steps.back().step;
  if (best && best_step != log.kept_step) {
    // A trailing partial block competes on its mean.
    const std::size_t tail = log.steps.size() % config.keep_best_window;
    if (tail == 0 || best_block / config.keep_best_window < block_sum / static_cast<double>(tail)) {
      generator = std::move(*best);
      log.kept_step = best_step;
    }
  }
  log.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(generator), std::move(log)};
}

}  // namespace lfaa
