#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/attacks/projection.hpp"
#include "lfaa/classifiers/classifier.hpp"
#include "lfaa/core/errors.hpp"
#include "lfaa/frequency/gaussian.hpp"
#include "lfaa/generator/generator.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/nn/image_batch.hpp"

namespace lfaa {

enum class AttackKind { lfaa, fgsm, ifgsm, mifgsm, hf_swap };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::lfaa: return "lfaa";
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::ifgsm: return "ifgsm";
    case AttackKind::mifgsm: return "mifgsm";
    case AttackKind::hf_swap: return "hf_swap";
  }
  return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
  for (auto k : {AttackKind::lfaa, AttackKind::fgsm, AttackKind::ifgsm, AttackKind::mifgsm, AttackKind::hf_swap})
    if (to_string(k) == s) return k;
  throw ArgumentError("unknown attack kind '" + s + "' (expected lfaa, fgsm, ifgsm, mifgsm or hf_swap)");
}

/// Everything needed to reproduce one attack configuration.
struct AttackSpec {
  AttackKind kind = AttackKind::mifgsm;
  EpsilonBudget budget{16.0 / 255.0};
  int iterations = 10;
  /// Step size; unset means budget / iterations.
  std::optional<double> step_size;
  double momentum = 1.0;
  int kernel_k = 4;
  int target_class = 0;

  double alpha() const { return step_size ? *step_size : budget.value() / iterations; }

  void validate() const {
    const bool iterative = kind == AttackKind::ifgsm || kind == AttackKind::mifgsm;
    if (iterative && iterations < 1) throw ArgumentError("iterations must be >= 1 for iterative attacks");
    if (iterative && (!(alpha() >= 0.0) || (alpha() == 0.0 && budget.value() > 0.0)))
      throw ArgumentError("step size must be positive unless the budget is zero");
    if (momentum < 0.0) throw ArgumentError("momentum must be non-negative");
    if ((kind == AttackKind::lfaa || kind == AttackKind::hf_swap) && kernel_k < 1) throw ArgumentError("kernel k must be >= 1");
    if (target_class < 0) throw ArgumentError("target class must be non-negative");
  }

  std::string label() const { return to_string(kind); }
};

inline void to_json(nlohmann::json& j, const AttackSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"epsilon", s.budget.value()},
                     {"iterations", s.iterations},
                     {"momentum", s.momentum},
                     {"kernel_k", s.kernel_k},
                     {"target_class", s.target_class}};
  j["step_size"] = s.step_size ? nlohmann::json(*s.step_size) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, AttackSpec& s) {
  static const std::vector<std::string> kKeys{"kind", "epsilon", "iterations", "step_size", "momentum", "kernel_k", "target_class"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) throw ArgumentError("unknown attack key '" + key + "'");
  }
  s = AttackSpec{};
  s.kind = parse_attack_kind(j.at("kind").get<std::string>());
  if (j.contains("epsilon")) s.budget = EpsilonBudget(j.at("epsilon").get<double>());
  if (j.contains("iterations")) s.iterations = j.at("iterations").get<int>();
  if (j.contains("step_size") && !j.at("step_size").is_null()) s.step_size = j.at("step_size").get<double>();
  if (j.contains("momentum")) s.momentum = j.at("momentum").get<double>();
  if (j.contains("kernel_k")) s.kernel_k = j.at("kernel_k").get<int>();
  if (j.contains("target_class")) s.target_class = j.at("target_class").get<int>();
  s.validate();
}

namespace detail {

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

template <typename S>
std::vector<ImageArray> target_gradients(const BasicClassifier<S>& model, const std::vector<ImageTensor>& images,
                                         std::span<const int> targets) {
  return nn::split_nchw(model.loss_and_input_gradient(nn::to_nchw<S>(images), targets).grad_input);
}

/// x_cur - step * sign(direction), projected onto the ball of x.
inline ImageTensor signed_step(const ImageTensor& cur, const ImageArray& direction, double step, const ImageTensor& x,
                               const EpsilonBudget& eps) {
  ImageArray raw(cur.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = cur[i] - step * sign0(direction[i]);
  return clip_project(raw, x, eps);
}

inline void check_targets(std::size_t n_images, std::span<const int> targets, int num_classes) {
  if (targets.size() != n_images) throw ShapeError("one target class per image required");
  for (int t : targets)
    if (t < 0 || t >= num_classes) throw ArgumentError("target class " + std::to_string(t) + " out of range");
}

}  // namespace detail

/// Targeted FGSM: clip(x - eps * sign(grad_x CE(x, c))), with sign(0) = 0.
template <typename S>
std::vector<ImageTensor> fgsm_targeted(std::span<const ImageTensor> x, std::span<const int> targets,
                                       const BasicClassifier<S>& model, const EpsilonBudget& eps) {
  detail::check_targets(x.size(), targets, model.num_classes());
  std::vector<ImageTensor> images(x.begin(), x.end());
  const auto grads = detail::target_gradients(model, images, targets);
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < images.size(); ++i)
    out.push_back(detail::signed_step(images[i], grads[i], eps.value(), images[i], eps));
  return out;
}

/// Iterative targeted FGSM; each step is projected onto the ball of the original x.
template <typename S>
std::vector<ImageTensor> ifgsm_targeted(std::span<const ImageTensor> x, std::span<const int> targets,
                                        const BasicClassifier<S>& model, const EpsilonBudget& eps, int iterations,
                                        double alpha) {
  if (iterations < 1 || !(alpha > 0.0 || (alpha == 0.0 && eps.value() == 0.0)))
    throw ArgumentError("ifgsm needs iterations >= 1 and alpha > 0 unless the budget is zero");
  detail::check_targets(x.size(), targets, model.num_classes());
  const std::vector<ImageTensor> orig(x.begin(), x.end());
  std::vector<ImageTensor> cur = orig;
  for (int t = 0; t < iterations; ++t) {
    const auto grads = detail::target_gradients(model, cur, targets);
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = detail::signed_step(cur[i], grads[i], alpha, orig[i], eps);
  }
  return cur;
}

/// Momentum iterative FGSM: g <- mu g + grad / ||grad||_1, x <- clip(x - alpha sign(g)).
template <typename S>
std::vector<ImageTensor> mifgsm_targeted(std::span<const ImageTensor> x, std::span<const int> targets,
                                         const BasicClassifier<S>& model, const EpsilonBudget& eps, int iterations,
                                         double alpha, double momentum) {
  if (iterations < 1 || !(alpha > 0.0 || (alpha == 0.0 && eps.value() == 0.0)) || momentum < 0.0)
    throw ArgumentError("mifgsm needs iterations >= 1, alpha > 0 unless the budget is zero, and momentum >= 0");
  detail::check_targets(x.size(), targets, model.num_classes());
  const std::vector<ImageTensor> orig(x.begin(), x.end());
  std::vector<ImageTensor> cur = orig;
  std::vector<ImageArray> accum;
  for (const auto& img : orig) accum.emplace_back(img.shape(), 0.0);
  for (int t = 0; t < iterations; ++t) {
    const auto grads = detail::target_gradients(model, cur, targets);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      double l1 = 0.0;
      for (double v : grads[i].values()) l1 += std::abs(v);
      for (std::size_t j = 0; j < accum[i].size(); ++j)
        accum[i][j] = momentum * accum[i][j] + (l1 > 0.0 ? grads[i][j] / l1 : 0.0);
      cur[i] = detail::signed_step(cur[i], accum[i], alpha, orig[i], eps);
    }
  }
  return cur;
}

/// LFAA composition: clip_{x,eps}(G(x, onehot(c)) + W * x).
template <typename S>
std::vector<ImageTensor> lfaa_compose(std::span<const ImageTensor> x, std::span<const TargetClassEncoding> enc,
                                      const BasicGenerator<S>& generator, const GaussianFilter& filter,
                                      const EpsilonBudget& eps) {
  const auto pert = generator.perturb(x, enc);
  std::vector<ImageTensor> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    ImageArray raw = low_pass(x[i].array(), filter);
    for (std::size_t j = 0; j < raw.size(); ++j) raw[j] += pert[i][j];
    out.push_back(clip_project(raw, x[i], eps));
  }
  return out;
}

/// High-frequency substitution projected onto the budget (epsilon 1 leaves it unconstrained).
inline std::vector<ImageTensor> hf_swap_attack(std::span<const ImageTensor> x, const ImageTensor& target_image,
                                               const GaussianFilter& filter, const EpsilonBudget& eps) {
  std::vector<ImageTensor> out;
  out.reserve(x.size());
  for (const auto& img : x) out.push_back(clip_project(hf_swap(img, target_image, filter).array(), img, eps));
  return out;
}

/// Models and auxiliary inputs an AttackSpec may need.
template <typename S>
struct AttackResources {
  const BasicClassifier<S>* surrogate = nullptr;
  const BasicGenerator<S>* generator = nullptr;
  const ImageTensor* target_image = nullptr;
};

/// Runs `spec` on a batch; every image is attacked towards spec.target_class.
template <typename S>
std::vector<ImageTensor> run_attack(const AttackSpec& spec, std::span<const ImageTensor> x, const AttackResources<S>& res) {
  spec.validate();
  const std::vector<int> targets(x.size(), spec.target_class);
  auto need_model = [&]() -> const BasicClassifier<S>& {
    if (!res.surrogate) throw ArgumentError(spec.label() + " attack needs a surrogate classifier");
    return *res.surrogate;
  };
  switch (spec.kind) {
    case AttackKind::fgsm:
      return fgsm_targeted<S>(x, targets, need_model(), spec.budget);
    case AttackKind::ifgsm:
      return ifgsm_targeted<S>(x, targets, need_model(), spec.budget, spec.iterations, spec.alpha());
    case AttackKind::mifgsm:
      return mifgsm_targeted<S>(x, targets, need_model(), spec.budget, spec.iterations, spec.alpha(), spec.momentum);
    case AttackKind::lfaa: {
      if (!res.generator) throw ArgumentError("lfaa attack needs a generator");
      const auto enc = encode_targets(targets, res.generator->num_classes());
      return lfaa_compose<S>(x, enc, *res.generator, GaussianFilter(spec.kernel_k), spec.budget);
    }
    case AttackKind::hf_swap:
      if (!res.target_image) throw ArgumentError("hf_swap attack needs a target-class image");
      return hf_swap_attack(x, *res.target_image, GaussianFilter(spec.kernel_k), spec.budget);
  }
  throw ArgumentError("unhandled attack kind");
}

}  // namespace lfaa
