#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"
#include "lfaa/imaging/dataset.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/nn/adam.hpp"
#include "lfaa/nn/checkpoint.hpp"
#include "lfaa/nn/image_batch.hpp"
#include "lfaa/nn/layers.hpp"
#include "lfaa/nn/loss.hpp"

namespace lfaa {

/// Registered classifier architectures. All use smooth activations and
/// average pooling so their gradients are differentiable everywhere.
///   plain    - VGG-style conv stack with a two-layer dense head
///   residual - strided stages with identity-skip blocks and global pooling
///   wide     - one wide 5x5 layer, pooling, two strided 3x3 layers
inline const std::vector<std::string>& classifier_registry() {
  static const std::vector<std::string> kArchs{"plain", "residual", "wide"};
  return kArchs;
}

inline bool is_registered_arch(const std::string& arch) {
  const auto& r = classifier_registry();
  return std::find(r.begin(), r.end(), arch) != r.end();
}

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probabilities;
  int predicted = 0;
};

/// Cross-entropy and dL/dx for a batch, in the network's scalar type.
template <typename S>
struct LossGradient {
  double loss = 0.0;
  Tensor<S> grad_input;
  Tensor<S> logits;
};

inline constexpr int kClassifierFormatVersion = 1;

/// A classifier F_phi: image batch -> d logits. Value type; copying duplicates
/// the parameters. Frozen classifiers refuse every parameter mutation.
template <typename S>
class BasicClassifier {
 public:
  BasicClassifier(std::string arch, int num_classes, ImageShape shape, int width, std::uint64_t seed)
      : arch_(std::move(arch)), num_classes_(num_classes), shape_(shape), width_(width), seed_(seed) {
    if (!is_registered_arch(arch_)) throw ArgumentError("unknown classifier architecture '" + arch_ + "'");
    if (num_classes_ < 2) throw ArgumentError("classifier needs at least 2 classes");
    if (width_ < 1) throw ArgumentError("classifier width must be positive");
    if (!shape_.valid()) throw ShapeError("invalid classifier input shape " + shape_.str());
    build();
    std::mt19937_64 rng(seed_);
    net_.init(rng);
  }

  const std::string& arch() const { return arch_; }
  int num_classes() const { return num_classes_; }
  const ImageShape& input_shape() const { return shape_; }
  int width() const { return width_; }
  std::uint64_t seed() const { return seed_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  /// Logits {n, d, 1, 1} for an NCHW batch.
  Tensor<S> logits(const Tensor<S>& x) const {
    check_input(x);
    return net_.forward(x, nullptr);
  }

  /// Mean CE against `labels` and its gradient w.r.t. the input batch.
  LossGradient<S> loss_and_input_gradient(const Tensor<S>& x, std::span<const int> labels) const {
    check_input(x);
    nn::Cache<S> cache;
    Tensor<S> out = net_.forward(x, &cache);
    Tensor<S> g;
    LossGradient<S> r;
    r.loss = nn::mean_cross_entropy(out, labels, &g);
    auto scratch = param_scratch();
    r.grad_input = net_.backward(g, cache, scratch);
    r.logits = std::move(out);
    return r;
  }

  std::vector<Prediction> predict(std::span<const ImageTensor> batch) const {
    const Tensor<S> out = logits(nn::to_nchw<S>(batch));
    std::vector<Prediction> preds(out.n());
    for (int i = 0; i < out.n(); ++i) {
      const S* row = out.data.data() + static_cast<std::size_t>(i) * num_classes_;
      auto& p = preds[i];
      p.logits.assign(row, row + num_classes_);
      p.probabilities = nn::softmax_row(row, num_classes_);
      p.predicted = static_cast<int>(std::max_element(p.logits.begin(), p.logits.end()) - p.logits.begin());
    }
    return preds;
  }

  /// Argmax labels only.
  std::vector<int> predict_labels(const Tensor<S>& x) const {
    const Tensor<S> out = logits(x);
    std::vector<int> labels(out.n());
    for (int i = 0; i < out.n(); ++i) {
      const S* row = out.data.data() + static_cast<std::size_t>(i) * num_classes_;
      labels[i] = static_cast<int>(std::max_element(row, row + num_classes_) - row);
    }
    return labels;
  }

  double ce_loss(std::span<const ImageTensor> batch, std::span<const int> labels) const {
    return nn::mean_cross_entropy<S>(logits(nn::to_nchw<S>(batch)), labels, nullptr);
  }

  /// d(mean CE)/dx, one HWC array per image.
  std::vector<ImageArray> input_gradient(std::span<const ImageTensor> batch, std::span<const int> labels) const {
    return nn::split_nchw(loss_and_input_gradient(nn::to_nchw<S>(batch), labels).grad_input);
  }

  std::vector<const Tensor<S>*> parameters() const {
    std::vector<const Tensor<S>*> p;
    net_.collect_params(p);
    return p;
  }

  /// Mutable parameter access; throws if frozen.
  std::vector<Tensor<S>*> mutable_parameters() {
    if (frozen_) throw StateError("classifier '" + arch_ + "' is frozen; its parameters are read-only");
    std::vector<Tensor<S>*> p;
    net_.collect_params(p);
    return p;
  }

  /// Full training pass: loss, parameter gradients.
  double loss_and_param_gradients(const Tensor<S>& x, std::span<const int> labels, std::vector<Tensor<S>>& grads,
                                  std::vector<int>* predicted = nullptr) const {
    check_input(x);
    nn::Cache<S> cache;
    Tensor<S> out = net_.forward(x, &cache);
    if (predicted) {
      predicted->resize(out.n());
      for (int i = 0; i < out.n(); ++i) {
        const S* row = out.data.data() + static_cast<std::size_t>(i) * num_classes_;
        (*predicted)[i] = static_cast<int>(std::max_element(row, row + num_classes_) - row);
      }
    }
    Tensor<S> g;
    const double loss = nn::mean_cross_entropy(out, labels, &g);
    grads = nn::zeros_like(parameters());
    net_.backward(g, cache, grads);
    return loss;
  }

  nlohmann::json description() const {
    return {{"kind", "classifier"},
            {"format_version", kClassifierFormatVersion},
            {"arch", arch_},
            {"num_classes", num_classes_},
            {"input_shape", {shape_.height, shape_.width, shape_.channels}},
            {"width", width_},
            {"seed", seed_}};
  }

  /// SHA-256 over the architecture description and parameter bytes.
  std::string digest() const { return nn::parameter_digest<S>(description().dump(), parameters()); }

  void save(const std::filesystem::path& path) const { nn::write_checkpoint<S>(path, description(), parameters()); }

  /// Loads a checkpoint; the result is frozen. `expected_classes` > 0 enforces d.
  static BasicClassifier load(const std::filesystem::path& path, int expected_classes = 0) {
    auto ckpt = nn::read_checkpoint<S>(path);
    const nlohmann::json& m = ckpt.meta;
    try {
      if (m.at("kind").get<std::string>() != "classifier") throw FormatError(path.string() + " is not a classifier checkpoint");
      if (m.at("format_version").get<int>() != kClassifierFormatVersion)
        throw FormatError("unsupported classifier checkpoint version in " + path.string());
      const auto shape = m.at("input_shape").get<std::vector<int>>();
      if (shape.size() != 3) throw FormatError("bad input_shape in " + path.string());
      const int d = m.at("num_classes").get<int>();
      if (expected_classes > 0 && d != expected_classes)
        throw ShapeError("checkpoint " + path.string() + " has " + std::to_string(d) + " classes, expected " +
                         std::to_string(expected_classes));
      BasicClassifier c(m.at("arch").get<std::string>(), d, {shape[0], shape[1], shape[2]}, m.at("width").get<int>(),
                        m.at("seed").get<std::uint64_t>());
      auto params = c.mutable_parameters();
      if (params.size() != ckpt.tensors.size()) throw FormatError("parameter count mismatch in " + path.string());
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != ckpt.tensors[i].shape) throw ShapeError("parameter shape mismatch in " + path.string());
        *params[i] = std::move(ckpt.tensors[i]);
      }
      c.freeze();
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed classifier checkpoint " + path.string() + ": " + e.what());
    }
  }

 private:
  void check_input(const Tensor<S>& x) const {
    if (x.c() != shape_.channels || x.h() != shape_.height || x.w() != shape_.width)
      throw ShapeError("classifier expects " + shape_.str() + " images, got " + std::to_string(x.h()) + "x" +
                       std::to_string(x.w()) + "x" + std::to_string(x.c()));
  }

  std::vector<Tensor<S>> param_scratch() const { return nn::zeros_like(parameters()); }

  void build() {
    using namespace nn;
    const int w = width_, c = shape_.channels;
    net_.template add<Affine<S>>(0.5, 4.0);
    if (arch_ == "plain") {
      if (shape_.height % 8 || shape_.width % 8) throw ShapeError("plain classifier needs H, W divisible by 8");
      net_.template add<Conv2d<S>>(c, w, 3).template add<SiLU<S>>();
      net_.template add<Conv2d<S>>(w, w, 3).template add<SiLU<S>>().template add<AvgPool<S>>(2);
      net_.template add<Conv2d<S>>(w, 2 * w, 3).template add<SiLU<S>>();
      net_.template add<Conv2d<S>>(2 * w, 2 * w, 3).template add<SiLU<S>>().template add<AvgPool<S>>(2);
      net_.template add<Conv2d<S>>(2 * w, 4 * w, 3).template add<SiLU<S>>().template add<AvgPool<S>>(2);
      const int flat = 4 * w * (shape_.height / 8) * (shape_.width / 8);
      net_.template add<Linear<S>>(flat, 4 * w).template add<SiLU<S>>();
      net_.template add<Linear<S>>(4 * w, num_classes_);
    } else if (arch_ == "residual") {
      auto block = [](int ch) {
        Sequential<S> body;
        body.template add<Conv2d<S>>(ch, ch, 3).template add<SiLU<S>>().template add<Conv2d<S>>(ch, ch, 3, 1, -1, 0.5);
        return std::make_unique<Residual<S>>(std::move(body));
      };
      net_.template add<Conv2d<S>>(c, w, 3).template add<SiLU<S>>();
      net_.add(block(w)).template add<SiLU<S>>();
      net_.template add<Conv2d<S>>(w, 2 * w, 3, 2, 1).template add<SiLU<S>>();
      net_.add(block(2 * w)).template add<SiLU<S>>();
      net_.template add<Conv2d<S>>(2 * w, 4 * w, 3, 2, 1).template add<SiLU<S>>();
      net_.add(block(4 * w)).template add<SiLU<S>>();
      net_.template add<GlobalAvgPool<S>>().template add<Linear<S>>(4 * w, num_classes_);
    } else {  // wide
      if (shape_.height % 2 || shape_.width % 2) throw ShapeError("wide classifier needs even H, W");
      net_.template add<Conv2d<S>>(c, 4 * w, 5).template add<SiLU<S>>().template add<AvgPool<S>>(2);
      net_.template add<Conv2d<S>>(4 * w, 4 * w, 3, 2, 1).template add<SiLU<S>>();
      net_.template add<Conv2d<S>>(4 * w, 4 * w, 3, 2, 1).template add<SiLU<S>>();
      net_.template add<GlobalAvgPool<S>>().template add<Linear<S>>(4 * w, num_classes_);
    }
  }

  std::string arch_;
  int num_classes_;
  ImageShape shape_;
  int width_;
  std::uint64_t seed_;
  bool frozen_ = false;
  nn::Sequential<S> net_;
};

/// Production classifiers run in single precision.
using Classifier = BasicClassifier<float>;

inline constexpr int kDefaultClassifierWidth = 16;

template <typename S = float>
BasicClassifier<S> build_classifier(const std::string& arch, int num_classes, std::uint64_t seed,
                                    ImageShape shape = {32, 32, 3}, int width = kDefaultClassifierWidth) {
  return BasicClassifier<S>(arch, num_classes, shape, width, seed);
}

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct ClassifierTrainOptions {
  int epochs = 10;
  double learning_rate = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// Trains a copy of `c` with Adam (beta1 0.9) on mean cross-entropy.
/// `on_epoch`, if set, receives the training curve as it is produced.
template <typename S>
BasicClassifier<S> train_classifier(const BasicClassifier<S>& c, const LabeledDataset& ds, const ClassifierTrainOptions& opt,
                                    std::vector<EpochRecord>* curve = nullptr,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (c.frozen()) throw StateError("cannot train frozen classifier '" + c.arch() + "'");
  if (opt.epochs < 0) throw ArgumentError("epochs must be non-negative");
  if (ds.num_classes() != c.num_classes())
    throw ShapeError("dataset has " + std::to_string(ds.num_classes()) + " classes, classifier " +
                     std::to_string(c.num_classes()));
  BasicClassifier<S> out = c;
  nn::Adam<S> adam({opt.learning_rate, 0.9, 0.999, 1e-8});
  auto params = out.mutable_parameters();
  std::vector<Tensor<S>> grads;
  for (int e = 0; e < opt.epochs; ++e) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : batch_iter(ds, std::min<int>(opt.batch_size, static_cast<int>(ds.size())), opt.seed,
                                        static_cast<std::uint64_t>(e))) {
      const Tensor<S> x = nn::to_nchw<S>(batch.images);
      std::vector<int> pred;
      loss_sum += out.loss_and_param_gradients(x, batch.labels, grads, &pred) * static_cast<double>(batch.labels.size());
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
      adam.step(params, grads);
    }
    EpochRecord rec{e, loss_sum / ds.size(), static_cast<double>(correct) / ds.size()};
    if (curve) curve->push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return out;
}

template <typename S>
double accuracy(const BasicClassifier<S>& c, const LabeledDataset& ds, int batch_size = 100) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
    const auto labels = c.predict_labels(
        nn::to_nchw<S>(std::span<const ImageTensor>(ds.images.data() + start, end - start)));
    for (std::size_t i = start; i < end; ++i) correct += labels[i - start] == ds.labels[i];
  }
  return static_cast<double>(correct) / ds.size();
}

}  // namespace lfaa
