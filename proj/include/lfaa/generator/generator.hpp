#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/nn/checkpoint.hpp"
#include "lfaa/nn/image_batch.hpp"
#include "lfaa/nn/layers.hpp"

namespace lfaa {

/// One-hot vector of length d selecting target class c.
class TargetClassEncoding {
 public:
  TargetClassEncoding(int target, int num_classes) : target_(target), num_classes_(num_classes) {
    if (num_classes < 1 || target < 0 || target >= num_classes)
      throw ArgumentError("target class " + std::to_string(target) + " out of range [0," + std::to_string(num_classes) + ")");
  }

  /// Validates an explicit vector: entries must be 0 or 1 with exactly one 1.
  static TargetClassEncoding from_vector(std::span<const double> v) {
    int hot = -1;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 1.0) {
        if (hot >= 0) throw ArgumentError("malformed one-hot encoding: more than one active entry");
        hot = static_cast<int>(i);
      } else if (v[i] != 0.0) {
        throw ArgumentError("malformed one-hot encoding: non-binary entry " + std::to_string(v[i]));
      }
    }
    if (hot < 0) throw ArgumentError("malformed one-hot encoding: no active entry");
    return TargetClassEncoding(hot, static_cast<int>(v.size()));
  }

  int target() const { return target_; }
  int size() const { return num_classes_; }
  std::vector<double> vector() const {
    std::vector<double> v(num_classes_, 0.0);
    v[target_] = 1.0;
    return v;
  }

 private:
  int target_;
  int num_classes_;
};

inline std::vector<TargetClassEncoding> encode_targets(std::span<const int> targets, int num_classes) {
  std::vector<TargetClassEncoding> out;
  out.reserve(targets.size());
  for (int t : targets) out.emplace_back(t, num_classes);
  return out;
}

/// Encoder-decoder architecture knobs.
struct GeneratorArch {
  int base_width = 32;  ///< channels after the first downsampling stage; doubles twice
  int embed_dim = 8;    ///< width of the learned class embedding maps
  int res_blocks = 4;

  bool operator==(const GeneratorArch&) const = default;
};

inline constexpr int kGeneratorFormatVersion = 1;

/// Backward-pass state of one generator forward.
template <typename S>
struct GeneratorTape {
  nn::Cache<S> embed, encoder, fuse, middle, decoder;
  int height = 0, width = 0, bottleneck_h = 0, bottleneck_w = 0;
};

/// Conditional generator G(x, onehot(c)) -> perturbation in [-1, 1], same shape as x.
///
/// Layout: class embedding (linear d -> E) broadcast and concatenated with the
/// image; three stride-2 conv stages (w, 2w, 4w); the embedding is concatenated
/// again at the bottleneck and fused by a 1x1 conv; `res_blocks` residual blocks;
/// three nearest-upsample + conv stages; a 3x3 conv to C channels and tanh.
template <typename S>
class BasicGenerator {
 public:
  BasicGenerator(int num_classes, ImageShape shape, GeneratorArch arch, std::uint64_t seed)
      : num_classes_(num_classes), shape_(shape), arch_(arch), seed_(seed), embed_(num_classes, arch.embed_dim) {
    if (num_classes < 2) throw ArgumentError("generator needs at least 2 classes");
    if (!shape.valid() || shape.height % 8 != 0 || shape.width % 8 != 0)
      throw ShapeError("generator input must be HxWxC with H, W divisible by 8, got " + shape.str());
    if (arch.base_width < 1 || arch.embed_dim < 1 || arch.res_blocks < 0) throw ArgumentError("invalid generator arch");
    build();
    std::mt19937_64 rng(seed_);
    embed_.init(rng);
    encoder_.init(rng);
    fuse_.init(rng);
    middle_.init(rng);
    decoder_.init(rng);
  }

  int num_classes() const { return num_classes_; }
  const ImageShape& image_shape() const { return shape_; }
  const GeneratorArch& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }

  /// Gaussian kernel parameter and budget the generator was trained with, if any.
  std::optional<int> trained_k() const { return trained_k_; }
  std::optional<double> trained_epsilon() const { return trained_epsilon_; }
  void set_training_budget(int k, double epsilon) {
    trained_k_ = k;
    trained_epsilon_ = epsilon;
  }

  /// NCHW forward. Row i depends only on image i and encoding i.
  Tensor<S> forward(const Tensor<S>& x, std::span<const TargetClassEncoding> enc, GeneratorTape<S>* tape = nullptr) const {
    if (x.c() != shape_.channels || x.h() != shape_.height || x.w() != shape_.width)
      throw ShapeError("generator expects " + shape_.str() + " images");
    if (static_cast<int>(enc.size()) != x.n()) throw ShapeError("one encoding per image required");
    Tensor<S> onehot(x.n(), num_classes_, 1, 1);
    for (int i = 0; i < x.n(); ++i) {
      if (enc[i].size() != num_classes_)
        throw ArgumentError("encoding of length " + std::to_string(enc[i].size()) + " given to a generator with " +
                            std::to_string(num_classes_) + " classes");
      onehot(i, enc[i].target(), 0, 0) = S(1);
    }
    const Tensor<S> e = embed_.forward(onehot, tape ? &tape->embed : nullptr);
    Tensor<S> h = encoder_.forward(concat_embedding(x, e), tape ? &tape->encoder : nullptr);
    if (tape) {
      tape->height = x.h();
      tape->width = x.w();
      tape->bottleneck_h = h.h();
      tape->bottleneck_w = h.w();
    }
    h = fuse_.forward(concat_embedding(h, e), tape ? &tape->fuse : nullptr);
    h = middle_.forward(h, tape ? &tape->middle : nullptr);
    return decoder_.forward(h, tape ? &tape->decoder : nullptr);
  }

  /// Back-propagates dL/d(output) and returns parameter gradients (parameters() order).
  std::vector<Tensor<S>> backward(const Tensor<S>& grad_out, const GeneratorTape<S>& tape) const {
    auto grads = nn::zeros_like(parameters());
    std::span<Tensor<S>> all(grads);
    std::size_t off = 0;
    auto slice = [&](const nn::Layer<S>& l) {
      const std::size_t n = l.num_params();
      auto s = all.subspan(off, n);
      off += n;
      return s;
    };
    auto g_embed = slice(embed_);
    auto g_encoder = slice(encoder_);
    auto g_fuse = slice(fuse_);
    auto g_middle = slice(middle_);
    auto g_decoder = slice(decoder_);

    Tensor<S> g = decoder_.backward(grad_out, tape.decoder, g_decoder);
    g = middle_.backward(g, tape.middle, g_middle);
    g = fuse_.backward(g, tape.fuse, g_fuse);
    const int wide = 4 * arch_.base_width;
    Tensor<S> grad_e(g.n(), arch_.embed_dim, 1, 1);
    Tensor<S> g_h = split_embedding(g, wide, grad_e);
    g = encoder_.backward(g_h, tape.encoder, g_encoder);
    split_embedding(g, shape_.channels, grad_e);
    embed_.backward(grad_e, tape.embed, g_embed);
    return grads;
  }

  /// HWC convenience wrapper.
  std::vector<ImageArray> perturb(std::span<const ImageTensor> images, std::span<const TargetClassEncoding> enc) const {
    return nn::split_nchw(forward(nn::to_nchw<S>(images), enc));
  }

  std::vector<const Tensor<S>*> parameters() const {
    std::vector<const Tensor<S>*> p;
    embed_.collect_params(p);
    encoder_.collect_params(p);
    fuse_.collect_params(p);
    middle_.collect_params(p);
    decoder_.collect_params(p);
    return p;
  }
  std::vector<Tensor<S>*> mutable_parameters() {
    std::vector<Tensor<S>*> p;
    embed_.collect_params(p);
    encoder_.collect_params(p);
    fuse_.collect_params(p);
    middle_.collect_params(p);
    decoder_.collect_params(p);
    return p;
  }

  nlohmann::json description() const {
    nlohmann::json j{{"kind", "generator"},
                     {"format_version", kGeneratorFormatVersion},
                     {"num_classes", num_classes_},
                     {"input_shape", {shape_.height, shape_.width, shape_.channels}},
                     {"base_width", arch_.base_width},
                     {"embed_dim", arch_.embed_dim},
                     {"res_blocks", arch_.res_blocks},
                     {"seed", seed_}};
    j["trained_k"] = trained_k_ ? nlohmann::json(*trained_k_) : nlohmann::json(nullptr);
    j["trained_epsilon"] = trained_epsilon_ ? nlohmann::json(*trained_epsilon_) : nlohmann::json(nullptr);
    return j;
  }

  std::string digest() const { return nn::parameter_digest<S>(description().dump(), parameters()); }

  void save(const std::filesystem::path& path) const { nn::write_checkpoint<S>(path, description(), parameters()); }

  static BasicGenerator load(const std::filesystem::path& path) {
    auto ckpt = nn::read_checkpoint<S>(path);
    const nlohmann::json& m = ckpt.meta;
    try {
      if (m.at("kind").get<std::string>() != "generator") throw FormatError(path.string() + " is not a generator checkpoint");
      const int version = m.at("format_version").get<int>();
      if (version != kGeneratorFormatVersion)
        throw FormatError("generator checkpoint " + path.string() + " has format version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kGeneratorFormatVersion));
      const auto shape = m.at("input_shape").get<std::vector<int>>();
      if (shape.size() != 3) throw FormatError("bad input_shape in " + path.string());
      GeneratorArch arch{m.at("base_width").get<int>(), m.at("embed_dim").get<int>(), m.at("res_blocks").get<int>()};
      BasicGenerator g(m.at("num_classes").get<int>(), {shape[0], shape[1], shape[2]}, arch, m.at("seed").get<std::uint64_t>());
      if (!m.at("trained_k").is_null()) g.set_training_budget(m.at("trained_k").get<int>(), m.at("trained_epsilon").get<double>());
      auto params = g.mutable_parameters();
      if (params.size() != ckpt.tensors.size()) throw FormatError("parameter count mismatch in " + path.string());
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != ckpt.tensors[i].shape) throw ShapeError("parameter shape mismatch in " + path.string());
        *params[i] = std::move(ckpt.tensors[i]);
      }
      return g;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed generator checkpoint " + path.string() + ": " + e.what());
    }
  }

 private:
  void build() {
    using namespace nn;
    const int w = arch_.base_width, e = arch_.embed_dim, c = shape_.channels;
    encoder_.template add<Conv2d<S>>(c + e, w, 3, 2, 1).template add<SiLU<S>>();
    encoder_.template add<Conv2d<S>>(w, 2 * w, 3, 2, 1).template add<SiLU<S>>();
    encoder_.template add<Conv2d<S>>(2 * w, 4 * w, 3, 2, 1).template add<SiLU<S>>();
    fuse_.template add<Conv2d<S>>(4 * w + e, 4 * w, 1).template add<SiLU<S>>();
    for (int i = 0; i < arch_.res_blocks; ++i) {
      Sequential<S> body;
      body.template add<Conv2d<S>>(4 * w, 4 * w, 3).template add<SiLU<S>>();
      body.template add<Conv2d<S>>(4 * w, 4 * w, 3, 1, -1, 0.3);
      middle_.add(std::make_unique<Residual<S>>(std::move(body)));
    }
    decoder_.template add<Upsample<S>>(2).template add<Conv2d<S>>(4 * w, 2 * w, 3).template add<SiLU<S>>();
    decoder_.template add<Upsample<S>>(2).template add<Conv2d<S>>(2 * w, w, 3).template add<SiLU<S>>();
    decoder_.template add<Upsample<S>>(2).template add<Conv2d<S>>(w, w, 3).template add<SiLU<S>>();
    // Small initial output keeps early perturbations inside the budget.
    decoder_.template add<Conv2d<S>>(w, c, 3, 1, -1, 0.1).template add<Tanh<S>>();
  }

  /// [x, broadcast(e)] along channels.
  static Tensor<S> concat_embedding(const Tensor<S>& x, const Tensor<S>& e) {
    const int ec = e.c();
    Tensor<S> out(x.n(), x.c() + ec, x.h(), x.w());
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    for (int b = 0; b < x.n(); ++b) {
      std::copy_n(&x(b, 0, 0, 0), x.sample_size(), &out(b, 0, 0, 0));
      for (int c = 0; c < ec; ++c) std::fill_n(&out(b, x.c() + c, 0, 0), hw, e(b, c, 0, 0));
    }
    return out;
  }

  /// Splits a gradient of concat_embedding: returns the first `channels` part and
  /// adds the spatially summed remainder into `grad_e`.
  static Tensor<S> split_embedding(const Tensor<S>& g, int channels, Tensor<S>& grad_e) {
    Tensor<S> out(g.n(), channels, g.h(), g.w());
    const std::size_t hw = static_cast<std::size_t>(g.h()) * g.w();
    for (int b = 0; b < g.n(); ++b) {
      std::copy_n(&g(b, 0, 0, 0), out.sample_size(), &out(b, 0, 0, 0));
      for (int c = 0; c < grad_e.c(); ++c) {
        const S* src = &g(b, channels + c, 0, 0);
        S acc = 0;
        for (std::size_t i = 0; i < hw; ++i) acc += src[i];
        grad_e(b, c, 0, 0) += acc;
      }
    }
    return out;
  }

  int num_classes_;
  ImageShape shape_;
  GeneratorArch arch_;
  std::uint64_t seed_;
  std::optional<int> trained_k_;
  std::optional<double> trained_epsilon_;
  nn::Linear<S> embed_;
  nn::Sequential<S> encoder_, fuse_, middle_, decoder_;
};

using ConditionalGenerator = BasicGenerator<float>;

template <typename S = float>
BasicGenerator<S> build_generator(int num_classes, ImageShape shape, std::uint64_t seed, GeneratorArch arch = {}) {
  return BasicGenerator<S>(num_classes, shape, arch, seed);
}

}  // namespace lfaa
