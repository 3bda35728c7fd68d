#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"

namespace lfaa::nn {

/// Intermediate values a layer keeps from forward for its backward pass.
template <typename S>
struct Cache {
  typename Tensor<S>::Shape input_shape{};
  std::vector<Tensor<S>> saved;
  std::vector<Cache> children;
};

/// A differentiable op. forward/backward are const: parameter gradients are
/// accumulated into caller-owned buffers, so a model can be shared read-only.
template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;

  /// `cache` may be null for inference-only calls.
  virtual Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const = 0;
  /// Returns dL/dx and adds dL/dparam into `grads` (aligned with collect_params order).
  virtual Tensor<S> backward(const Tensor<S>& grad_y, const Cache<S>& cache, std::span<Tensor<S>> grads) const = 0;

  virtual void collect_params(std::vector<Tensor<S>*>&) {}
  virtual void collect_params(std::vector<const Tensor<S>*>&) const {}
  virtual void init(std::mt19937_64&) {}
  virtual std::unique_ptr<Layer> clone() const = 0;

  std::size_t num_params() const {
    std::vector<const Tensor<S>*> p;
    collect_params(p);
    return p.size();
  }
};

template <typename S>
using LayerPtr = std::unique_ptr<Layer<S>>;

namespace detail {
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

template <typename S>
void normal_fill(Tensor<S>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data) v = static_cast<S>(stddev * dist(rng));
}
}  // namespace detail

/// 2-D convolution (square kernel, zero padding), lowered to one GEMM per batch.
template <typename S>
class Conv2d final : public Layer<S> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = -1, double init_scale = 1.0)
      : cin_(in_channels),
        cout_(out_channels),
        k_(kernel),
        stride_(stride),
        pad_(padding < 0 ? kernel / 2 : padding),
        init_scale_(init_scale),
        weight_(out_channels, in_channels, kernel, kernel),
        bias_(1, out_channels, 1, 1) {
    if (cin_ < 1 || cout_ < 1 || k_ < 1 || stride_ < 1) throw ArgumentError("conv2d: invalid geometry");
  }

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    if (x.c() != cin_)
      throw ShapeError("conv2d expects " + std::to_string(cin_) + " channels, got " + std::to_string(x.c()));
    const int n = x.n(), h = x.h(), w = x.w();
    const int ho = out_size(h), wo = out_size(w);
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: input too small");
    const int kk = cin_ * k_ * k_;
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    const std::size_t np = p * n;

    Tensor<S> cols(1, 1, kk, static_cast<int>(np));
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < cin_; ++c)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            const std::size_t row = (static_cast<std::size_t>(c) * k_ + ky) * k_ + kx;
            S* dst = cols.data.data() + row * np + b * p;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= h) continue;  // already zero
              const S* src = &x(b, c, iy, 0);
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < w) dst[oy * wo + ox] = src[ix];
              }
            }
          }

    detail::RowMat<S> y = detail::ConstMatMap<S>(weight_.data.data(), cout_, kk) *
                          detail::ConstMatMap<S>(cols.data.data(), kk, static_cast<Eigen::Index>(np));
    Tensor<S> out(n, cout_, ho, wo);
    for (int b = 0; b < n; ++b)
      for (int co = 0; co < cout_; ++co) {
        const S* src = y.data() + co * np + b * p;
        S* dst = &out(b, co, 0, 0);
        const S bias = bias_.data[co];
        for (std::size_t i = 0; i < p; ++i) dst[i] = src[i] + bias;
      }
    if (cache) {
      cache->input_shape = x.shape;
      cache->saved.push_back(std::move(cols));
    }
    return out;
  }

  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>> grads) const override {
    const auto& in = cache.input_shape;
    const int n = in[0], h = in[2], w = in[3];
    const int ho = gy.h(), wo = gy.w();
    const int kk = cin_ * k_ * k_;
    const std::size_t p = static_cast<std::size_t>(ho) * wo;
    const std::size_t np = p * n;
    const auto& cols = cache.saved.at(0);

    detail::RowMat<S> g(cout_, static_cast<Eigen::Index>(np));
    for (int b = 0; b < n; ++b)
      for (int co = 0; co < cout_; ++co) {
        const S* src = &gy(b, co, 0, 0);
        S* dst = g.data() + co * np + b * p;
        for (std::size_t i = 0; i < p; ++i) dst[i] = src[i];
      }

    detail::MatMap<S>(grads[0].data.data(), cout_, kk).noalias() +=
        g * detail::ConstMatMap<S>(cols.data.data(), kk, static_cast<Eigen::Index>(np)).transpose();
    auto gb = g.rowwise().sum();
    for (int co = 0; co < cout_; ++co) grads[1].data[co] += gb(co);

    detail::RowMat<S> dcols = detail::ConstMatMap<S>(weight_.data.data(), cout_, kk).transpose() * g;
    Tensor<S> dx(in);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < cin_; ++c)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            const std::size_t row = (static_cast<std::size_t>(c) * k_ + ky) * k_ + kx;
            const S* src = dcols.data() + row * np + b * p;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= h) continue;
              S* dst = &dx(b, c, iy, 0);
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride_ - pad_ + kx;
                if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
              }
            }
          }
    return dx;
  }

  void collect_params(std::vector<Tensor<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void collect_params(std::vector<const Tensor<S>*>& out) const override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  /// He-normal weights scaled by init_scale, zero bias.
  void init(std::mt19937_64& rng) override {
    detail::normal_fill(weight_, init_scale_ * std::sqrt(2.0 / (cin_ * k_ * k_)), rng);
    bias_.fill(S(0));
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  int cin_, cout_, k_, stride_, pad_;
  double init_scale_;
  Tensor<S> weight_;
  Tensor<S> bias_;
};

/// Fully connected layer over the flattened per-sample features; output is {n, out, 1, 1}.
template <typename S>
class Linear final : public Layer<S> {
 public:
  Linear(int in_features, int out_features, double init_scale = 1.0)
      : in_(in_features), out_(out_features), init_scale_(init_scale), weight_(1, 1, out_features, in_features),
        bias_(1, out_features, 1, 1) {
    if (in_ < 1 || out_ < 1) throw ArgumentError("linear: invalid geometry");
  }

  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    if (static_cast<int>(x.sample_size()) != in_)
      throw ShapeError("linear expects " + std::to_string(in_) + " features, got " + std::to_string(x.sample_size()));
    const int n = x.n();
    Tensor<S> out(n, out_, 1, 1);
    detail::MatMap<S> y(out.data.data(), n, out_);
    y.noalias() = detail::ConstMatMap<S>(x.data.data(), n, in_) *
                  detail::ConstMatMap<S>(weight_.data.data(), out_, in_).transpose();
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < out_; ++o) y(b, o) += bias_.data[o];
    if (cache) {
      cache->input_shape = x.shape;
      cache->saved.push_back(x);
    }
    return out;
  }

  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>> grads) const override {
    const auto& x = cache.saved.at(0);
    const int n = x.n();
    detail::ConstMatMap<S> g(gy.data.data(), n, out_);
    detail::MatMap<S>(grads[0].data.data(), out_, in_).noalias() +=
        g.transpose() * detail::ConstMatMap<S>(x.data.data(), n, in_);
    auto gb = g.colwise().sum();
    for (int o = 0; o < out_; ++o) grads[1].data[o] += gb(o);
    Tensor<S> dx(cache.input_shape);
    detail::MatMap<S>(dx.data.data(), n, in_).noalias() = g * detail::ConstMatMap<S>(weight_.data.data(), out_, in_);
    return dx;
  }

  void collect_params(std::vector<Tensor<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void collect_params(std::vector<const Tensor<S>*>& out) const override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void init(std::mt19937_64& rng) override {
    detail::normal_fill(weight_, init_scale_ * std::sqrt(1.0 / in_), rng);
    bias_.fill(S(0));
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Linear>(*this); }

 private:
  int in_, out_;
  double init_scale_;
  Tensor<S> weight_;
  Tensor<S> bias_;
};

/// x * sigmoid(x). Smooth everywhere, which keeps finite-difference checks clean.
template <typename S>
class SiLU final : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    Tensor<S> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] / (S(1) + std::exp(-x.data[i]));
    if (cache) cache->saved.push_back(x);
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>>) const override {
    const auto& x = cache.saved.at(0);
    Tensor<S> dx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const S s = S(1) / (S(1) + std::exp(-x.data[i]));
      dx.data[i] = gy.data[i] * s * (S(1) + x.data[i] * (S(1) - s));
    }
    return dx;
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<SiLU>(*this); }
};

template <typename S>
class Tanh final : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    Tensor<S> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    if (cache) cache->saved.push_back(y);
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>>) const override {
    const auto& y = cache.saved.at(0);
    Tensor<S> dx(y.shape);
    for (std::size_t i = 0; i < y.size(); ++i) dx.data[i] = gy.data[i] * (S(1) - y.data[i] * y.data[i]);
    return dx;
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Tanh>(*this); }
};

/// Non-overlapping f x f average pooling; spatial dims must be divisible by f.
template <typename S>
class AvgPool final : public Layer<S> {
 public:
  explicit AvgPool(int factor) : f_(factor) {
    if (f_ < 1) throw ArgumentError("avgpool: factor must be positive");
  }
  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    if (x.h() % f_ != 0 || x.w() % f_ != 0) throw ShapeError("avgpool: spatial size not divisible by factor");
    Tensor<S> y(x.n(), x.c(), x.h() / f_, x.w() / f_);
    const S scale = S(1) / static_cast<S>(f_ * f_);
    for (int b = 0; b < x.n(); ++b)
      for (int c = 0; c < x.c(); ++c)
        for (int iy = 0; iy < x.h(); ++iy)
          for (int ix = 0; ix < x.w(); ++ix) y(b, c, iy / f_, ix / f_) += x(b, c, iy, ix) * scale;
    if (cache) cache->input_shape = x.shape;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>>) const override {
    Tensor<S> dx(cache.input_shape);
    const S scale = S(1) / static_cast<S>(f_ * f_);
    for (int b = 0; b < dx.n(); ++b)
      for (int c = 0; c < dx.c(); ++c)
        for (int iy = 0; iy < dx.h(); ++iy)
          for (int ix = 0; ix < dx.w(); ++ix) dx(b, c, iy, ix) = gy(b, c, iy / f_, ix / f_) * scale;
    return dx;
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<AvgPool>(*this); }

 private:
  int f_;
};

template <typename S>
class GlobalAvgPool final : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    Tensor<S> y(x.n(), x.c(), 1, 1);
    const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
    for (int b = 0; b < x.n(); ++b)
      for (int c = 0; c < x.c(); ++c) {
        const S* src = &x(b, c, 0, 0);
        S acc = 0;
        for (std::size_t i = 0; i < hw; ++i) acc += src[i];
        y(b, c, 0, 0) = acc / static_cast<S>(hw);
      }
    if (cache) cache->input_shape = x.shape;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>>) const override {
    Tensor<S> dx(cache.input_shape);
    const std::size_t hw = static_cast<std::size_t>(dx.h()) * dx.w();
    for (int b = 0; b < dx.n(); ++b)
      for (int c = 0; c < dx.c(); ++c) {
        const S g = gy(b, c, 0, 0) / static_cast<S>(hw);
        S* dst = &dx(b, c, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) dst[i] = g;
      }
    return dx;
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

/// Fixed elementwise (x - shift) * scale; no parameters.
template <typename S>
class Affine final : public Layer<S> {
 public:
  Affine(double shift, double scale) : shift_(static_cast<S>(shift)), scale_(static_cast<S>(scale)) {}
  Tensor<S> forward(const Tensor<S>& x, Cache<S>*) const override {
    Tensor<S> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = (x.data[i] - shift_) * scale_;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>&, std::span<Tensor<S>>) const override {
    Tensor<S> dx(gy.shape);
    for (std::size_t i = 0; i < gy.size(); ++i) dx.data[i] = gy.data[i] * scale_;
    return dx;
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Affine>(*this); }

 private:
  S shift_, scale_;
};

/// Nearest-neighbour upsampling by an integer factor.
template <typename S>
class Upsample final : public Layer<S> {
 public:
  explicit Upsample(int factor) : f_(factor) {
    if (f_ < 1) throw ArgumentError("upsample: factor must be positive");
  }
  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    Tensor<S> y(x.n(), x.c(), x.h() * f_, x.w() * f_);
    for (int b = 0; b < y.n(); ++b)
      for (int c = 0; c < y.c(); ++c)
        for (int oy = 0; oy < y.h(); ++oy)
          for (int ox = 0; ox < y.w(); ++ox) y(b, c, oy, ox) = x(b, c, oy / f_, ox / f_);
    if (cache) cache->input_shape = x.shape;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>>) const override {
    Tensor<S> dx(cache.input_shape);
    for (int b = 0; b < gy.n(); ++b)
      for (int c = 0; c < gy.c(); ++c)
        for (int oy = 0; oy < gy.h(); ++oy)
          for (int ox = 0; ox < gy.w(); ++ox) dx(b, c, oy / f_, ox / f_) += gy(b, c, oy, ox);
    return dx;
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Upsample>(*this); }

 private:
  int f_;
};

/// Ordered chain of layers. Itself a Layer, so chains nest.
template <typename S>
class Sequential final : public Layer<S> {
 public:
  Sequential() = default;
  Sequential(const Sequential& other) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  Sequential& operator=(const Sequential& other) {
    if (this != &other) {
      Sequential tmp(other);
      layers_ = std::move(tmp.layers_);
    }
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  Sequential& add(Args&&... args) {
    layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
    return *this;
  }
  Sequential& add(LayerPtr<S> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  std::size_t size() const { return layers_.size(); }

  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    if (cache) cache->children.assign(layers_.size(), Cache<S>{});
    Tensor<S> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      h = layers_[i]->forward(h, cache ? &cache->children[i] : nullptr);
    return h;
  }

  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>> grads) const override {
    std::vector<std::size_t> offsets(layers_.size() + 1, 0);
    for (std::size_t i = 0; i < layers_.size(); ++i) offsets[i + 1] = offsets[i] + layers_[i]->num_params();
    Tensor<S> g = gy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i]->backward(g, cache.children.at(i), grads.subspan(offsets[i], offsets[i + 1] - offsets[i]));
    }
    return g;
  }

  void collect_params(std::vector<Tensor<S>*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }
  void collect_params(std::vector<const Tensor<S>*>& out) const override {
    for (const auto& l : layers_) static_cast<const Layer<S>&>(*l).collect_params(out);
  }
  void init(std::mt19937_64& rng) override {
    for (auto& l : layers_) l->init(rng);
  }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Sequential>(*this); }

 private:
  std::vector<LayerPtr<S>> layers_;
};

/// y = x + body(x).
template <typename S>
class Residual final : public Layer<S> {
 public:
  explicit Residual(Sequential<S> body) : body_(std::move(body)) {}

  Tensor<S> forward(const Tensor<S>& x, Cache<S>* cache) const override {
    if (cache) cache->children.assign(1, Cache<S>{});
    Tensor<S> y = body_.forward(x, cache ? &cache->children[0] : nullptr);
    require_same_shape(x, y, "residual");
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy, const Cache<S>& cache, std::span<Tensor<S>> grads) const override {
    Tensor<S> dx = body_.backward(gy, cache.children.at(0), grads);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += gy.data[i];
    return dx;
  }
  void collect_params(std::vector<Tensor<S>*>& out) override { body_.collect_params(out); }
  void collect_params(std::vector<const Tensor<S>*>& out) const override { body_.collect_params(out); }
  void init(std::mt19937_64& rng) override { body_.init(rng); }
  std::unique_ptr<Layer<S>> clone() const override { return std::make_unique<Residual>(*this); }

 private:
  Sequential<S> body_;
};

/// Zero-filled gradient buffers matching a parameter list.
template <typename S>
std::vector<Tensor<S>> zeros_like(const std::vector<const Tensor<S>*>& params) {
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(p->shape);
  return out;
}

}  // namespace lfaa::nn
