#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/imaging/image.hpp"

namespace lfaa {

/// Normalized (4k+1) x (4k+1) Gaussian low-pass kernel with sigma = k,
/// taps i, j in [-2k, 2k].
class GaussianFilter {
 public:
  explicit GaussianFilter(int k) : k_(k) {
    if (k < 1) throw ArgumentError("gaussian kernel parameter k must be >= 1, got " + std::to_string(k));
    const int n = size();
    weights_.resize(static_cast<std::size_t>(n) * n);
    double total = 0.0;
    for (int i = -radius(); i <= radius(); ++i)
      for (int j = -radius(); j <= radius(); ++j) total += raw_weight(i, j);
    for (int i = -radius(); i <= radius(); ++i)
      for (int j = -radius(); j <= radius(); ++j)
        weights_[static_cast<std::size_t>(i + radius()) * n + (j + radius())] = raw_weight(i, j) / total;

    // The 2-D weights factor as g(i) g(j); the 1-D taps drive the separable filter.
    taps_.resize(n);
    double total1 = 0.0;
    for (int i = -radius(); i <= radius(); ++i) total1 += std::exp(-(i * i) / (2.0 * sigma() * sigma()));
    for (int i = -radius(); i <= radius(); ++i)
      taps_[i + radius()] = std::exp(-(i * i) / (2.0 * sigma() * sigma())) / total1;
  }

  int k() const { return k_; }
  double sigma() const { return static_cast<double>(k_); }
  /// Tap reach on each side of the centre (2k).
  int radius() const { return 2 * k_; }
  /// Taps per axis (4k+1).
  int size() const { return 4 * k_ + 1; }

  /// Unnormalized Gaussian density exp(-(i^2+j^2)/(2 sigma^2)) / (2 pi sigma^2).
  double raw_weight(int i, int j) const {
    const double s2 = sigma() * sigma();
    return std::exp(-(i * i + j * j) / (2.0 * s2)) / (2.0 * std::numbers::pi * s2);
  }

  /// Normalized weight at offset (i, j), both in [-2k, 2k].
  double weight(int i, int j) const {
    return weights_[static_cast<std::size_t>(i + radius()) * size() + (j + radius())];
  }
  const std::vector<double>& weights() const { return weights_; }
  /// Normalized 1-D taps; weight(i, j) == taps()[i] * taps()[j] up to round-off.
  const std::vector<double>& taps() const { return taps_; }

 private:
  int k_;
  std::vector<double> weights_;
  std::vector<double> taps_;
};

inline GaussianFilter make_kernel(int k) { return GaussianFilter(k); }

/// Mirror index without edge repeat (d c b | a b c d | c b a), valid for any offset.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// W * x per channel with reflect padding, computed as two 1-D passes.
inline ImageArray low_pass(const ImageArray& x, const GaussianFilter& f) {
  const int h = x.height(), w = x.width(), c = x.channels();
  if (h < 1 || w < 1 || c < 1) throw ShapeError("low_pass needs a non-empty image, got " + x.shape().str());
  const auto& taps = f.taps();
  const int r = f.radius();
  ImageArray rows(x.shape());
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += taps[t + r] * x.at(y, reflect_index(xx + t, w), ch);
        rows.at(y, xx, ch) = acc;
      }
  ImageArray out(x.shape());
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += taps[t + r] * rows.at(reflect_index(y + t, h), xx, ch);
        out.at(y, xx, ch) = acc;
      }
  return out;
}

/// Low-pass of a valid image stays in [0, 1] (convex combination); round-off is clamped.
inline ImageTensor low_pass(const ImageTensor& x, const GaussianFilter& f) {
  return clamp_valid(low_pass(x.array(), f));
}

/// Signed residual x - W * x.
inline ImageArray high_pass(const ImageArray& x, const GaussianFilter& f) {
  ImageArray out = low_pass(x, f);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - out[i];
  return out;
}

/// Replaces the high-frequency part of x with that of x_target:
/// clamp(W*x + x_target - W*x_target).
inline ImageTensor hf_swap(const ImageTensor& x, const ImageTensor& x_target, const GaussianFilter& f) {
  require_same_shape(x.array(), x_target.array(), "hf_swap");
  ImageArray out = low_pass(x.array(), f);
  const ImageArray target_high = high_pass(x_target.array(), f);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += target_high[i];
  return clamp_valid(std::move(out));
}

/// Residual mapped to a viewable image: clamp(r + 0.5).
inline ImageTensor visualize_residual(const ImageArray& residual) {
  ImageArray out = residual;
  for (double& v : out.values()) v += 0.5;
  return clamp_valid(std::move(out));
}

}  // namespace lfaa
