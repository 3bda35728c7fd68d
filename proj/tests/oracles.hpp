#pragma once

// Independent reference computations shared by the unit tests and the acceptance
// binary. Nothing here calls the production code path it is used to check.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lfaa/classifiers/classifier.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/nn/image_batch.hpp"
#include "lfaa/trainer/trainer.hpp"
#include "support.hpp"

namespace lfaa::test_support {

/// Reflect repeatedly until the index lands inside [0, n).
inline int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

/// Direct (4k+1)^2-tap sum with sigma = k and mirror padding.
inline ImageArray brute_low_pass(const ImageArray& x, int k) {
  const double sigma = k;
  const int r = 2 * k;
  double total = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) total += std::exp(-(i * i + j * j) / (2 * sigma * sigma));
  ImageArray out(x.shape());
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx)
      for (int c = 0; c < x.channels(); ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          for (int j = -r; j <= r; ++j)
            acc += std::exp(-(i * i + j * j) / (2 * sigma * sigma)) / total *
                   x.at(mirror(y + i, x.height()), mirror(xx + j, x.width()), c);
        out.at(y, xx, c) = acc;
      }
  return out;
}

inline double max_abs_diff(const ImageArray& a, const ImageArray& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// ||a - b|| / max(||a||, ||b||).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    da += a[i] * a[i];
    db += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(std::max(da, db)), 1e-300);
}

/// Relative error of the analytic input gradient against central differences
/// (step 1e-3) over every pixel of two 8x8x3 images, width-2 double model.
inline double classifier_input_fd_error(const std::string& arch, std::uint64_t seed) {
  const ImageShape shape{8, 8, 3};
  const auto c = build_classifier<double>(arch, 5, seed, shape, 2);
  std::mt19937_64 rng(seed + 1);
  const auto imgs = random_images(rng, 2, shape);
  const std::vector<int> labels{1, 3};
  const auto analytic = c.input_gradient(imgs, labels);
  const double h = 1e-3;
  std::vector<double> a, fd;
  const auto base = nn::to_nchw<double>(imgs);
  for (std::size_t b = 0; b < imgs.size(); ++b)
    for (std::size_t i = 0; i < imgs[b].size(); ++i) {
      // Perturb the raw tensor so pixels may leave [0,1].
      auto plus = base, minus = base;
      const int y = static_cast<int>(i / 24), x = static_cast<int>((i / 3) % 8), ch = static_cast<int>(i % 3);
      plus(static_cast<int>(b), ch, y, x) += h;
      minus(static_cast<int>(b), ch, y, x) -= h;
      fd.push_back((c.loss_and_input_gradient(plus, labels).loss - c.loss_and_input_gradient(minus, labels).loss) / (2 * h));
      a.push_back(analytic[b][i]);
    }
  return relative_error(a, fd);
}

/// Relative error of dL/dtheta for the LFAA objective against central differences
/// (step 1e-3) on every fifth generator parameter. Epsilon 1 leaves only the [0,1]
/// clamp, so most coordinates carry gradient.
inline double lfaa_theta_fd_error(std::uint64_t seed) {
  const ImageShape shape{8, 8, 3};
  auto cls = build_classifier<double>("plain", 4, seed, shape, 2);
  cls.freeze();
  auto gen = build_generator<double>(4, shape, seed + 1, GeneratorArch{4, 2, 1});
  std::mt19937_64 rng(seed + 2);
  const auto imgs = random_images(rng, 2, shape);
  const std::vector<int> targets{1, 3};
  const GaussianFilter filter(1);
  const double eps = 1.0;
  const auto analytic = lfaa_loss_and_gradient<double>(gen, cls, filter, imgs, targets, eps);
  auto params = gen.mutable_parameters();
  const double h = 1e-3;
  std::vector<double> a, fd;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); i += 5) {
      const double keep = params[p]->data[i];
      params[p]->data[i] = keep + h;
      const double lp = lfaa_loss<double>(gen, cls, filter, imgs, targets, eps);
      params[p]->data[i] = keep - h;
      const double lm = lfaa_loss<double>(gen, cls, filter, imgs, targets, eps);
      params[p]->data[i] = keep;
      fd.push_back((lp - lm) / (2 * h));
      a.push_back(analytic.generator_grads[p].data[i]);
    }
  return relative_error(a, fd);
}

}  // namespace lfaa::test_support
