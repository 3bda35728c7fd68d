#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"

namespace lfaa::nn {

/// Numerically stable softmax of one logit row, computed in double.
template <typename S>
std::vector<double> softmax_row(const S* logits, int d) {
  std::vector<double> p(d);
  double m = logits[0];
  for (int j = 1; j < d; ++j) m = std::max(m, static_cast<double>(logits[j]));
  double z = 0.0;
  for (int j = 0; j < d; ++j) z += (p[j] = std::exp(static_cast<double>(logits[j]) - m));
  for (double& v : p) v /= z;
  return p;
}

/// Per-sample cross-entropy -log softmax(logits)[label].
template <typename S>
std::vector<double> cross_entropy_per_sample(const Tensor<S>& logits, std::span<const int> labels) {
  const int n = logits.n(), d = static_cast<int>(logits.sample_size());
  if (static_cast<int>(labels.size()) != n) throw ShapeError("label count does not match batch size");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= d)
      throw ArgumentError("label " + std::to_string(labels[i]) + " out of range [0," + std::to_string(d) + ")");
    const S* row = logits.data.data() + static_cast<std::size_t>(i) * d;
    double m = row[0];
    for (int j = 1; j < d; ++j) m = std::max(m, static_cast<double>(row[j]));
    double z = 0.0;
    for (int j = 0; j < d; ++j) z += std::exp(static_cast<double>(row[j]) - m);
    out[i] = std::log(z) + m - static_cast<double>(row[labels[i]]);
  }
  return out;
}

/// Mean cross-entropy and its gradient with respect to the logits.
template <typename S>
double mean_cross_entropy(const Tensor<S>& logits, std::span<const int> labels, Tensor<S>* grad_logits) {
  const auto per = cross_entropy_per_sample(logits, labels);
  const int n = logits.n(), d = static_cast<int>(logits.sample_size());
  double total = 0.0;
  for (double v : per) total += v;
  if (grad_logits) {
    *grad_logits = Tensor<S>(logits.shape);
    for (int i = 0; i < n; ++i) {
      const auto p = softmax_row(logits.data.data() + static_cast<std::size_t>(i) * d, d);
      for (int j = 0; j < d; ++j)
        grad_logits->data[static_cast<std::size_t>(i) * d + j] = static_cast<S>((p[j] - (j == labels[i] ? 1.0 : 0.0)) / n);
    }
  }
  return total / n;
}

}  // namespace lfaa::nn
