#pragma once

#include <cmath>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"

namespace lfaa::nn {

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : opt_(options) {
    if (!(opt_.learning_rate > 0.0) || opt_.beta1 < 0.0 || opt_.beta1 >= 1.0 || opt_.beta2 < 0.0 || opt_.beta2 >= 1.0)
      throw ArgumentError("adam: invalid hyperparameters");
  }

  void step(const std::vector<Tensor<S>*>& params, const std::vector<Tensor<S>>& grads) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const auto* p : params) {
        m_.emplace_back(p->shape);
        v_.emplace_back(p->shape);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double step = opt_.learning_rate / bc1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i]->data;
      const auto& g = grads[i].data;
      auto& m = m_[i].data;
      auto& v = v_[i].data;
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        m[j] = static_cast<S>(opt_.beta1 * m[j] + (1.0 - opt_.beta1) * gj);
        v[j] = static_cast<S>(opt_.beta2 * v[j] + (1.0 - opt_.beta2) * gj * gj);
        p[j] = static_cast<S>(p[j] - step * m[j] / (std::sqrt(v[j] / bc2) + opt_.epsilon));
      }
    }
  }

  long steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  long t_ = 0;
  std::vector<Tensor<S>> m_;
  std::vector<Tensor<S>> v_;
};

}  // namespace lfaa::nn
