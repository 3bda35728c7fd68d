#pragma once

#include <algorithm>

#include "lfaa/imaging/image.hpp"

namespace lfaa {

/// Clamp into [x - eps, x + eps], then into [0, 1].
inline double clip_project_value(double raw, double x, double eps) {
  return std::clamp(std::clamp(raw, x - eps, x + eps), 0.0, 1.0);
}

/// True where clip_project passes `raw` through unchanged (derivative 1), false where
/// either clamp is active (derivative 0).
inline bool clip_project_passes(double raw, double x, double eps) {
  return raw > std::max(x - eps, 0.0) && raw < std::min(x + eps, 1.0);
}

/// Elementwise projection of `raw` onto the L-inf ball of `x` intersected with [0,1]^n.
inline ImageTensor clip_project(const ImageArray& raw, const ImageTensor& x, const EpsilonBudget& eps) {
  require_same_shape(raw, x.array(), "clip_project");
  ImageArray out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = clip_project_value(raw[i], x[i], eps.value());
  return clamp_valid(std::move(out));
}

}  // namespace lfaa
