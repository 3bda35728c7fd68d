#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"

namespace lfaa {

struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const { return static_cast<std::size_t>(height) * width * channels; }
  bool valid() const { return height > 0 && width > 0 && channels > 0; }
  bool operator==(const ImageShape&) const = default;
  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

/// Unconstrained H x W x C real array (channels innermost). Carries signed
/// signals such as high-frequency residuals, gradients and perturbations.
class ImageArray {
 public:
  ImageArray() = default;
  explicit ImageArray(ImageShape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {
    if (!shape.valid()) throw ShapeError("image shape must be positive, got " + shape.str());
  }
  ImageArray(ImageShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid()) throw ShapeError("image shape must be positive, got " + shape.str());
    if (data_.size() != shape.size())
      throw ShapeError("image buffer has " + std::to_string(data_.size()) + " values, shape " + shape.str() +
                       " needs " + std::to_string(shape.size()));
  }

  const ImageShape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x, int c) { return data_[(static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c]; }
  double at(int y, int x, int c) const {
    return data_[(static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const ImageArray&) const = default;

 private:
  ImageShape shape_{};
  std::vector<double> data_;
};

inline void require_same_shape(const ImageArray& a, const ImageArray& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
}

/// Image with every intensity in [0, 1]. Immutable once constructed.
class ImageTensor {
 public:
  ImageTensor() = default;
  /// Validates the range; throws ArgumentError on any element outside [0, 1] or NaN.
  explicit ImageTensor(ImageArray values) : values_(std::move(values)) {
    for (double v : values_.values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("image intensity outside [0,1]: " + std::to_string(v));
    }
  }
  ImageTensor(ImageShape shape, double fill) : ImageTensor(ImageArray(shape, fill)) {}

  const ImageArray& array() const { return values_; }
  operator const ImageArray&() const { return values_; }  // NOLINT(google-explicit-constructor)
  const ImageShape& shape() const { return values_.shape(); }
  double at(int y, int x, int c) const { return values_.at(y, x, c); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_.values(); }

  bool operator==(const ImageTensor&) const = default;

 private:
  struct Unchecked {};
  ImageTensor(ImageArray values, Unchecked) : values_(std::move(values)) {}
  friend ImageTensor clamp_valid(ImageArray x);

  ImageArray values_;
};

/// Elementwise min(max(e, 0), 1). NaN maps to 0.
inline ImageTensor clamp_valid(ImageArray x) {
  for (double& v : x.values()) v = (v >= 0.0) ? std::min(v, 1.0) : 0.0;
  return ImageTensor(std::move(x), ImageTensor::Unchecked{});
}

/// L-infinity perturbation radius in unit pixel intensity.
class EpsilonBudget {
 public:
  EpsilonBudget() = default;
  explicit EpsilonBudget(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ArgumentError("epsilon must lie in [0,1], got " + std::to_string(epsilon));
  }
  /// Budget expressed on the 0-255 scale (e.g. 16 -> 16/255).
  static EpsilonBudget from_255(double epsilon255) { return EpsilonBudget(epsilon255 / 255.0); }

  double value() const { return epsilon_; }

 private:
  double epsilon_ = 16.0 / 255.0;
};

inline double linf_distance(const ImageArray& a, const ImageArray& b) {
  require_same_shape(a, b, "linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace lfaa
