#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"

namespace lfaa {

/// Dense 4-D tensor in NCHW order. Lower-rank data uses trailing 1s,
/// e.g. a logits batch is {n, d, 1, 1}.
template <typename Scalar>
struct Tensor {
  using Shape = std::array<int, 4>;

  Shape shape{0, 0, 0, 0};
  std::vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s, Scalar fill = Scalar(0))
      : shape(s), data(static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3], fill) {
    for (int d : s) {
      if (d < 0) throw ShapeError("negative tensor dimension");
    }
  }
  Tensor(int n, int c, int h, int w, Scalar fill = Scalar(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  /// Elements per sample (c*h*w).
  std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }

  Scalar& operator()(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const Scalar& operator()(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  std::span<Scalar> sample(int i) { return {data.data() + i * sample_size(), sample_size()}; }
  std::span<const Scalar> sample(int i) const { return {data.data() + i * sample_size(), sample_size()}; }

  void fill(Scalar v) { std::fill(data.begin(), data.end(), v); }

  /// Reinterprets the buffer with a new shape of equal size.
  Tensor reshaped(Shape s) const {
    Tensor out;
    out.shape = s;
    out.data = data;
    if (static_cast<std::size_t>(s[0]) * s[1] * s[2] * s[3] != data.size())
      throw ShapeError("reshape to " + shape_string(s) + " from " + shape_string(shape));
    return out;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  static std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << '[' << s[0] << ',' << s[1] << ',' << s[2] << ',' << s[3] << ']';
    return os.str();
  }
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(what) + ": shape " + Tensor<Scalar>::shape_string(a.shape) +
                     " vs " + Tensor<Scalar>::shape_string(b.shape));
  }
}

}  // namespace lfaa
