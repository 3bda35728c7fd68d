#pragma once

#include <span>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/core/tensor.hpp"
#include "lfaa/imaging/image.hpp"

namespace lfaa::nn {

/// Packs HWC images into an NCHW tensor.
template <typename S, typename Image>
Tensor<S> to_nchw(std::span<const Image> images) {
  if (images.empty()) throw ArgumentError("empty image batch");
  const ImageShape shape = images.front().shape();
  Tensor<S> out(static_cast<int>(images.size()), shape.channels, shape.height, shape.width);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const ImageArray& img = images[b];
    if (img.shape() != shape) throw ShapeError("image batch mixes shapes " + shape.str() + " and " + img.shape().str());
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x)
        for (int c = 0; c < shape.channels; ++c) out(static_cast<int>(b), c, y, x) = static_cast<S>(img.at(y, x, c));
  }
  return out;
}

template <typename S, typename Image>
Tensor<S> to_nchw(const std::vector<Image>& images) {
  return to_nchw<S, Image>(std::span<const Image>(images));
}

/// Extracts sample `i` of an NCHW tensor as an HWC array.
template <typename S>
ImageArray from_nchw(const Tensor<S>& t, int i) {
  ImageArray out({t.h(), t.w(), t.c()});
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x)
      for (int c = 0; c < t.c(); ++c) out.at(y, x, c) = static_cast<double>(t(i, c, y, x));
  return out;
}

template <typename S>
std::vector<ImageArray> split_nchw(const Tensor<S>& t) {
  std::vector<ImageArray> out;
  out.reserve(t.n());
  for (int i = 0; i < t.n(); ++i) out.push_back(from_nchw(t, i));
  return out;
}

}  // namespace lfaa::nn
