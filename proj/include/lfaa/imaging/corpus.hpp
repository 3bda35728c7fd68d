#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lfaa/core/errors.hpp"
#include "lfaa/imaging/dataset.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/imaging/image_io.hpp"

namespace lfaa {

/// Procedural 10-class desk corpus. A class is a faint silhouette (five kinds) tinted
/// towards red or towards blue on a random background with a brightness ramp, so the
/// label lives in low spatial frequencies at a contrast of `object_contrast`. Every
/// image also carries a full-frame grating of random orientation and period and
/// pixel noise; neither depends on the class.
struct DeskCorpusOptions {
  int side = 32;
  int train_per_class = 200;
  int test_per_class = 50;
  double texture_amplitude_min = 0.04;
  double texture_amplitude_max = 0.12;
  double texture_period_min = 2.5;
  double texture_period_max = 6.0;
  double noise_sigma = 0.02;
  double object_contrast = 0.12;
  std::uint64_t seed = 7;
};

inline constexpr int kDeskClasses = 10;

inline const std::array<std::string, kDeskClasses>& desk_class_names() {
  static const std::array<std::string, kDeskClasses> kNames{
      "c0_disk_warm",     "c1_disk_cool",  "c2_square_warm", "c3_square_cool", "c4_triangle_warm",
      "c5_triangle_cool", "c6_ring_warm",  "c7_ring_cool",   "c8_cross_warm",  "c9_cross_cool"};
  return kNames;
}

namespace detail {

inline bool inside_shape(int shape, double dx, double dy, double r) {
  const double dist = std::hypot(dx, dy);
  switch (shape) {
    case 0:
      return dist < r;
    case 1:
      return std::max(std::abs(dx), std::abs(dy)) < 0.85 * r;
    case 2:
      return dy > -r && dy < 0.8 * r && std::abs(dx) < 0.55 * (dy + r);
    case 3:
      return dist < r && dist > 0.55 * r;
    default:
      return (std::abs(dx) < r / 3 && std::abs(dy) < r) || (std::abs(dy) < r / 3 && std::abs(dx) < r);
  }
}

inline ImageTensor render_desk_image(int label, const DeskCorpusOptions& o, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.noise_sigma);
  const int n = o.side;
  const int shape = label / 2;
  const bool warm = label % 2 == 0;
  const double theta = std::numbers::pi * u(rng);
  const double period = o.texture_period_min + (o.texture_period_max - o.texture_period_min) * u(rng);
  const double amp = o.texture_amplitude_min + (o.texture_amplitude_max - o.texture_amplitude_min) * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const double cx = n / 2.0 + (u(rng) - 0.5) * 0.25 * n;
  const double cy = n / 2.0 + (u(rng) - 0.5) * 0.25 * n;
  const double r = n * (0.26 + 0.10 * u(rng));

  // Warm objects push red up and blue down, cool ones the reverse; green rises a little for both.
  const std::array<double, 3> tint{warm ? 1.0 : -1.0, 0.3, warm ? -1.0 : 1.0};
  const double level = 0.15 + 0.7 * u(rng);
  std::array<double, 3> bg{}, grad{};
  for (int c = 0; c < 3; ++c) {
    bg[c] = std::clamp(level + (u(rng) - 0.5) * 0.16, 0.0, 1.0);
    grad[c] = (u(rng) - 0.5) * 0.2;
  }
  const double gdir = 2.0 * std::numbers::pi * u(rng);

  ImageArray img({n, n, 3});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const bool in = inside_shape(shape, x - cx, y - cy, r);
      const double ramp = ((x - n / 2.0) * std::cos(gdir) + (y - n / 2.0) * std::sin(gdir)) / n;
      const double wave = std::sin(2.0 * std::numbers::pi * (x * std::cos(theta) + y * std::sin(theta)) / period + phase);
      for (int c = 0; c < 3; ++c) {
        double v = bg[c] + grad[c] * ramp + amp * wave + (in ? o.object_contrast * tint[c] : 0.0);
        v += noise(rng);
        img.at(y, x, c) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
  return ImageTensor(std::move(img));
}

inline LabeledDataset render_split(const DeskCorpusOptions& o, Split split, int per_class) {
  LabeledDataset ds;
  ds.split = split;
  for (const auto& name : desk_class_names()) ds.class_names.push_back(name);
  std::mt19937_64 rng(o.seed * 2 + (split == Split::train ? 0 : 1));
  for (int label = 0; label < kDeskClasses; ++label)
    for (int i = 0; i < per_class; ++i) {
      ds.images.push_back(render_desk_image(label, o, rng));
      ds.labels.push_back(label);
    }
  return ds;
}

}  // namespace detail

struct DeskCorpus {
  LabeledDataset train;
  LabeledDataset test;
};

/// Renders both splits in memory; pixel values are already 8-bit quantized, so
/// writing and reloading the corpus is lossless.
inline DeskCorpus make_desk_corpus(const DeskCorpusOptions& o = {}) {
  if (o.side < 8 || o.train_per_class < 1 || o.test_per_class < 1 || !(o.object_contrast > 0.0)) throw ArgumentError("invalid desk corpus options");
  return {detail::render_split(o, Split::train, o.train_per_class), detail::render_split(o, Split::test, o.test_per_class)};
}

/// Writes `<root>/<split>/<class>/<index>.png`.
inline void write_dataset(const std::filesystem::path& root, const LabeledDataset& ds) {
  const auto split_dir = root / to_string(ds.split);
  std::vector<int> counters(ds.num_classes(), 0);
  for (const auto& name : ds.class_names) std::filesystem::create_directories(split_dir / name);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int label = ds.labels[i];
    char file[32];
    std::snprintf(file, sizeof(file), "%05d.png", counters[label]++);
    write_image(split_dir / ds.class_names[label] / file, ds.images[i].array());
  }
}

}  // namespace lfaa
