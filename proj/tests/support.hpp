#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lfaa/imaging/image.hpp"

namespace lfaa::test_support {

inline ImageTensor random_image(std::mt19937_64& rng, ImageShape shape = {8, 8, 3}) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageArray a(shape);
  for (double& v : a.values()) v = u(rng);
  return ImageTensor(std::move(a));
}

inline std::vector<ImageTensor> random_images(std::mt19937_64& rng, int n, ImageShape shape = {8, 8, 3}) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < n; ++i) out.push_back(random_image(rng, shape));
  return out;
}

/// Fresh empty directory under the system temp dir, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lfaa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lfaa::test_support
