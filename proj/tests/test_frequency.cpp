#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "lfaa/frequency/gaussian.hpp"
#include "oracles.hpp"

using namespace lfaa;

using test_support::brute_low_pass;
using test_support::max_abs_diff;
using test_support::mirror;

TEST(GaussianFilter, SizeFollowsFourKPlusOne) {
  for (int k = 1; k <= 6; ++k) {
    GaussianFilter f(k);
    EXPECT_EQ(f.size(), 4 * k + 1);
    EXPECT_EQ(f.radius(), 2 * k);
    EXPECT_EQ(f.weights().size(), static_cast<std::size_t>(f.size() * f.size()));
  }
  EXPECT_EQ(GaussianFilter(4).size(), 17);
}

TEST(GaussianFilter, RejectsNonPositiveK) {
  EXPECT_THROW(GaussianFilter(0), ArgumentError);
  EXPECT_THROW(GaussianFilter(-3), ArgumentError);
}

TEST(GaussianFilter, UnitSumAndExactSymmetry) {
  for (int k = 1; k <= 6; ++k) {
    GaussianFilter f(k);
    double sum = 0.0;
    for (double w : f.weights()) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const int r = f.radius();
    for (int i = -r; i <= r; ++i)
      for (int j = -r; j <= r; ++j) {
        EXPECT_EQ(f.weight(i, j), f.weight(-i, j));
        EXPECT_EQ(f.weight(i, j), f.weight(i, -j));
        EXPECT_EQ(f.weight(i, j), f.weight(j, i));
      }
  }
}

TEST(GaussianFilter, UnnormalizedCentreIsOneOverTwoPiSigmaSquared) {
  EXPECT_NEAR(GaussianFilter(1).raw_weight(0, 0), 1.0 / (2.0 * std::numbers::pi), 1e-9);
  EXPECT_NEAR(GaussianFilter(3).raw_weight(0, 0), 1.0 / (2.0 * std::numbers::pi * 9.0), 1e-12);
}

TEST(GaussianFilter, TapsFactorTheTwoDimensionalKernel) {
  GaussianFilter f(3);
  const int r = f.radius();
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) EXPECT_NEAR(f.taps()[i + r] * f.taps()[j + r], f.weight(i, j), 1e-15);
}

TEST(ReflectIndex, MatchesIterativeMirror) {
  for (int n : {1, 2, 3, 8, 17})
    for (int i = -60; i < 60; ++i) EXPECT_EQ(reflect_index(i, n), mirror(i, n)) << "i=" << i << " n=" << n;
  EXPECT_EQ(reflect_index(-1, 4), 1);
  EXPECT_EQ(reflect_index(4, 4), 2);
}

TEST(LowPass, MatchesBruteForceOnSmallImages) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const auto x = test_support::random_image(rng, {8, 8, 3});
    const int k = 1 + static_cast<int>(seed % 4);
    worst = std::max(worst, max_abs_diff(low_pass(x.array(), GaussianFilter(k)), brute_low_pass(x.array(), k)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(LowPass, ReconstructionIdentity) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = test_support::random_image(rng, {12, 9, 3});
    for (int k = 1; k <= 6; ++k) {
      GaussianFilter f(k);
      const ImageArray lo = low_pass(x.array(), f);
      const ImageArray hi = high_pass(x.array(), f);
      for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(lo[i] + hi[i], x[i], 1e-12);
    }
  }
}

TEST(LowPass, ConstantImageIsFixedPoint) {
  for (double level : {0.0, 0.37, 1.0}) {
    const ImageTensor x({10, 7, 3}, level);
    for (int k = 1; k <= 6; ++k) {
      const ImageArray lo = low_pass(x.array(), GaussianFilter(k));
      for (double v : lo.values()) ASSERT_NEAR(v, level, 1e-12);
    }
  }
}

TEST(LowPass, ValidImageStaysInRange) {
  std::mt19937_64 rng(5);
  const auto x = test_support::random_image(rng, {16, 16, 1});
  const auto lo = low_pass(x, GaussianFilter(2));
  for (double v : lo.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(HfSwap, SelfSwapIsIdentityAndShapesMustMatch) {
  std::mt19937_64 rng(3);
  const auto x = test_support::random_image(rng, {8, 8, 3});
  const auto y = hf_swap(x, x, GaussianFilter(1));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
  const auto other = test_support::random_image(rng, {8, 9, 3});
  EXPECT_THROW(hf_swap(x, other, GaussianFilter(1)), ShapeError);
}

TEST(HfSwap, KeepsSourceLowFrequenciesWhenUnclamped) {
  // Mid-grey images with small detail never hit the clamp, so W*(swap) == W*x
  // up to the low-pass of the target residual, which is small for a smooth target.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  ImageArray a({8, 8, 1}, 0.5), b({8, 8, 1}, 0.5);
  for (double& v : a.values()) v += u(rng);
  for (double& v : b.values()) v += u(rng);
  const ImageTensor x(a), t(b);
  GaussianFilter f(1);
  const auto s = hf_swap(x, t, f);
  const ImageArray lo_x = low_pass(x.array(), f), lo_t = low_pass(t.array(), f), hi_t = high_pass(t.array(), f);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], lo_x[i] + t[i] - lo_t[i], 1e-12);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i] - lo_x[i], hi_t[i], 1e-12);
}

TEST(VisualizeResidual, ShiftsByHalfAndClamps) {
  ImageArray r({1, 3, 1});
  r[0] = -1.0;
  r[1] = 0.1;
  r[2] = 0.9;
  const auto v = visualize_residual(r);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_DOUBLE_EQ(v[1], 0.6);
  EXPECT_EQ(v[2], 1.0);
}
