#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lfaa/generator/generator.hpp"
#include "lfaa/trainer/trainer.hpp"
#include "oracles.hpp"

using namespace lfaa;

namespace {

GeneratorArch tiny_arch() { return GeneratorArch{4, 2, 1}; }

}  // namespace

TEST(TargetClassEncoding, ValidatesInput) {
  EXPECT_THROW(TargetClassEncoding(10, 10), ArgumentError);
  EXPECT_THROW(TargetClassEncoding(-1, 10), ArgumentError);
  const TargetClassEncoding e(3, 5);
  EXPECT_EQ(e.vector(), (std::vector<double>{0, 0, 0, 1, 0}));
  EXPECT_EQ(TargetClassEncoding::from_vector(e.vector()).target(), 3);
  EXPECT_THROW(TargetClassEncoding::from_vector(std::vector<double>{0, 1, 1}), ArgumentError);
  EXPECT_THROW(TargetClassEncoding::from_vector(std::vector<double>{0, 0.5, 0}), ArgumentError);
  EXPECT_THROW(TargetClassEncoding::from_vector(std::vector<double>{0, 0, 0}), ArgumentError);
}

TEST(Generator, OutputShapeRangeAndRowIndependence) {
  const auto g = build_generator<float>(6, {16, 16, 3}, 1, tiny_arch());
  std::mt19937_64 rng(2);
  const auto imgs = test_support::random_images(rng, 3, {16, 16, 3});
  const auto enc = encode_targets(std::vector<int>{0, 5, 2}, 6);
  const auto out = g.perturb(imgs, enc);
  ASSERT_EQ(out.size(), 3u);
  for (const auto& p : out) {
    EXPECT_EQ(p.shape(), imgs[0].shape());
    for (double v : p.values()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  // Image 1 alone gives the same perturbation as inside the batch.
  const auto single = g.perturb(std::span(imgs).subspan(1, 1), std::span(enc).subspan(1, 1));
  for (std::size_t i = 0; i < single[0].size(); ++i) EXPECT_NEAR(single[0][i], out[1][i], 1e-6);
  // The target changes the output.
  const auto other = g.perturb(std::span(imgs).subspan(1, 1), encode_targets(std::vector<int>{4}, 6));
  EXPECT_NE(other[0], single[0]);
}

TEST(Generator, RejectsMismatchedEncodingAndShapes) {
  const auto g = build_generator<float>(6, {16, 16, 3}, 1, tiny_arch());
  std::mt19937_64 rng(2);
  const auto imgs = test_support::random_images(rng, 1, {16, 16, 3});
  EXPECT_THROW(g.perturb(imgs, encode_targets(std::vector<int>{1}, 7)), ArgumentError);
  EXPECT_THROW(g.perturb(imgs, encode_targets(std::vector<int>{1, 2}, 6)), ShapeError);
  EXPECT_THROW(build_generator<float>(6, {12, 16, 3}, 1), ShapeError);
}

TEST(Generator, SaveLoadRoundTrip) {
  const auto dir = test_support::scratch_dir("generator");
  auto g = build_generator<float>(4, {16, 16, 3}, 8, tiny_arch());
  g.set_training_budget(3, 0.05);
  g.save(dir / "g.ckpt");
  const auto back = ConditionalGenerator::load(dir / "g.ckpt");
  EXPECT_EQ(back.digest(), g.digest());
  EXPECT_EQ(back.trained_k(), 3);
  EXPECT_EQ(back.trained_epsilon(), 0.05);
  EXPECT_EQ(back.arch(), tiny_arch());
  EXPECT_THROW(ConditionalGenerator::load(dir / "nope.ckpt"), IoError);
}

// dL/dtheta of the LFAA objective against central differences with step 1e-3.
TEST(Generator, ObjectiveGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {2, 9}) EXPECT_LT(test_support::lfaa_theta_fd_error(seed), 1e-3) << seed;
}
