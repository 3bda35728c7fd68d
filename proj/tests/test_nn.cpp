#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "lfaa/nn/adam.hpp"
#include "lfaa/nn/checkpoint.hpp"
#include "lfaa/nn/image_batch.hpp"
#include "lfaa/nn/layers.hpp"
#include "lfaa/nn/loss.hpp"
#include "support.hpp"

using namespace lfaa;
using namespace lfaa::nn;

namespace {

Tensor<double> random_tensor(typename Tensor<double>::Shape s, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<double> t(s);
  for (double& v : t.data) v = g(rng);
  return t;
}

// Scalar objective L = sum(w .* layer(x)) with fixed random weights w; compares the
// analytic input and parameter gradients against central differences.
void check_layer_gradients(Layer<double>& layer, typename Tensor<double>::Shape in_shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  layer.init(rng);
  const Tensor<double> x = random_tensor(in_shape, rng);
  Cache<double> cache;
  const Tensor<double> y = layer.forward(x, &cache);
  const Tensor<double> w = random_tensor(y.shape, rng);
  auto objective = [&](const Tensor<double>& in) {
    const auto out = layer.forward(in, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w.data[i] * out.data[i];
    return s;
  };
  std::vector<const Tensor<double>*> cparams;
  static_cast<const Layer<double>&>(layer).collect_params(cparams);
  auto grads = zeros_like(cparams);
  const Tensor<double> dx = layer.backward(w, cache, grads);

  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor<double> xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (objective(xp) - objective(xm)) / (2 * h);
    ASSERT_NEAR(dx.data[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "input " << i;
  }
  std::vector<Tensor<double>*> params;
  layer.collect_params(params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      const double keep = params[p]->data[i];
      params[p]->data[i] = keep + h;
      const double fp = objective(x);
      params[p]->data[i] = keep - h;
      const double fm = objective(x);
      params[p]->data[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      ASSERT_NEAR(grads[p].data[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "param " << p << "[" << i << "]";
    }
  }
}

}  // namespace

TEST(LayerGradients, Conv2dStrideAndPadding) {
  Conv2d<double> a(2, 3, 3);
  check_layer_gradients(a, {2, 2, 5, 6}, 1);
  Conv2d<double> b(2, 2, 3, 2);
  check_layer_gradients(b, {1, 2, 7, 6}, 2);
  Conv2d<double> c(3, 2, 1);
  check_layer_gradients(c, {2, 3, 3, 3}, 3);
}

TEST(LayerGradients, LinearAndActivations) {
  Linear<double> lin(12, 4);
  check_layer_gradients(lin, {3, 3, 2, 2}, 4);
  SiLU<double> silu;
  check_layer_gradients(silu, {2, 2, 3, 3}, 5);
  Tanh<double> tanh_layer;
  check_layer_gradients(tanh_layer, {2, 2, 3, 3}, 6);
  Affine<double> aff(0.5, 4.0);
  check_layer_gradients(aff, {1, 2, 2, 2}, 7);
}

TEST(LayerGradients, PoolingAndUpsampling) {
  AvgPool<double> pool(2);
  check_layer_gradients(pool, {2, 2, 4, 6}, 8);
  GlobalAvgPool<double> gap;
  check_layer_gradients(gap, {2, 3, 3, 4}, 9);
  Upsample<double> up(2);
  check_layer_gradients(up, {1, 2, 3, 2}, 10);
}

TEST(LayerGradients, SequentialAndResidual) {
  Sequential<double> body;
  body.add<Conv2d<double>>(2, 2, 3).add<SiLU<double>>().add<Conv2d<double>>(2, 2, 3, 1, -1, 0.5);
  Sequential<double> net;
  net.add<Conv2d<double>>(1, 2, 3).add(std::make_unique<Residual<double>>(body)).add<GlobalAvgPool<double>>().add<Linear<double>>(2, 3);
  check_layer_gradients(net, {2, 1, 4, 4}, 11);
}

TEST(Sequential, CopyIsDeep) {
  Sequential<double> a;
  a.add<Linear<double>>(2, 2);
  std::mt19937_64 rng(1);
  a.init(rng);
  Sequential<double> b = a;
  std::vector<Tensor<double>*> pb;
  b.collect_params(pb);
  pb[0]->data[0] += 1.0;
  std::vector<const Tensor<double>*> pa;
  static_cast<const Sequential<double>&>(a).collect_params(pa);
  EXPECT_NE(pa[0]->data[0], pb[0]->data[0]);
}

TEST(Conv2d, RejectsChannelMismatch) {
  Conv2d<double> c(3, 2, 3);
  EXPECT_THROW(c.forward(Tensor<double>(1, 2, 4, 4), nullptr), ShapeError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensor<double> logits = random_tensor({3, 5, 1, 1}, rng);
  const std::vector<int> labels{0, 4, 2};
  Tensor<double> g;
  mean_cross_entropy(logits, labels, &g);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor<double> p = logits, m = logits;
    p.data[i] += 1e-6;
    m.data[i] -= 1e-6;
    const double fd = (mean_cross_entropy<double>(p, labels, nullptr) - mean_cross_entropy<double>(m, labels, nullptr)) / 2e-6;
    EXPECT_NEAR(g.data[i], fd, 1e-8);
  }
  EXPECT_THROW(cross_entropy_per_sample(logits, std::vector<int>{0, 5, 1}), ArgumentError);
}

TEST(CrossEntropy, UniformLogitsGiveLogD) {
  Tensor<float> logits(2, 10, 1, 1, 3.0f);
  const auto per = cross_entropy_per_sample(logits, std::vector<int>{1, 7});
  EXPECT_NEAR(per[0], std::log(10.0), 1e-12);
}

TEST(Adam, FirstStepMovesEachParameterByLearningRate) {
  // With bias correction the first update is lr * g / (|g| + eps) = lr * sign(g).
  Tensor<double> p(1, 1, 1, 3);
  p.data = {1.0, 2.0, 3.0};
  std::vector<Tensor<double>> g{Tensor<double>(1, 1, 1, 3)};
  g[0].data = {0.5, -2.0, 0.0};
  Adam<double> opt(AdamOptions{0.01, 0.5, 0.999, 1e-8});
  opt.step({&p}, g);
  EXPECT_NEAR(p.data[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.data[1], 2.0 + 0.01, 1e-9);
  EXPECT_EQ(p.data[2], 3.0);
  EXPECT_THROW(Adam<double>(AdamOptions{0.0}), ArgumentError);
}

TEST(Checkpoint, RoundTripAndDigest) {
  const auto dir = test_support::scratch_dir("ckpt");
  std::mt19937_64 rng(2);
  Tensor<float> a = random_tensor({2, 3, 1, 1}, rng).cast<float>();
  Tensor<float> b = random_tensor({1, 1, 2, 2}, rng).cast<float>();
  const nlohmann::json meta{{"kind", "test"}, {"n", 2}};
  write_checkpoint<float>(dir / "m.ckpt", meta, {&a, &b});
  const auto back = read_checkpoint<float>(dir / "m.ckpt");
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors[0].data, a.data);
  EXPECT_EQ(back.tensors[1].shape, b.shape);
  EXPECT_EQ(back.meta, meta);
  EXPECT_EQ(back.digest, parameter_digest<float>(meta.dump(), {&a, &b}));
  // Converting dtype on load keeps values.
  const auto wide = read_checkpoint<double>(dir / "m.ckpt");
  EXPECT_EQ(wide.tensors[0].data[1], static_cast<double>(a.data[1]));
}

TEST(Checkpoint, CorruptionAndMissingFiles) {
  const auto dir = test_support::scratch_dir("ckpt_bad");
  EXPECT_THROW(read_checkpoint<float>(dir / "none.ckpt"), IoError);
  Tensor<float> a(1, 1, 1, 4, 0.25f);
  write_checkpoint<float>(dir / "m.ckpt", nlohmann::json{{"kind", "t"}}, {&a});
  std::string bytes;
  {
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& s) { std::ofstream(dir / "x.ckpt", std::ios::binary) << s; };
  std::string flipped = bytes;
  flipped.back() ^= 0x01;
  write(flipped);
  EXPECT_THROW(read_checkpoint<float>(dir / "x.ckpt"), FormatError);
  write(bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_checkpoint<float>(dir / "x.ckpt"), FormatError);
  write(bytes + "x");
  EXPECT_THROW(read_checkpoint<float>(dir / "x.ckpt"), FormatError);
  write("NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(read_checkpoint<float>(dir / "x.ckpt"), FormatError);
}

TEST(ImageBatch, NchwRoundTrip) {
  std::mt19937_64 rng(4);
  const auto imgs = test_support::random_images(rng, 3, {4, 5, 3});
  const auto t = to_nchw<double>(imgs);
  EXPECT_EQ(t.shape, (Tensor<double>::Shape{3, 3, 4, 5}));
  EXPECT_EQ(t(1, 2, 3, 4), imgs[1].at(3, 4, 2));
  const auto back = from_nchw(t, 2);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], imgs[2][i]);
}
