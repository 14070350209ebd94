#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "gradcheck.hpp"
#include "lact/network.hpp"
#include "lact/nn.hpp"
#include "lact/rng.hpp"

using namespace lact;
using namespace lact::nn;
using lact::testing::check_gradient;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
  Tensor<double> t(s);
  SplitMix64 rng(seed);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * r.data()[i];
  return s;
}

constexpr double kTol = 1e-5;

} // namespace

TEST(Conv2d, CenteredIdentityKernelCopiesInput) {
  auto x = random_tensor({2, 3, 5, 7}, 1);
  Tensor<double> w(3, 3, 3, 3), b(3, 1, 1, 1);
  for (int c = 0; c < 3; ++c) w.at(c, c, 1, 1) = 1.0;
  auto y = conv2d(x, w, b);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OnesKernelCountsTaps) {
  Tensor<double> x(1, 1, 3, 3, 1.0), w(1, 1, 3, 3, 1.0), b(1, 1, 1, 1);
  auto y = conv2d(x, w, b);
  EXPECT_EQ(y.at(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y.at(0, 0, 2, 2), 4.0);
  EXPECT_EQ(y.at(0, 0, 0, 1), 6.0);
}

TEST(Conv2d, MatchesDirectLoop) {
  auto x = random_tensor({2, 3, 6, 5}, 2);
  auto w = random_tensor({4, 3, 3, 3}, 3);
  auto b = random_tensor({4, 1, 1, 1}, 4);
  auto y = conv2d(x, w, b);
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 4; ++o)
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 5; ++c) {
          double s = b.data()[o];
          for (int i = 0; i < 3; ++i)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                const int rr = r + dy, cc = c + dx;
                if (rr < 0 || rr >= 6 || cc < 0 || cc >= 5) continue;
                s += w.at(o, i, dy + 1, dx + 1) * x.at(n, i, rr, cc);
              }
          EXPECT_NEAR(y.at(n, o, r, c), s, 1e-12);
        }
}

TEST(Conv2d, ChannelMismatchThrows) {
  Tensor<double> x(1, 2, 4, 4), w(1, 3, 3, 3), b(1, 1, 1, 1);
  EXPECT_THROW(conv2d(x, w, b), std::invalid_argument);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  for (int k : {3, 1}) {
    auto x = random_tensor({2, 3, 6, 6}, 10);
    auto w = random_tensor({4, 3, k, k}, 11);
    auto b = random_tensor({4, 1, 1, 1}, 12);
    const auto r = random_tensor({2, 4, 6, 6}, 13);
    auto f = [&] { return weighted_sum(conv2d(x, w, b), r); };
    auto g = conv2d_backward(x, w, r);
    EXPECT_LE(check_gradient(x.span(), g.dx.span(), f).max_rel, 1e-6) << "k=" << k;
    EXPECT_LE(check_gradient(w.span(), g.dw.span(), f).max_rel, 1e-6) << "k=" << k;
    EXPECT_LE(check_gradient(b.span(), g.db.span(), f).max_rel, 1e-6) << "k=" << k;
  }
}

TEST(Relu, ForwardBackwardAndIdempotence) {
  Tensor<double> x(Shape{1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0});
  auto y = relu(x);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 2.0}));
  Tensor<double> dy(x.shape(), 1.0);
  auto dx = relu_backward(x, dy);
  EXPECT_EQ(dx.values()[0], 0.0);
  EXPECT_EQ(dx.values()[2], 1.0);
  EXPECT_EQ(relu(y).values(), y.values());
}

TEST(Relu, BackwardMatchesFiniteDifferences) {
  auto x = random_tensor({2, 3, 4, 4}, 20);
  const auto r = random_tensor(x.shape(), 21);
  auto f = [&] { return weighted_sum(relu(x), r); };
  EXPECT_LE(check_gradient(x.span(), relu_backward(x, r).span(), f).max_rel, kTol);
}

TEST(BatchNorm, TrainOutputIsStandardized) {
  auto x = random_tensor({4, 3, 5, 5}, 30, 3.0);
  for (auto& v : x.values()) v += 2.0;
  Tensor<double> g(3, 1, 1, 1, 1.0), b(3, 1, 1, 1), rm(3, 1, 1, 1), rv(3, 1, 1, 1, 1.0);
  auto y = batchnorm(x, g, b, rm, rv, Mode::train);
  for (int c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    int m = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i, ++m) {
        s += y.plane(n, c)[i];
        s2 += y.plane(n, c)[i] * y.plane(n, c)[i];
      }
    const double mean = s / m;
    EXPECT_LE(std::abs(mean), 1e-6);
    EXPECT_NEAR(s2 / m - mean * mean, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
  Tensor<double> x(Shape{2, 1, 1, 2}, std::vector<double>{1.0, 2.0, 3.0, 6.0});
  Tensor<double> g(1, 1, 1, 1, 1.0), b(1, 1, 1, 1), rm(1, 1, 1, 1), rv(1, 1, 1, 1, 1.0);
  batchnorm(x, g, b, rm, rv, Mode::train);
  // mean 3, unbiased variance 14 / 3
  EXPECT_NEAR(rm.values()[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(rv.values()[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentity) {
  auto x = random_tensor({2, 2, 3, 3}, 31);
  Tensor<double> g(2, 1, 1, 1, 1.0), b(2, 1, 1, 1), rm(2, 1, 1, 1), rv(2, 1, 1, 1, 1.0);
  auto y = batchnorm(x, g, b, rm, rv, Mode::eval);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5 * std::abs(x.data()[i]));
  EXPECT_EQ(rm.values()[0], 0.0);
}

TEST(BatchNorm, TrainNeedsTwoValuesPerChannel) {
  Tensor<double> x(1, 1, 1, 1), g(1, 1, 1, 1, 1.0), b(1, 1, 1, 1), rm(1, 1, 1, 1), rv(1, 1, 1, 1, 1.0);
  EXPECT_THROW(batchnorm(x, g, b, rm, rv, Mode::train), std::invalid_argument);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  auto x = random_tensor({3, 2, 4, 4}, 40, 2.0);
  auto g = random_tensor({2, 1, 1, 1}, 41);
  auto b = random_tensor({2, 1, 1, 1}, 42);
  const auto r = random_tensor(x.shape(), 43);
  auto f = [&] {
    Tensor<double> rm(2, 1, 1, 1), rv(2, 1, 1, 1, 1.0);
    return weighted_sum(batchnorm(x, g, b, rm, rv, Mode::train), r);
  };
  Tensor<double> rm(2, 1, 1, 1), rv(2, 1, 1, 1, 1.0);
  BatchNormCache<double> cache;
  batchnorm(x, g, b, rm, rv, Mode::train, &cache);
  auto grads = batchnorm_backward(cache, g, r);
  EXPECT_LE(check_gradient(x.span(), grads.dx.span(), f).max_rel, kTol);
  EXPECT_LE(check_gradient(g.span(), grads.dgamma.span(), f).max_rel, kTol);
  EXPECT_LE(check_gradient(b.span(), grads.dbeta.span(), f).max_rel, kTol);
}

TEST(MaxPool, PicksMaximumAndHalvesShape) {
  Tensor<double> x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(maxpool2(x).values(), std::vector<double>{4.0});
  Tensor<double> big(1, 5, 8, 8);
  EXPECT_EQ(maxpool2(big).shape(), (Shape{1, 5, 4, 4}));
  EXPECT_THROW(maxpool2(Tensor<double>(1, 1, 3, 4)), std::invalid_argument);
}

TEST(MaxPool, TiesRouteGradientToTopLeft) {
  Tensor<double> x(1, 1, 2, 2, 7.0);
  std::vector<std::uint32_t> arg;
  maxpool2(x, &arg);
  auto dx = maxpool2_backward(Tensor<double>(1, 1, 1, 1, 1.0), arg, x.shape());
  EXPECT_EQ(dx.values(), (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(MaxPool, BackwardMatchesFiniteDifferences) {
  auto x = random_tensor({2, 3, 6, 4}, 50);
  const auto r = random_tensor({2, 3, 3, 2}, 51);
  std::vector<std::uint32_t> arg;
  maxpool2(x, &arg);
  auto dx = maxpool2_backward(r, arg, x.shape());
  auto f = [&] { return weighted_sum(maxpool2(x), r); };
  EXPECT_LE(check_gradient(x.span(), dx.span(), f).max_rel, kTol);
}

TEST(AvgUnpool, ReplicatesAndDoublesShape) {
  Tensor<double> x(1, 1, 1, 1, 3.0);
  auto y = avgunpool2(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{3, 3, 3, 3}));
}

TEST(AvgUnpool, BackwardSumsEachBlock) {
  auto dx = avgunpool2_backward(Tensor<double>(1, 2, 4, 4, 1.0));
  EXPECT_EQ(dx.shape(), (Shape{1, 2, 2, 2}));
  for (double v : dx.values()) EXPECT_EQ(v, 4.0);
}

TEST(AvgUnpool, BackwardMatchesFiniteDifferences) {
  auto x = random_tensor({2, 2, 3, 3}, 60);
  const auto r = random_tensor({2, 2, 6, 6}, 61);
  auto f = [&] { return weighted_sum(avgunpool2(x), r); };
  EXPECT_LE(check_gradient(x.span(), avgunpool2_backward(r).span(), f).max_rel, kTol);
}

TEST(AvgUnpool, MaxPoolInvertsUnpool) {
  auto x = random_tensor({2, 3, 4, 5}, 62);
  EXPECT_EQ(maxpool2(avgunpool2(x)).values(), x.values());
}

TEST(Concat, StacksChannelsAndSplitsBack) {
  auto a = random_tensor({1, 3, 8, 8}, 70);
  auto b = random_tensor({1, 5, 8, 8}, 71);
  auto y = concat(a, b);
  EXPECT_EQ(y.shape(), (Shape{1, 8, 8, 8}));
  EXPECT_EQ(y.at(0, 2, 4, 4), a.at(0, 2, 4, 4));
  EXPECT_EQ(y.at(0, 3, 4, 4), b.at(0, 0, 4, 4));
  auto [da, db] = concat_backward(y, 3);
  EXPECT_EQ(da.values(), a.values());
  EXPECT_EQ(db.values(), b.values());
  EXPECT_EQ(concat(a, Tensor<double>(1, 0, 8, 8)).values(), a.values());
  EXPECT_THROW(concat(a, Tensor<double>(1, 1, 4, 4)), std::invalid_argument);
}

TEST(Concat, BackwardMatchesFiniteDifferences) {
  auto a = random_tensor({2, 2, 3, 3}, 72);
  auto b = random_tensor({2, 1, 3, 3}, 73);
  const auto r = random_tensor({2, 3, 3, 3}, 74);
  auto f = [&] { return weighted_sum(concat(a, b), r); };
  auto [da, db] = concat_backward(r, 2);
  EXPECT_LE(check_gradient(a.span(), da.span(), f).max_rel, kTol);
  EXPECT_LE(check_gradient(b.span(), db.span(), f).max_rel, kTol);
}

TEST(MseLoss, ValuesAndGradient) {
  auto p = random_tensor({2, 2, 3, 3}, 80);
  EXPECT_EQ(mse_loss(p, p), 0.0);
  Tensor<double> t = p;
  for (auto& v : t.values()) v -= 1.0;
  EXPECT_NEAR(mse_loss(p, t), 1.0, 1e-15);
  auto tgt = random_tensor(p.shape(), 81);
  auto f = [&] { return mse_loss(p, tgt); };
  EXPECT_LE(check_gradient(p.span(), mse_loss_backward(p, tgt).span(), f).max_rel, 1e-8);
}

TEST(Sgd, PlainStepSubtractsGradient) {
  Tensor<double> p(1, 1, 1, 2, 5.0), g(Shape{1, 1, 1, 2}, std::vector<double>{1.0, -2.0}), v(1, 1, 1, 2);
  sgd_step(p, g, v, 1.0, 0.0, 0.0);
  EXPECT_EQ(p.values(), (std::vector<double>{4.0, 7.0}));
}

TEST(Sgd, WeightDecayShrinksParameters) {
  Tensor<double> p(1, 1, 1, 1, 2.0), g(1, 1, 1, 1), v(1, 1, 1, 1);
  sgd_step(p, g, v, 0.5, 0.0, 1e-4);
  EXPECT_DOUBLE_EQ(p.values()[0], 2.0 * (1.0 - 0.5 * 1e-4));
}

TEST(Sgd, MomentumAccumulates) {
  Tensor<double> p(1, 1, 1, 1), g(1, 1, 1, 1, 1.0), v(1, 1, 1, 1);
  sgd_step(p, g, v, 1.0, 0.9, 0.0);
  sgd_step(p, g, v, 1.0, 0.9, 0.0);
  EXPECT_NEAR(p.values()[0], -2.9, 1e-15);
  Tensor<double> wrong(1, 1, 1, 2);
  EXPECT_THROW(sgd_step(p, wrong, v, 1.0, 0.9, 0.0), std::invalid_argument);
}

TEST(Network, SingleConvMatchesLayer) {
  NetworkSpec spec(2);
  spec.add(LayerKind::conv3x3, 0, 3);
  Network<double> net(spec, 7);
  auto x = random_tensor({1, 2, 5, 5}, 90);
  auto y = net.forward(x, Mode::eval);
  auto ref = conv2d(x, net.params().at("001_conv3x3.weight"), net.params().at("001_conv3x3.bias"));
  EXPECT_EQ(y.values(), ref.values());
}

TEST(Network, RejectsCyclesAndChannelMismatch) {
  NetworkSpec cyc(1);
  cyc.add_raw({LayerKind::relu, 1, 1, {2}, "a"});
  cyc.add_raw({LayerKind::relu, 1, 1, {1}, "b"});
  EXPECT_THROW(cyc.validate(), std::invalid_argument);

  NetworkSpec bad(2);
  bad.add_raw({LayerKind::conv3x3, 3, 4, {0}, "c"});
  EXPECT_THROW(bad.validate(), std::invalid_argument);

  NetworkSpec cat(2);
  const int c = cat.add(LayerKind::conv3x3, 0, 3);
  EXPECT_EQ(cat.layers()[cat.add_concat(c, 0)].out_channels, 5);
}

TEST(Network, RejectsInputChannelMismatch) {
  NetworkSpec spec(2);
  spec.add(LayerKind::relu, 0);
  Network<double> net(spec, 1);
  EXPECT_THROW(net.forward(Tensor<double>(1, 3, 4, 4), Mode::eval), std::invalid_argument);
}

TEST(Network, ToyGraphGradientsMatchFiniteDifferences) {
  // conv -> bn -> relu, a pooled branch unpooled back, concat, 1x1 head
  NetworkSpec spec(2);
  const int c1 = spec.add(LayerKind::conv3x3, 0, 3);
  const int bn = spec.add(LayerKind::batchnorm, c1);
  const int r1 = spec.add(LayerKind::relu, bn);
  const int p = spec.add(LayerKind::maxpool2, r1);
  const int c2 = spec.add(LayerKind::conv3x3, p, 4);
  const int u = spec.add(LayerKind::avgunpool2, c2);
  const int cat = spec.add_concat(u, r1);
  spec.add(LayerKind::conv1x1, cat, 2);
  Network<double> net(spec, 3);
  for (auto& [name, t] : net.params())
    if (name.ends_with(".beta") || name.ends_with(".bias")) {
      SplitMix64 rng(5);
      for (auto& v : t.values()) v = 0.3 * rng.normal();
    }

  auto x = random_tensor({2, 2, 6, 6}, 100);
  const auto r = random_tensor({2, 2, 6, 6}, 101);
  auto f = [&] { return weighted_sum(net.forward(x, Mode::train), r); };
  net.zero_grad();
  net.forward(x, Mode::train);
  auto dx = net.backward(r);
  double scale = 0.0;
  for (const auto& [name, g] : net.grads())
    for (double v : g.values()) scale = std::max(scale, std::abs(v));
  EXPECT_LE(check_gradient(x.span(), dx.span(), f).max_rel, kTol);
  for (auto& [name, p] : net.params()) {
    const auto g = net.grads().at(name);
    EXPECT_LE(check_gradient(p.span(), g.span(), f, 1e-5, {}, scale).max_rel, kTol) << name;
  }
}

TEST(Network, EvalForwardIsPureAndCacheFree) {
  NetworkSpec spec(1);
  const int c = spec.add(LayerKind::conv3x3, 0, 4);
  const int b = spec.add(LayerKind::batchnorm, c);
  spec.add(LayerKind::relu, b);
  Network<double> net(spec, 9);
  auto x = random_tensor({1, 1, 8, 8}, 110);
  auto y1 = net.forward(x, Mode::eval);
  EXPECT_FALSE(net.has_cache());
  auto y2 = net.forward(x, Mode::eval);
  EXPECT_EQ(y1.values(), y2.values());
  EXPECT_THROW(net.backward(y1), std::logic_error);
}

TEST(Network, FanOutGradientsAccumulate) {
  // y = concat(x, x): dL/dx = r_a + r_b
  NetworkSpec spec(1);
  spec.add_concat(0, 0);
  Network<double> net(spec, 1);
  auto x = random_tensor({1, 1, 2, 2}, 120);
  net.forward(x, Mode::train);
  auto r = random_tensor({1, 2, 2, 2}, 121);
  auto dx = net.backward(r);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(dx.values()[i], r.values()[i] + r.values()[4 + i]);
}

TEST(Network, OverfitsOneBatch) {
  NetworkSpec spec(1);
  int x = spec.add(LayerKind::conv3x3, 0, 8);
  x = spec.add(LayerKind::batchnorm, x);
  x = spec.add(LayerKind::relu, x);
  x = spec.add(LayerKind::conv3x3, x, 8);
  x = spec.add(LayerKind::batchnorm, x);
  x = spec.add(LayerKind::relu, x);
  spec.add(LayerKind::conv1x1, x, 1);
  Network<float> net(spec, 11);
  auto xin = tensor_cast<float>(random_tensor({4, 1, 16, 16}, 130));
  auto tgt = tensor_cast<float>(random_tensor({4, 1, 16, 16}, 131, 0.5));
  std::map<std::string, Tensor<float>> vel;
  for (const auto& [name, p] : net.params()) vel.emplace(name, Tensor<float>(p.shape()));
  float first = 0.0f, last = 0.0f;
  for (int step = 0; step < 50; ++step) {
    net.zero_grad();
    auto y = net.forward(xin, Mode::train);
    const float loss = mse_loss(y, tgt);
    if (step == 0) first = loss;
    last = loss;
    net.backward(mse_loss_backward(y, tgt));
    for (auto& [name, p] : net.params()) sgd_step(p, net.grads().at(name), vel.at(name), 1e-3, 0.9, 1e-4);
  }
  EXPECT_LT(last, first);
}
