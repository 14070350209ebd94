#include <gtest/gtest.h>

#include <cmath>

#include "lact/metrics.hpp"
#include "lact/rng.hpp"
#include "lact/tomo.hpp"

using namespace lact;
using namespace lact::metrics;

namespace {

Image constant(int n, double v) {
  Image img(n);
  for (auto& x : img.values()) x = v;
  return img;
}

Image noisy(const Image& ref, double sigma, std::uint64_t seed) {
  Image out = ref;
  SplitMix64 rng(seed);
  for (auto& v : out.values()) v += sigma * rng.normal();
  return out;
}

// Straightforward SSIM with explicit window loops and the joint dynamic range.
double ssim_oracle(const Image& x, const Image& y) {
  const int n = x.n(), w = 11, h = w / 2;
  std::vector<double> g(w);
  double gs = 0.0;
  for (int i = 0; i < w; ++i) gs += g[i] = std::exp(-0.5 * (i - h) * (i - h) / (1.5 * 1.5));
  const double L = std::max(x.max(), y.max()) - std::min(x.min(), y.min());
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0.0;
  int count = 0;
  for (int r = h; r < n - h; ++r)
    for (int c = h; c < n - h; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = -h; i <= h; ++i)
        for (int j = -h; j <= h; ++j) {
          const double wt = g[i + h] * g[j + h] / (gs * gs);
          const double a = x.at(r + i, c + j), b = y.at(r + i, c + j);
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

} // namespace

TEST(Psnr, IdenticalIsInfinite) {
  const auto ref = tomo::shepp_logan(32);
  EXPECT_TRUE(std::isinf(psnr(ref, ref)));
  const auto row = evaluate(ref, ref, "s0", "fbp");
  EXPECT_TRUE(row.psnr_infinite());
  EXPECT_EQ(row.nrmse, 0.0);
}

TEST(Psnr, ClosedForm) {
  EXPECT_NEAR(psnr(constant(16, 0.5), constant(16, 1.0)), 10.0 * std::log10(4.0), 1e-12);
  EXPECT_NEAR(psnr(constant(16, 0.5), constant(16, 1.0)), 6.0206, 1e-4);
}

TEST(Psnr, ScaleInvariantAndMonotone) {
  const auto ref = tomo::shepp_logan(32);
  const auto x = noisy(ref, 0.05, 1);
  EXPECT_NEAR(psnr(x * 2.0, ref * 2.0), psnr(x, ref), 1e-10);
  double prev = psnr(x, ref);
  for (double a : {1.5, 2.0, 4.0}) {
    const auto worse = ref + (x - ref) * a;
    const double p = psnr(worse, ref);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Psnr, SizeMismatchAndZeroReferenceThrow) {
  EXPECT_THROW(psnr(Image(16), Image(32)), std::invalid_argument);
  EXPECT_THROW(psnr(constant(16, 1.0), Image(16)), std::invalid_argument);
}

TEST(Nrmse, ClosedForms) {
  const auto ref = tomo::shepp_logan(32);
  EXPECT_EQ(nrmse(ref, ref), 0.0);
  EXPECT_NEAR(nrmse(ref * 2.0, ref), 1.0, 1e-12);
  EXPECT_NEAR(nrmse(Image(32), ref), 1.0, 1e-12);
  EXPECT_THROW(nrmse(ref, Image(32)), std::invalid_argument);
}

TEST(Nrmse, TriangleBound) {
  const auto ref = tomo::shepp_logan(32);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto x = noisy(ref, 0.3, s);
    EXPECT_LE(nrmse(x, ref), (norm2(x.data()) + norm2(ref.data())) / norm2(ref.data()));
  }
}

TEST(Ssim, IdenticalIsOne) {
  const auto ref = tomo::shepp_logan(64);
  EXPECT_NEAR(ssim(ref, ref), 1.0, 1e-12);
  EXPECT_NEAR(ssim(constant(16, 0.3), constant(16, 0.3)), 1.0, 1e-12);
}

TEST(Ssim, LargeNoiseIsBelowHalf) {
  const auto ref = tomo::shepp_logan(64);
  const double L = ref.max() - ref.min();
  EXPECT_LT(ssim(noisy(ref, L, 3), ref), 0.5);
}

TEST(Ssim, MatchesDirectComputationAndIsSymmetric) {
  const auto ref = tomo::random_phantom(32, 4, 5);
  const auto x = noisy(ref, 0.1, 5);
  EXPECT_NEAR(ssim(x, ref), ssim_oracle(x, ref), 1e-10);
  EXPECT_NEAR(ssim(x, ref), ssim(ref, x), 1e-12);
  const double s = ssim(x, ref);
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
}

TEST(Ssim, TooSmallThrows) { EXPECT_THROW(ssim(Image(8), Image(8)), std::invalid_argument); }
