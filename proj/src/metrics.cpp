#include "lact/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lact::metrics {

namespace {

void require_same(const Image& x, const Image& ref) {
  if (x.n() != ref.n()) throw std::invalid_argument("metrics: image sizes differ");
}

// Valid-mode separable filtering of an n x n field with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& f, int n, const std::vector<double>& k) {
  const int w = static_cast<int>(k.size());
  const int m = n - w + 1;
  std::vector<double> tmp(static_cast<std::size_t>(n) * m);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int i = 0; i < w; ++i) acc += k[i] * f[static_cast<std::size_t>(r) * n + c + i];
      tmp[static_cast<std::size_t>(r) * m + c] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(m) * m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      double acc = 0.0;
      for (int i = 0; i < w; ++i) acc += k[i] * tmp[static_cast<std::size_t>(r + i) * m + c];
      out[static_cast<std::size_t>(r) * m + c] = acc;
    }
  return out;
}

} // namespace

bool MetricsRow::psnr_infinite() const { return std::isinf(psnr_db); }

double psnr(const Image& x, const Image& ref) {
  require_same(x, ref);
  const double peak = ref.max();
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: reference peak must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.values()[i] - ref.values()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double nrmse(const Image& x, const Image& ref) {
  require_same(x, ref);
  const double denom = norm2(ref.data());
  if (!(denom > 0.0)) throw std::invalid_argument("nrmse: reference has zero norm");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.values()[i] - ref.values()[i];
    acc += d * d;
  }
  return std::sqrt(acc) / denom;
}

double ssim(const Image& x, const Image& ref, const SsimOptions& opt) {
  require_same(x, ref);
  const int n = x.n();
  if (n < opt.window) throw std::invalid_argument("ssim: image smaller than the window");

  std::vector<double> k(static_cast<std::size_t>(opt.window));
  const int half = opt.window / 2;
  double ksum = 0.0;
  for (int i = 0; i < opt.window; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * opt.sigma * opt.sigma));
    ksum += k[i];
  }
  for (double& v : k) v /= ksum;

  double range = std::max(x.max(), ref.max()) - std::min(x.min(), ref.min());
  if (!(range > 0.0)) range = 1.0; // two equal constants; stabilizers keep the ratio at 1
  const double c1 = (opt.k1 * range) * (opt.k1 * range);
  const double c2 = (opt.k2 * range) * (opt.k2 * range);

  const auto& a = x.values();
  const auto& b = ref.values();
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, n, k);
  const auto mu_b = filter_valid(b, n, k);
  const auto e_aa = filter_valid(aa, n, k);
  const auto e_bb = filter_valid(bb, n, k);
  const auto e_ab = filter_valid(ab, n, k);

  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

MetricsRow evaluate(const Image& x, const Image& ref, std::string slice_id, std::string method) {
  return MetricsRow{std::move(slice_id), std::move(method), psnr(x, ref), nrmse(x, ref), ssim(x, ref)};
}

} // namespace lact::metrics
