#include "lact/dwt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lact/fft.hpp"

namespace lact::dwt {

namespace {

// 1 below edge - width/2, 0 above edge + width/2, raised cosine in between.
double soft_step(double v, double edge, double width) {
  const double lo = edge - 0.5 * width;
  if (v <= lo) return 1.0;
  if (v >= edge + 0.5 * width) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (v - lo) / width));
}

double fold180(double deg) {
  double d = std::fmod(deg, 180.0);
  if (d < 0.0) d += 180.0;
  return d;
}

double angular_weight(double phi, double center, double width) {
  double d = std::abs(fold180(phi - center));
  d = std::min(d, 180.0 - d);
  return soft_step(d, 0.5 * width, kAngularTransition * width);
}

} // namespace

std::vector<double> FilterBank::fft_window(int c) const {
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  const auto& w = windows.at(static_cast<std::size_t>(c));
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < n; ++col)
      out[static_cast<std::size_t>(r) * n + col] =
          w[static_cast<std::size_t>(fft::centered_index(r, n)) * n + fft::centered_index(col, n)];
  return out;
}

FilterBank build_filter_bank(int n, int levels) {
  if (levels < 1) throw std::invalid_argument("filter bank needs at least one level");
  if (levels >= 30 || n < (1 << levels))
    throw std::invalid_argument("grid side " + std::to_string(n) + " is too small for " + std::to_string(levels) +
                                " levels");
  FilterBank bank;
  bank.n = n;
  bank.levels = levels;
  const std::size_t npix = static_cast<std::size_t>(n) * n;

  bank.dirs_per_level.push_back(1);
  for (int s = 1; s < levels; ++s) bank.dirs_per_level.push_back(1 << s);

  // Cumulative lowpass edges at Nyquist / 2^(levels - 1 - j), in cycles/pixel.
  std::vector<double> edges;
  for (int j = 0; j + 1 < levels; ++j) edges.push_back(0.5 / static_cast<double>(1 << (levels - 1 - j)));

  std::vector<double> radius(npix), phi(npix);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double kx = c - n / 2, ky = r - n / 2;
      radius[static_cast<std::size_t>(r) * n + c] = std::hypot(kx, ky) / n;
      phi[static_cast<std::size_t>(r) * n + c] = fold180(std::atan2(ky, kx) * 180.0 / std::numbers::pi);
    }

  auto cumulative = [&](int j, std::size_t p) {
    if (j >= static_cast<int>(edges.size())) return 1.0;
    // Transition spans a third of the shell just inside the edge (width edge/2).
    return soft_step(radius[p], edges[j], kRadialTransition * 0.5 * edges[j]);
  };

  // Periodic point reflection k -> -k used to make every window Hermitian-symmetric.
  auto partner = [n](std::size_t p) {
    const int r = static_cast<int>(p / n), c = static_cast<int>(p % n);
    const int pr = (n - r) % n, pc = (n - c) % n;
    return static_cast<std::size_t>(pr) * n + pc;
  };
  auto symmetrize = [&](std::vector<double>& w) {
    std::vector<double> s(npix);
    for (std::size_t p = 0; p < npix; ++p) s[p] = 0.5 * (w[p] + w[partner(p)]);
    w.swap(s);
  };

  std::vector<double> lowpass(npix);
  for (std::size_t p = 0; p < npix; ++p) lowpass[p] = cumulative(0, p);
  symmetrize(lowpass);
  bank.windows.push_back(std::move(lowpass));
  bank.meta.push_back({0, 0, 0.0, false});

  for (int s = 1; s < levels; ++s) {
    const int dirs = bank.dirs_per_level[s];
    const double width = 180.0 / dirs;
    for (int d = 0; d < dirs; ++d) {
      const double center = d * width;
      std::vector<double> w(npix);
      for (std::size_t p = 0; p < npix; ++p) {
        const double shell = cumulative(s, p) - cumulative(s - 1, p);
        w[p] = shell > 0.0 ? shell * angular_weight(phi[p], center, width) : 0.0;
      }
      symmetrize(w);
      bank.windows.push_back(std::move(w));
      bank.meta.push_back({s, d, center, true});
    }
  }

  // Close the partition exactly: the last window absorbs the rounding.
  auto& last = bank.windows.back();
  for (std::size_t p = 0; p < npix; ++p) {
    double others = 0.0;
    for (std::size_t c = 0; c + 1 < bank.windows.size(); ++c) others += bank.windows[c][p];
    const double v = 1.0 - others;
    if (v < -1e-12) throw std::logic_error("filter bank windows overlap beyond unity");
    last[p] = v;
  }
  return bank;
}

double CoefficientStack::energy(int c) const {
  double e = 0.0;
  for (double v : channel(c)) e += v * v;
  return e;
}

CoefficientStack decompose(const Image& img, const FilterBank& bank) {
  const int n = img.n();
  if (n != bank.n) throw std::invalid_argument("decompose: image and filter bank sizes differ");
  const std::size_t npix = static_cast<std::size_t>(n) * n;
  const auto spec = fft::forward_2d_real(img.data(), n);

  CoefficientStack out;
  out.n = n;
  out.meta = bank.meta;
  out.data.assign(npix * bank.channels(), 0.0);
  std::vector<fft::cplx> buf(npix);
  for (int c = 0; c < bank.channels(); ++c) {
    const auto w = bank.fft_window(c);
    for (std::size_t p = 0; p < npix; ++p) buf[p] = spec[p] * w[p];
    fft::inverse_2d(buf, n, n);
    auto dst = out.channel(c);
    for (std::size_t p = 0; p < npix; ++p) dst[p] = buf[p].real();
  }
  return out;
}

Image recompose(const CoefficientStack& stack, const FilterBank& bank, double pixel_size) {
  if (stack.channels() != bank.channels()) throw std::invalid_argument("recompose: channel count does not match bank");
  if (stack.n != bank.n) throw std::invalid_argument("recompose: stack and bank sizes differ");
  Image out(stack.n, pixel_size);
  auto dst = out.data();
  for (int c = 0; c < stack.channels(); ++c) {
    const auto src = stack.channel(c);
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
  }
  return out;
}

} // namespace lact::dwt
