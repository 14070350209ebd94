#include "lact/spectrum.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lact/fft.hpp"
#include "lact/parallel.hpp"

namespace lact::spectrum {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

int sgn(double v) { return v >= 0.0 ? 1 : -1; }

Vec2 source(double lambda_deg, double radius) {
  return {radius * std::cos(lambda_deg * kDeg), radius * std::sin(lambda_deg * kDeg)};
}

// Per-point data reused across all frequencies.
struct PointGeometry {
  Vec2 alpha_minus;
  Vec2 alpha_plus;
  bool full = false;
};

PointGeometry point_geometry(Vec2 r, const ScanArc& arc) {
  if (std::hypot(r.x, r.y) >= arc.radius)
    throw std::invalid_argument("katsevich_sigma: point lies outside the source orbit");
  const Vec2 am = source(arc.lambda_minus_deg, arc.radius);
  const Vec2 ap = source(arc.lambda_plus_deg, arc.radius);
  PointGeometry g;
  g.alpha_minus = {r.x - am.x, r.y - am.y};
  g.full = arc.full_orbit();
  g.alpha_plus = g.full ? Vec2{-g.alpha_minus.x, -g.alpha_minus.y} : Vec2{r.x - ap.x, r.y - ap.y};
  return g;
}

// e is parallel to alpha-, so sgn(omega.e) == sgn(omega.alpha-).
int sigma_at(const PointGeometry& g, double wx, double wy) {
  const double dm = wx * g.alpha_minus.x + wy * g.alpha_minus.y;
  const int s_minus = sgn(dm);
  const int s_plus = g.full ? -s_minus : sgn(wx * g.alpha_plus.x + wy * g.alpha_plus.y);
  return s_minus * (s_minus - s_plus) / 2;
}

} // namespace

void ScanArc::validate() const {
  if (!(lambda_plus_deg > lambda_minus_deg)) throw std::invalid_argument("scan arc: lambda+ must exceed lambda-");
  if (!(radius > 0.0)) throw std::invalid_argument("scan arc: radius must be positive");
}

Sigma katsevich_sigma(Vec2 r, Vec2 omega, const ScanArc& arc) {
  arc.validate();
  if (omega.x == 0.0 && omega.y == 0.0) return {0, true};
  return {sigma_at(point_geometry(r, arc), omega.x, omega.y), false};
}

FreqMask sigma_map(Vec2 r, int n, const ScanArc& arc) {
  arc.validate();
  const PointGeometry g = point_geometry(r, arc);
  FreqMask m(n);
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const int kx = col - n / 2, ky = row - n / 2;
      m.at(row, col) = (kx == 0 && ky == 0) ? 0.0 : sigma_at(g, kx, ky);
    }
  return m;
}

double direction_deg(int kx, int ky) {
  // Fold onto the upper half plane first so omega and -omega agree exactly.
  if (ky < 0 || (ky == 0 && kx < 0)) {
    kx = -kx;
    ky = -ky;
  }
  double a = std::atan2(static_cast<double>(ky), static_cast<double>(kx)) / kDeg;
  if (a >= 180.0) a -= 180.0;
  return a;
}

FreqMask wedge_mask(int n, double lo_deg, double hi_deg) {
  const double width = hi_deg - lo_deg;
  if (!(width > 0.0) || width > 180.0) throw std::invalid_argument("wedge_mask: coverage must lie in (0, 180]");
  FreqMask m(n);
  const double start = lo_deg + 90.0;
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const int kx = col - n / 2, ky = row - n / 2;
      if (kx == 0 && ky == 0) continue;
      double d = std::fmod(direction_deg(kx, ky) - start, 180.0);
      if (d < 0.0) d += 180.0;
      m.at(row, col) = d < width ? 0.0 : 1.0;
    }
  return m;
}

Image katsevich_reconstruct(const Image& img, const ScanArc& arc) {
  arc.validate();
  const int n = img.n();
  if (n > kMaxKatsevichSide)
    throw std::invalid_argument("katsevich_reconstruct: n = " + std::to_string(n) + " exceeds the limit of 128");
  const double half_diag = 0.5 * n * img.pixel_size() * std::numbers::sqrt2;
  if (arc.radius <= half_diag) throw std::invalid_argument("katsevich_reconstruct: orbit radius inside the field of view");

  const auto spec = fft::forward_2d_real(img.data(), n);
  // phase[k * n + m] = exp(2 pi i k m / n) / n
  std::vector<std::complex<double>> phase(static_cast<std::size_t>(n) * n);
  for (int k = 0; k < n; ++k)
    for (int m = 0; m < n; ++m)
      phase[static_cast<std::size_t>(k) * n + m] =
          std::polar(1.0 / n, 2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(k) * m) % n) / n);

  Image out(n, img.pixel_size());
  auto pix = out.data();
  parallel_for(static_cast<std::size_t>(n) * n, [&](std::size_t idx) {
    const int row = static_cast<int>(idx / n), col = static_cast<int>(idx % n);
    const PointGeometry g = point_geometry({img.x_of(col), img.y_of(row)}, arc);
    std::complex<double> acc = 0.0;
    for (int ky = 0; ky < n; ++ky) {
      const int wy = fft::signed_freq(ky, n);
      std::complex<double> inner = 0.0;
      for (int kx = 0; kx < n; ++kx) {
        const int wx = fft::signed_freq(kx, n);
        const int s = (wx == 0 && wy == 0) ? 1 : sigma_at(g, wx, wy);
        if (s != 0) inner += static_cast<double>(s) * spec[static_cast<std::size_t>(ky) * n + kx] *
                             phase[static_cast<std::size_t>(kx) * n + col];
      }
      acc += inner * phase[static_cast<std::size_t>(ky) * n + row];
    }
    pix[idx] = acc.real();
  });
  return out;
}

FreqMap magnitude_spectrum(const Image& img) {
  const int n = img.n();
  const auto spec = fft::forward_2d_real(img.data(), n);
  FreqMap out(n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      out.at(fft::centered_index(r, n), fft::centered_index(c, n)) = std::abs(spec[static_cast<std::size_t>(r) * n + c]);
  return out;
}

ArtifactSpectrum artifact_spectrum(const Image& limited, const Image& full) {
  if (limited.n() != full.n()) throw std::invalid_argument("artifact_spectrum: image sizes differ");
  ArtifactSpectrum out;
  out.magnitude = magnitude_spectrum(limited - full);
  out.log_magnitude = out.magnitude;
  for (double& v : out.log_magnitude.data) v = std::log1p(v);
  return out;
}

double wedge_energy_ratio(const FreqMap& spec, const FreqMask& mask) {
  if (spec.n != mask.n) throw std::invalid_argument("wedge_energy_ratio: size mismatch");
  const int n = spec.n;
  double inside = 0.0, total = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (r == n / 2 && c == n / 2) continue;
      const double e = spec.at(r, c) * spec.at(r, c);
      total += e;
      if (mask.at(r, c) != 0.0) inside += e;
    }
  if (!(total > 0.0)) throw std::invalid_argument("wedge_energy_ratio: spectrum has zero energy");
  return inside / total;
}

double mask_area_fraction(const FreqMask& mask) {
  const int n = mask.n;
  std::size_t set = 0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (!(r == n / 2 && c == n / 2) && mask.at(r, c) != 0.0) ++set;
  return static_cast<double>(set) / (static_cast<double>(n) * n - 1.0);
}

std::vector<double> angular_profile(const FreqMap& spec, int bins) {
  if (bins < 1) throw std::invalid_argument("angular_profile: need at least one bin");
  const int n = spec.n;
  std::vector<double> prof(static_cast<std::size_t>(bins), 0.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const int kx = c - n / 2, ky = r - n / 2;
      if (kx == 0 && ky == 0) continue;
      int b = static_cast<int>(direction_deg(kx, ky) / 180.0 * bins);
      if (b >= bins) b = bins - 1;
      prof[b] += spec.at(r, c) * spec.at(r, c);
    }
  double total = 0.0;
  for (double v : prof) total += v;
  if (total > 0.0)
    for (double& v : prof) v /= total;
  return prof;
}

double profile_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("profile_correlation: length mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0 && sbb > 0.0)) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

} // namespace lact::spectrum
