#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lact/fft.hpp"
#include "lact/tomo.hpp"

namespace lact::tomo {

namespace {

constexpr double kAngleTol = 1e-9;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Visits the (pixel, weight) pairs of Joseph's method for the ray at detector
// offset t. The ray steps across whichever axis it is more aligned with and
// linearly interpolates between the two neighboring pixels on the other axis.
template <typename Fn>
inline void trace_ray(int n, double ps, double c, double cs, double sn, double t, Fn&& fn) {
  if (std::abs(cs) >= std::abs(sn)) {
    const double w = ps / std::abs(cs);
    // y(x) = (t + x sin) / cos along the ray, in row units.
    const double slope = sn / cs;
    const double y0 = t / cs;
    for (int col = 0; col < n; ++col) {
      const double x = (col - c) * ps;
      const double fr = (y0 + x * slope) / ps + c;
      const double fl = std::floor(fr);
      const int r0 = static_cast<int>(fl);
      const double f = fr - fl;
      if (r0 >= 0 && r0 < n) fn(static_cast<std::size_t>(r0) * n + col, w * (1.0 - f));
      if (r0 + 1 >= 0 && r0 + 1 < n) fn(static_cast<std::size_t>(r0 + 1) * n + col, w * f);
    }
  } else {
    const double w = ps / std::abs(sn);
    // x(y) = (y cos - t) / sin along the ray, in column units.
    const double slope = cs / sn;
    const double x0 = -t / sn;
    for (int row = 0; row < n; ++row) {
      const double y = (row - c) * ps;
      const double fc = (x0 + y * slope) / ps + c;
      const double fl = std::floor(fc);
      const int c0 = static_cast<int>(fl);
      const double f = fc - fl;
      if (c0 >= 0 && c0 < n) fn(static_cast<std::size_t>(row) * n + c0, w * (1.0 - f));
      if (c0 + 1 >= 0 && c0 + 1 < n) fn(static_cast<std::size_t>(row) * n + c0 + 1, w * f);
    }
  }
}

double det_offset(const Geometry& g, int j) { return (j - 0.5 * (g.n_det - 1)) * g.det_spacing; }

void check_coverage(int n, double ps, const Geometry& g) {
  const double diag = n * ps * std::numbers::sqrt2;
  if (g.n_det * g.det_spacing < diag - 1e-9)
    throw std::invalid_argument("detector of " + std::to_string(g.n_det) + " bins does not cover the grid diagonal");
}

} // namespace

std::vector<double> Geometry::angles_deg() const {
  std::vector<double> out(static_cast<std::size_t>(n_angles));
  const double step = step_deg();
  for (int i = 0; i < n_angles; ++i) out[i] = angle_start_deg + i * step;
  return out;
}

void Geometry::validate() const {
  if (n_angles < 2) throw std::invalid_argument("geometry needs at least two views");
  const double arc = arc_deg();
  if (!(arc > 0.0) || arc > 180.0 + kAngleTol)
    throw std::invalid_argument("parallel-beam arc must lie in (0, 180] degrees");
  if (n_det < 1 || n_det % 2 == 0) throw std::invalid_argument("detector bin count must be odd");
  if (!(det_spacing > 0.0)) throw std::invalid_argument("detector spacing must be positive");
}

int detector_count_for(int n) {
  int d = static_cast<int>(std::ceil(n * std::numbers::sqrt2 - 1e-12));
  if (d % 2 == 0) ++d;
  return d;
}

Geometry parallel_geometry(int n, double pixel_size, int n_angles, double start_deg, double end_deg) {
  Geometry g;
  g.n_angles = n_angles;
  g.angle_start_deg = start_deg;
  g.angle_end_deg = end_deg;
  g.n_det = detector_count_for(n);
  g.det_spacing = pixel_size;
  g.validate();
  return g;
}

Sinogram::Sinogram(const Geometry& g)
    : geometry(g), angles_deg(g.angles_deg()), data(static_cast<std::size_t>(g.n_angles) * g.n_det, 0.0) {}

void Sinogram::validate() const {
  geometry.validate();
  if (static_cast<int>(angles_deg.size()) != geometry.n_angles)
    throw std::invalid_argument("sinogram angle list does not match n_angles");
  if (data.size() != static_cast<std::size_t>(geometry.n_angles) * geometry.n_det)
    throw std::invalid_argument("sinogram data size mismatch");
  for (std::size_t i = 1; i < angles_deg.size(); ++i)
    if (!(angles_deg[i] > angles_deg[i - 1])) throw std::invalid_argument("sinogram angles must increase strictly");
}

void project_view(const Image& img, const Geometry& geom, double angle_deg, std::span<double> out) {
  const int n = img.n();
  const double ps = img.pixel_size();
  const double c = img.center();
  const auto pix = img.data();
  const double th = deg2rad(angle_deg);
  const double cs = std::cos(th), sn = std::sin(th);
  for (int j = 0; j < geom.n_det; ++j) {
    double acc = 0.0;
    trace_ray(n, ps, c, cs, sn, det_offset(geom, j), [&](std::size_t p, double w) { acc += w * pix[p]; });
    out[j] = acc;
  }
}

void transpose_view(std::span<const double> row, const Geometry& geom, double angle_deg, Image& accum) {
  const int n = accum.n();
  const double ps = accum.pixel_size();
  const double c = accum.center();
  auto pix = accum.data();
  const double th = deg2rad(angle_deg);
  const double cs = std::cos(th), sn = std::sin(th);
  for (int j = 0; j < geom.n_det; ++j) {
    const double v = row[j];
    if (v == 0.0) continue;
    trace_ray(n, ps, c, cs, sn, det_offset(geom, j), [&](std::size_t p, double w) { pix[p] += w * v; });
  }
}

Sinogram forward_project(const Image& img, const Geometry& geom) {
  geom.validate();
  check_coverage(img.n(), img.pixel_size(), geom);
  Sinogram sino(geom);
  for (int a = 0; a < geom.n_angles; ++a) project_view(img, geom, sino.angles_deg[a], sino.row(a));
  return sino;
}

Sinogram forward_project_like(const Image& img, const Sinogram& like) {
  like.validate();
  check_coverage(img.n(), img.pixel_size(), like.geometry);
  Sinogram sino = like;
  for (int a = 0; a < like.n_angles(); ++a) project_view(img, like.geometry, like.angles_deg[a], sino.row(a));
  return sino;
}

Image project_transpose(const Sinogram& sino, int n, double pixel_size) {
  sino.validate();
  Image img(n, pixel_size);
  for (int a = 0; a < sino.n_angles(); ++a) transpose_view(sino.row(a), sino.geometry, sino.angles_deg[a], img);
  return img;
}

std::vector<double> ramp_response(int padded_len, double det_spacing, Window window) {
  // DFT of the band-limited spatial ramp kernel h[0] = 1/(4 d^2),
  // h[k odd] = -1/(pi k d)^2. Its response tracks |f| away from DC and carries
  // the small DC value that the sampled |f| would drop, which removes the
  // global offset a plain |f| multiplier leaves in the reconstruction.
  std::vector<fft::cplx> h(static_cast<std::size_t>(padded_len), 0.0);
  const double d = det_spacing;
  h[0] = 1.0 / (4.0 * d * d);
  for (int k = 1; k < padded_len; ++k) {
    const int kk = fft::signed_freq(k, padded_len);
    if (kk % 2 != 0) h[k] = -1.0 / (std::numbers::pi * std::numbers::pi * kk * kk * d * d);
  }
  fft::forward_rows(h, 1, padded_len);
  std::vector<double> out(static_cast<std::size_t>(padded_len));
  for (int k = 0; k < padded_len; ++k) {
    const int kk = fft::signed_freq(k, padded_len);
    double v = h[k].real() * d;
    if (window == Window::hann) v *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * kk / padded_len));
    out[k] = v;
  }
  return out;
}

Sinogram ramp_filter(const Sinogram& sino, Window window) {
  sino.validate();
  const int nd = sino.n_det();
  const int na = sino.n_angles();
  const int padded = fft::next_pow2(2 * nd);
  const auto h = ramp_response(padded, sino.geometry.det_spacing, window);

  std::vector<fft::cplx> buf(static_cast<std::size_t>(na) * padded, 0.0);
  for (int a = 0; a < na; ++a) {
    const auto row = sino.row(a);
    for (int j = 0; j < nd; ++j) buf[static_cast<std::size_t>(a) * padded + j] = row[j];
  }
  fft::forward_rows(buf, na, padded);
  for (int a = 0; a < na; ++a)
    for (int k = 0; k < padded; ++k) buf[static_cast<std::size_t>(a) * padded + k] *= h[k];
  fft::inverse_rows(buf, na, padded);

  Sinogram out = sino;
  for (int a = 0; a < na; ++a) {
    auto row = out.row(a);
    for (int j = 0; j < nd; ++j) row[j] = buf[static_cast<std::size_t>(a) * padded + j].real();
  }
  return out;
}

Image backproject(const Sinogram& sino, int n, double pixel_size) {
  sino.validate();
  Image img(n, pixel_size);
  const auto& g = sino.geometry;
  const double c = img.center();
  const double cd = 0.5 * (g.n_det - 1);
  const double scale = deg2rad(g.step_deg());
  auto pix = img.data();
  for (int a = 0; a < sino.n_angles(); ++a) {
    const double th = deg2rad(sino.angles_deg[a]);
    const double cs = std::cos(th), sn = std::sin(th);
    const auto q = sino.row(a);
    // t = -x sin + y cos, in detector-bin units.
    const double dcol = -sn * pixel_size / g.det_spacing;
    for (int r = 0; r < n; ++r) {
      double fj = ((-(0 - c) * sn + (r - c) * cs) * pixel_size) / g.det_spacing + cd;
      double* out = pix.data() + static_cast<std::size_t>(r) * n;
      for (int col = 0; col < n; ++col, fj += dcol) {
        const double fl = std::floor(fj);
        const int j0 = static_cast<int>(fl);
        const double f = fj - fl;
        double v = 0.0;
        if (j0 >= 0 && j0 < g.n_det) v += (1.0 - f) * q[j0];
        if (j0 + 1 >= 0 && j0 + 1 < g.n_det) v += f * q[j0 + 1];
        out[col] += v;
      }
    }
  }
  img *= scale;
  return img;
}

Image fbp(const Sinogram& sino, int n, Window window, double pixel_size) {
  return backproject(ramp_filter(sino, window), n, pixel_size);
}

Sinogram restrict_angles(const Sinogram& sino, double lo_deg, double hi_deg) {
  sino.validate();
  const auto& g = sino.geometry;
  if (!(hi_deg > lo_deg)) throw std::invalid_argument("restrict_angles: empty angular range");
  if (lo_deg < g.angle_start_deg - kAngleTol || hi_deg > g.angle_end_deg + kAngleTol)
    throw std::invalid_argument("restrict_angles: range exceeds the scan arc");

  Sinogram out;
  out.geometry = g;
  for (int a = 0; a < sino.n_angles(); ++a) {
    const double th = sino.angles_deg[a];
    if (th >= lo_deg - kAngleTol && th < hi_deg - kAngleTol) {
      out.angles_deg.push_back(th);
      const auto row = sino.row(a);
      out.data.insert(out.data.end(), row.begin(), row.end());
    }
  }
  if (out.angles_deg.empty()) throw std::invalid_argument("restrict_angles: no views inside the range");
  // Keep the original angular step so backprojection weights stay unchanged.
  const double step = g.step_deg();
  out.geometry.n_angles = static_cast<int>(out.angles_deg.size());
  out.geometry.angle_start_deg = out.angles_deg.front();
  out.geometry.angle_end_deg = out.angles_deg.front() + step * out.geometry.n_angles;
  if (out.geometry.n_angles < 2) throw std::invalid_argument("restrict_angles: fewer than two views selected");
  return out;
}

} // namespace lact::tomo
