#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lact/rng.hpp"
#include "lact/tomo.hpp"

namespace lact::tomo {

namespace {
constexpr int kSuper = 4;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
} // namespace

Image render_ellipses(int n, double pixel_size, std::span<const Ellipse> ellipses, double lo, double hi) {
  Image img(n, pixel_size);
  for (const auto& e : ellipses)
    if (!(e.a > 0.0) || !(e.b > 0.0)) throw std::invalid_argument("ellipse semi-axes must be positive");

  struct Prepared {
    double cx, cy, ca, sa, inv_a2, inv_b2, value;
    double bound; // bounding radius for a cheap reject
  };
  std::vector<Prepared> prep;
  prep.reserve(ellipses.size());
  for (const auto& e : ellipses) {
    const double th = deg2rad(e.rotation_deg);
    prep.push_back({e.cx, e.cy, std::cos(th), std::sin(th), 1.0 / (e.a * e.a), 1.0 / (e.b * e.b), e.intensity,
                    std::max(e.a, e.b) + pixel_size});
  }

  const double sub = pixel_size / kSuper;
  const double weight = 1.0 / (kSuper * kSuper);
  for (int r = 0; r < n; ++r) {
    const double yc = img.y_of(r);
    for (int c = 0; c < n; ++c) {
      const double xc = img.x_of(c);
      double v = 0.0;
      for (const auto& e : prep) {
        if (std::abs(xc - e.cx) > e.bound || std::abs(yc - e.cy) > e.bound) continue;
        int inside = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          const double y = yc + (sy + 0.5) * sub - 0.5 * pixel_size - e.cy;
          for (int sx = 0; sx < kSuper; ++sx) {
            const double x = xc + (sx + 0.5) * sub - 0.5 * pixel_size - e.cx;
            const double u = x * e.ca + y * e.sa;
            const double w = -x * e.sa + y * e.ca;
            if (u * u * e.inv_a2 + w * w * e.inv_b2 <= 1.0) ++inside;
          }
        }
        v += e.value * inside * weight;
      }
      img.at(r, c) = std::clamp(v, lo, hi);
    }
  }
  return img;
}

std::vector<Ellipse> shepp_logan_ellipses(double radius_mm) {
  // {intensity, a, b, x0, y0, phi}; y0 is y-up in the classic table and is
  // flipped here because image rows run y-down.
  static constexpr double table[10][6] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0}, {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},  {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  std::vector<Ellipse> out;
  for (const auto& row : table) {
    out.push_back(Ellipse{row[3] * radius_mm, -row[4] * radius_mm, row[1] * radius_mm, row[2] * radius_mm, -row[5],
                          row[0]});
  }
  return out;
}

Image shepp_logan(int n, double pixel_size) {
  if (n < Image::kMinSide) throw std::invalid_argument("shepp_logan: n must be at least 8");
  const auto ellipses = shepp_logan_ellipses(0.5 * n * pixel_size);
  return render_ellipses(n, pixel_size, ellipses, 0.0, 1.0);
}

Image random_phantom(int n, std::uint64_t seed, int k, double pixel_size) {
  if (n < Image::kMinSide) throw std::invalid_argument("random_phantom: n must be at least 8");
  if (k < 1) throw std::invalid_argument("random_phantom: need at least one ellipse");
  SplitMix64 rng(seed);
  const double radius = 0.5 * n * pixel_size;

  std::vector<Ellipse> ellipses;
  Ellipse body;
  body.cx = rng.uniform(-0.05, 0.05) * radius;
  body.cy = rng.uniform(-0.05, 0.05) * radius;
  body.a = rng.uniform(0.6, 0.9) * radius;
  body.b = rng.uniform(0.6, 0.9) * radius;
  body.rotation_deg = rng.uniform(0.0, 180.0);
  body.intensity = 1.0;
  ellipses.push_back(body);

  const double bth = body.rotation_deg * std::numbers::pi / 180.0;
  for (int i = 1; i < k; ++i) {
    // Center drawn uniformly from the body ellipse shrunk to 70%.
    const double rad = 0.7 * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double u = rad * body.a * std::cos(phi);
    const double w = rad * body.b * std::sin(phi);
    Ellipse e;
    e.cx = body.cx + u * std::cos(bth) - w * std::sin(bth);
    e.cy = body.cy + u * std::sin(bth) + w * std::cos(bth);
    e.a = rng.uniform(0.05, 0.4) * radius;
    e.b = rng.uniform(0.05, 0.4) * radius;
    e.rotation_deg = rng.uniform(0.0, 180.0);
    e.intensity = rng.uniform(-0.4, 0.4);
    ellipses.push_back(e);
  }
  return render_ellipses(n, pixel_size, ellipses, 0.0, 1.2);
}

} // namespace lact::tomo
