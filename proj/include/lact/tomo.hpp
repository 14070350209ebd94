#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lact/image.hpp"

namespace lact::tomo {

// Parallel-beam acquisition over the half-open arc [angle_start, angle_end).
// At ray angle theta the rays run along (cos theta, sin theta) and the
// detector axis is (-sin theta, cos theta); the projection therefore samples
// frequency directions theta + 90 degrees.
struct Geometry {
  int n_angles = 360;
  double angle_start_deg = 0.0;
  double angle_end_deg = 180.0;
  int n_det = 0;
  double det_spacing = 1.0;

  double arc_deg() const { return angle_end_deg - angle_start_deg; }
  double step_deg() const { return arc_deg() / n_angles; }
  std::vector<double> angles_deg() const;
  void validate() const;
};

// Next odd integer >= ceil(n * sqrt(2)); covers the grid diagonal at unit spacing.
int detector_count_for(int n);

// Geometry that covers an n x n grid with det_spacing equal to the pixel size.
Geometry parallel_geometry(int n, double pixel_size, int n_angles, double start_deg = 0.0,
                           double end_deg = 180.0);

struct Sinogram {
  Geometry geometry;
  std::vector<double> angles_deg;
  std::vector<double> data; // n_angles x n_det, row-major

  Sinogram() = default;
  explicit Sinogram(const Geometry& g);

  int n_angles() const { return geometry.n_angles; }
  int n_det() const { return geometry.n_det; }
  std::span<double> row(int a) { return {data.data() + static_cast<std::size_t>(a) * n_det(), static_cast<std::size_t>(n_det())}; }
  std::span<const double> row(int a) const {
    return {data.data() + static_cast<std::size_t>(a) * n_det(), static_cast<std::size_t>(n_det())};
  }
  void validate() const;
};

struct Ellipse {
  double cx = 0.0, cy = 0.0; // mm
  double a = 1.0, b = 1.0;   // semi-axes, mm
  double rotation_deg = 0.0;
  double intensity = 1.0;    // additive
};

// Rasterizes a sum of ellipses with 4x4 supersampling, clamped to [lo, hi].
Image render_ellipses(int n, double pixel_size, std::span<const Ellipse> ellipses, double lo, double hi);

// Ten-ellipse Shepp-Logan phantom (Toft intensities) inscribed in the grid's unit disk.
Image shepp_logan(int n, double pixel_size = 1.0);
std::vector<Ellipse> shepp_logan_ellipses(double radius_mm);

// Body ellipse plus k - 1 interior ellipses; a pure function of (n, seed, k).
Image random_phantom(int n, std::uint64_t seed, int k, double pixel_size = 1.0);

Sinogram forward_project(const Image& img, const Geometry& geom);
// Projects onto the exact angle list of `like` (same geometry and views).
Sinogram forward_project_like(const Image& img, const Sinogram& like);

// Single-view primitives shared by the projectors and SART.
void project_view(const Image& img, const Geometry& geom, double angle_deg, std::span<double> out);
void transpose_view(std::span<const double> row, const Geometry& geom, double angle_deg, Image& accum);
// Exact transpose of forward_project (ray-driven scatter of the same weights).
Image project_transpose(const Sinogram& sino, int n, double pixel_size);

enum class Window { ramlak, hann };

Sinogram ramp_filter(const Sinogram& sino, Window window = Window::ramlak);
// Frequency response used by ramp_filter for a padded length (cycles per mm units).
std::vector<double> ramp_response(int padded_len, double det_spacing, Window window);

// Pixel-driven backprojection with linear detector interpolation, scaled by
// the angular step in radians.
Image backproject(const Sinogram& sino, int n, double pixel_size = 1.0);

Image fbp(const Sinogram& sino, int n, Window window = Window::ramlak, double pixel_size = 1.0);

Sinogram restrict_angles(const Sinogram& sino, double lo_deg, double hi_deg);

struct TvParams {
  int n_iters = 50;
  double sart_relax = 1.0;
  int n_tv_steps = 10;
  double tv_step_scale = 0.2;
  bool enforce_nonnegativity = true;

  void validate() const;
};

struct TvResult {
  Image image;
  std::vector<double> residual_log; // ||P x - b|| after each iteration
  std::vector<double> tv_log;       // TV(x) after each iteration
};

inline constexpr double kTvEpsilon = 1e-8;

double total_variation(const Image& img, double eps = kTvEpsilon);
Image tv_gradient(const Image& img, double eps = kTvEpsilon);
double data_residual(const Image& img, const Sinogram& sino);

// Relaxed SART over all views of a sinogram. Ray lengths and per-view
// column sums are computed once and reused by every sweep.
class SartSolver {
public:
  SartSolver(const Sinogram& sino, int n, double pixel_size);
  void sweep(Image& x, double relax) const;

private:
  const Sinogram* sino_;
  int n_;
  double pixel_size_;
  std::vector<int> order_;
  std::vector<double> inv_len_; // n_angles x n_det
  std::vector<float> inv_col_;  // n_angles x n*n
};

TvResult pocs_tv(const Sinogram& sino, int n, const TvParams& params = {}, double pixel_size = 1.0);

} // namespace lact::tomo
