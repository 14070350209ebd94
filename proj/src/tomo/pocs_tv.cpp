#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "lact/tomo.hpp"

namespace lact::tomo {

void TvParams::validate() const {
  if (n_iters < 1) throw std::invalid_argument("tv: n_iters must be >= 1");
  if (n_tv_steps < 0) throw std::invalid_argument("tv: n_tv_steps must be >= 0");
  if (!(sart_relax > 0.0 && sart_relax < 2.0)) throw std::invalid_argument("tv: sart_relax must lie in (0, 2)");
  if (!(tv_step_scale > 0.0 && tv_step_scale < 1.0)) throw std::invalid_argument("tv: tv_step_scale must lie in (0, 1)");
}

double total_variation(const Image& img, double eps) {
  const int n = img.n();
  double tv = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double v = img.at(r, c);
      const double dx = c + 1 < n ? img.at(r, c + 1) - v : 0.0;
      const double dy = r + 1 < n ? img.at(r + 1, c) - v : 0.0;
      tv += std::sqrt(dx * dx + dy * dy + eps);
    }
  }
  return tv;
}

Image tv_gradient(const Image& img, double eps) {
  const int n = img.n();
  Image grad(n, img.pixel_size());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double v = img.at(r, c);
      const double dx = c + 1 < n ? img.at(r, c + 1) - v : 0.0;
      const double dy = r + 1 < n ? img.at(r + 1, c) - v : 0.0;
      const double s = std::sqrt(dx * dx + dy * dy + eps);
      // d/dv of this term; the neighbor terms receive the opposite sign.
      if (c + 1 < n) {
        grad.at(r, c) -= dx / s;
        grad.at(r, c + 1) += dx / s;
      }
      if (r + 1 < n) {
        grad.at(r, c) -= dy / s;
        grad.at(r + 1, c) += dy / s;
      }
    }
  }
  return grad;
}

double data_residual(const Image& img, const Sinogram& sino) {
  const Sinogram p = forward_project_like(img, sino);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double d = p.data[i] - sino.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

namespace {

// Golden-ratio view ordering: consecutive updates use well-separated views.
std::vector<int> view_order(int count) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  std::stable_sort(idx.begin(), idx.end(), [g](int a, int b) {
    const double fa = a * g - std::floor(a * g);
    const double fb = b * g - std::floor(b * g);
    return fa < fb;
  });
  return idx;
}

} // namespace

SartSolver::SartSolver(const Sinogram& sino, int n, double pixel_size)
    : sino_(&sino), n_(n), pixel_size_(pixel_size), order_(view_order(sino.n_angles())) {
  sino.validate();
  const int nd = sino.n_det();
  const std::size_t npix = static_cast<std::size_t>(n) * n;
  Image ones(n, pixel_size);
  std::fill(ones.values().begin(), ones.values().end(), 1.0);
  inv_len_.assign(static_cast<std::size_t>(sino.n_angles()) * nd, 0.0);
  inv_col_.assign(static_cast<std::size_t>(sino.n_angles()) * npix, 0.0f);
  std::vector<double> len(nd), unit(nd, 1.0);
  Image col(n, pixel_size);
  for (int a = 0; a < sino.n_angles(); ++a) {
    project_view(ones, sino.geometry, sino.angles_deg[a], len);
    for (int j = 0; j < nd; ++j) inv_len_[static_cast<std::size_t>(a) * nd + j] = len[j] > 1e-12 ? 1.0 / len[j] : 0.0;
    std::fill(col.values().begin(), col.values().end(), 0.0);
    transpose_view(unit, sino.geometry, sino.angles_deg[a], col);
    for (std::size_t p = 0; p < npix; ++p)
      inv_col_[a * npix + p] = col.values()[p] > 1e-12 ? static_cast<float>(1.0 / col.values()[p]) : 0.0f;
  }
}

void SartSolver::sweep(Image& x, double relax) const {
  if (x.n() != n_) throw std::invalid_argument("sart: image size mismatch");
  const Sinogram& sino = *sino_;
  const int nd = sino.n_det();
  const std::size_t npix = static_cast<std::size_t>(n_) * n_;
  std::vector<double> px(nd), r(nd);
  Image upd(n_, pixel_size_);
  for (int a : order_) {
    const double th = sino.angles_deg[a];
    project_view(x, sino.geometry, th, px);
    const auto b = sino.row(a);
    const double* il = inv_len_.data() + static_cast<std::size_t>(a) * nd;
    bool any = false;
    for (int j = 0; j < nd; ++j) {
      r[j] = (b[j] - px[j]) * il[j];
      any = any || r[j] != 0.0;
    }
    if (!any) continue;
    std::fill(upd.values().begin(), upd.values().end(), 0.0);
    transpose_view(r, sino.geometry, th, upd);
    const float* ic = inv_col_.data() + a * npix;
    auto xv = x.data();
    const auto uv = upd.data();
    for (std::size_t p = 0; p < npix; ++p) xv[p] += relax * uv[p] * ic[p];
  }
}

TvResult pocs_tv(const Sinogram& sino, int n, const TvParams& params, double pixel_size) {
  params.validate();
  sino.validate();
  TvResult result{Image(n, pixel_size), {}, {}};
  Image& x = result.image;
  double best = std::numeric_limits<double>::infinity();

  const SartSolver sart(sino, n, pixel_size);
  for (int it = 0; it < params.n_iters; ++it) {
    const Image before = x;
    sart.sweep(x, params.sart_relax);
    if (params.enforce_nonnegativity)
      for (double& v : x.values()) v = std::max(v, 0.0);

    double dp = 0.0;
    for (std::size_t p = 0; p < x.size(); ++p) {
      const double d = x.values()[p] - before.values()[p];
      dp += d * d;
    }
    dp = std::sqrt(dp);

    for (int s = 0; s < params.n_tv_steps; ++s) {
      Image g = tv_gradient(x);
      const double gn = norm2(g.data());
      if (!(gn > 0.0)) break;
      const double step = params.tv_step_scale * dp / gn;
      for (std::size_t p = 0; p < x.size(); ++p) x.values()[p] -= step * g.values()[p];
    }

    const double res = data_residual(x, sino);
    result.residual_log.push_back(res);
    result.tv_log.push_back(total_variation(x));
    if (!std::isfinite(res)) throw std::runtime_error("pocs_tv: non-finite data residual");
    best = std::min(best, res);
    if (res > 10.0 * best)
      throw std::runtime_error("pocs_tv: diverged at iteration " + std::to_string(it) + " (residual " +
                               std::to_string(res) + " vs minimum " + std::to_string(best) + ")");
  }
  return result;
}

} // namespace lact::tomo
