#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace lact::testing {

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Elementwise relative error with a floor of 1e-3 of the largest reference
// magnitude, so entries that are zero up to rounding do not dominate.
inline double rel_error(double analytic, double numeric, double scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * scale, 1e-300});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic[i] with the central difference (f(x + h e_i) - f(x - h e_i)) / 2h
// for each i in idx (all indices when idx is empty). f reads x by reference.
// scale sets the error floor; by default the largest numeric entry checked.
template <typename F>
GradCheck check_gradient(std::span<double> x, std::span<const double> analytic, F&& f, double h = 1e-5,
                         std::vector<std::size_t> idx = {}, double scale = 0.0) {
  if (idx.empty())
    for (std::size_t i = 0; i < x.size(); ++i) idx.push_back(i);
  std::vector<double> numeric(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f();
    x[i] = orig - h;
    const double fm = f();
    x[i] = orig;
    numeric[k] = (fp - fm) / (2.0 * h);
  }
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  GradCheck r;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    r.max_rel = std::max(r.max_rel, rel_error(analytic[idx[k]], numeric[k], scale));
    ++r.checked;
  }
  return r;
}

} // namespace lact::testing
