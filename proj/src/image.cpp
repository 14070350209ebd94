#include "lact/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lact {

Image::Image(int n, double pixel_size)
    : Image(n, pixel_size, std::vector<double>(static_cast<std::size_t>(n < 0 ? 0 : n) * (n < 0 ? 0 : n), 0.0)) {}

Image::Image(int n, double pixel_size, std::vector<double> data)
    : n_(n), pixel_size_(pixel_size), data_(std::move(data)) {
  if (n < kMinSide)
    throw std::invalid_argument("image side " + std::to_string(n) + " is below the minimum of 8");
  if (!(pixel_size > 0.0))
    throw std::invalid_argument("pixel size must be positive");
  if (data_.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("image data does not hold n*n values");
}

double Image::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Image::max() const { return *std::max_element(data_.begin(), data_.end()); }

bool Image::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

static void require_same(const Image& a, const Image& b) {
  if (a.n() != b.n()) throw std::invalid_argument("image sizes differ");
}

Image& Image::operator+=(const Image& o) {
  require_same(*this, o);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& o) {
  require_same(*this, o);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(Image a, double s) { return a *= s; }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace lact
