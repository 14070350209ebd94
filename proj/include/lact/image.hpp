#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lact {

// Square grayscale grid, row-major with rows running y-down. Physical
// coordinates of pixel (row, col) are ((col - c) * pixel_size, (row - c) * pixel_size)
// with c = (n - 1) / 2, so the isocenter sits at the grid center.
class Image {
public:
  static constexpr int kMinSide = 8;

  Image() = default;
  explicit Image(int n, double pixel_size = 1.0);
  Image(int n, double pixel_size, std::vector<double> data);

  int n() const { return n_; }
  double pixel_size() const { return pixel_size_; }
  std::size_t size() const { return data_.size(); }

  double& at(int row, int col) { return data_[static_cast<std::size_t>(row) * n_ + col]; }
  double at(int row, int col) const { return data_[static_cast<std::size_t>(row) * n_ + col]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double center() const { return 0.5 * (n_ - 1); }
  double x_of(int col) const { return (col - center()) * pixel_size_; }
  double y_of(int row) const { return (row - center()) * pixel_size_; }

  double min() const;
  double max() const;
  bool all_finite() const;

  Image& operator+=(const Image& o);
  Image& operator-=(const Image& o);
  Image& operator*=(double s);

private:
  int n_ = 0;
  double pixel_size_ = 1.0;
  std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(Image a, double s);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

} // namespace lact
