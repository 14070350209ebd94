#pragma once

#include <span>
#include <vector>

#include "lact/image.hpp"

namespace lact::dwt {

struct ChannelMeta {
  int scale = 0;            // 0 = lowpass, then shells coarse to fine
  int direction = 0;        // index within the shell
  double center_deg = 0.0;  // frequency direction of the wedge center, [0, 180)
  bool directional = false; // false for the lowpass channel
};

// Frequency-domain partition of unity: a raised-cosine lowpass plus dyadic
// radial shells, shell s split into 2^s raised-cosine angular wedges. Windows
// are stored DC-centered and sum to one at every lattice point.
struct FilterBank {
  int n = 0;
  int levels = 0;
  std::vector<int> dirs_per_level; // coarse to fine, dirs_per_level[0] == 1 (lowpass)
  std::vector<ChannelMeta> meta;
  std::vector<std::vector<double>> windows; // DC-centered n x n

  int channels() const { return static_cast<int>(windows.size()); }
  // Window c in FFT (uncentered) layout.
  std::vector<double> fft_window(int c) const;
};

// Radial transition width as a fraction of the shell below each boundary and
// angular transition as a fraction of the wedge width.
inline constexpr double kRadialTransition = 1.0 / 3.0;
inline constexpr double kAngularTransition = 1.0 / 3.0;

FilterBank build_filter_bank(int n, int levels);

// Same-size subbands, channel-major: data[c * n * n + row * n + col].
struct CoefficientStack {
  int n = 0;
  std::vector<ChannelMeta> meta;
  std::vector<double> data;

  int channels() const { return static_cast<int>(meta.size()); }
  std::span<double> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * n * n, static_cast<std::size_t>(n) * n}; }
  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * n * n, static_cast<std::size_t>(n) * n};
  }
  double energy(int c) const;
};

CoefficientStack decompose(const Image& img, const FilterBank& bank);
Image recompose(const CoefficientStack& stack, const FilterBank& bank, double pixel_size = 1.0);

} // namespace lact::dwt
