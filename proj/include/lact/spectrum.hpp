#pragma once

#include <vector>

#include "lact/image.hpp"

namespace lact::spectrum {

// Real map on the DC-centered n x n frequency lattice: index (row, col) holds
// the frequency (kx, ky) = (col - n/2, row - n/2) in cycles per field of view.
struct FreqMap {
  int n = 0;
  std::vector<double> data;
  bool dc_centered = true;

  FreqMap() = default;
  explicit FreqMap(int side) : n(side), data(static_cast<std::size_t>(side) * side, 0.0) {}

  double& at(int row, int col) { return data[static_cast<std::size_t>(row) * n + col]; }
  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * n + col]; }
};

using FreqMask = FreqMap;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Source positions a(lambda) = radius * (cos lambda, sin lambda). An arc that
// spans 360 degrees or more is a full orbit.
struct ScanArc {
  double lambda_minus_deg = 0.0;
  double lambda_plus_deg = 120.0;
  double radius = 1000.0;

  bool full_orbit() const { return lambda_plus_deg - lambda_minus_deg >= 360.0; }
  void validate() const;
};

struct Sigma {
  int value = 0;
  bool undefined = false; // set for omega = 0
};

// sigma(r, omega) = 1/2 sgn(omega.e) [sgn(omega.alpha-) - sgn(omega.alpha+)] with
// alpha(lambda, r) = r - a(lambda), e = alpha-/|alpha-| and sgn(0) = +1.
// On a full orbit the partner source is the one on the line through a(lambda-)
// and r, so alpha+ = -alpha- and the bracket is 2 sgn(omega.alpha-).
Sigma katsevich_sigma(Vec2 r, Vec2 omega, const ScanArc& arc);

FreqMask sigma_map(Vec2 r, int n, const ScanArc& arc);

// 1 where the frequency direction (mod 180) is NOT sampled by rays with
// angles in [lo, hi); sampled directions are the ray angles plus 90 degrees.
FreqMask wedge_mask(int n, double lo_deg, double hi_deg);

// Frequency direction of lattice point (kx, ky) folded to [0, 180).
double direction_deg(int kx, int ky);

inline constexpr int kMaxKatsevichSide = 128;

// Direct sigma-weighted inverse DFT at every pixel (O(n^4)). The zero
// frequency lies on every measured slice and is always kept.
Image katsevich_reconstruct(const Image& img, const ScanArc& arc);

struct ArtifactSpectrum {
  FreqMap magnitude;     // |FFT(limited - full)|, DC-centered
  FreqMap log_magnitude; // log(1 + magnitude) for display
};

ArtifactSpectrum artifact_spectrum(const Image& limited, const Image& full);

// Centered magnitude spectrum of a single image.
FreqMap magnitude_spectrum(const Image& img);

// Sum of spec^2 inside mask over total sum of spec^2, DC excluded.
double wedge_energy_ratio(const FreqMap& spec, const FreqMask& mask);

// Fraction of non-DC lattice points where the mask is set.
double mask_area_fraction(const FreqMask& mask);

// Energy (spec^2) per direction bin over [0, 180), DC excluded, normalized to unit sum.
std::vector<double> angular_profile(const FreqMap& spec, int bins = 90);

// Pearson correlation of two profiles.
double profile_correlation(const std::vector<double>& a, const std::vector<double>& b);

} // namespace lact::spectrum
