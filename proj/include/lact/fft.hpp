#pragma once

#include <complex>
#include <span>
#include <vector>

namespace lact::fft {

using cplx = std::complex<double>;

// Unnormalized forward DFT over rows x cols, row-major, in place.
void forward_2d(std::vector<cplx>& data, int rows, int cols);
// Inverse DFT normalized by 1/(rows*cols), in place.
void inverse_2d(std::vector<cplx>& data, int rows, int cols);

// Batched 1-D transforms along each of `count` contiguous rows of length `len`.
void forward_rows(std::vector<cplx>& data, int count, int len);
void inverse_rows(std::vector<cplx>& data, int count, int len);

std::vector<cplx> forward_2d_real(std::span<const double> data, int n);

// Signed frequency index of FFT bin k for a length-n transform: [-n/2, n/2).
inline int signed_freq(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }
// Array index in a DC-centered layout for FFT bin k.
inline int centered_index(int k, int n) { return (k + n / 2) % n; }
// FFT bin for centered index c.
inline int uncentered_index(int c, int n) { return (c - n / 2 + n) % n; }

int next_pow2(int v);

} // namespace lact::fft
