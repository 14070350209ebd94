#include "lact/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace lact::fft {
namespace {

// FFTW's planner is not reentrant; plans are created once per shape and
// executed on per-call aligned buffers through the new-array interface.
struct PlanCache {
  std::mutex mu;
  std::map<std::tuple<int, int, int, int>, fftw_plan> plans;

  fftw_plan get(int kind, int a, int b, int sign) {
    std::lock_guard lock(mu);
    auto key = std::make_tuple(kind, a, b, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(a) * b);
    fftw_plan p = nullptr;
    if (kind == 2) {
      p = fftw_plan_dft_2d(a, b, buf, buf, sign, FFTW_ESTIMATE);
    } else {
      int len = b;
      p = fftw_plan_many_dft(1, &len, a, buf, nullptr, 1, b, buf, nullptr, 1, b, sign, FFTW_ESTIMATE);
    }
    fftw_free(buf);
    if (!p) throw std::runtime_error("fftw planning failed");
    plans.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [k, p] : plans) fftw_destroy_plan(p);
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

void run(std::vector<cplx>& data, int kind, int a, int b, int sign) {
  const std::size_t total = static_cast<std::size_t>(a) * b;
  if (data.size() != total) throw std::invalid_argument("fft: buffer size mismatch");
  fftw_plan p = cache().get(kind, a, b, sign);
  fftw_complex* buf = fftw_alloc_complex(total);
  std::memcpy(buf, data.data(), total * sizeof(fftw_complex));
  fftw_execute_dft(p, buf, buf);
  std::memcpy(static_cast<void*>(data.data()), buf, total * sizeof(fftw_complex));
  fftw_free(buf);
}

void scale(std::vector<cplx>& data, double s) {
  for (auto& v : data) v *= s;
}

} // namespace

void forward_2d(std::vector<cplx>& data, int rows, int cols) { run(data, 2, rows, cols, FFTW_FORWARD); }

void inverse_2d(std::vector<cplx>& data, int rows, int cols) {
  run(data, 2, rows, cols, FFTW_BACKWARD);
  scale(data, 1.0 / (static_cast<double>(rows) * cols));
}

void forward_rows(std::vector<cplx>& data, int count, int len) { run(data, 1, count, len, FFTW_FORWARD); }

void inverse_rows(std::vector<cplx>& data, int count, int len) {
  run(data, 1, count, len, FFTW_BACKWARD);
  scale(data, 1.0 / len);
}

std::vector<cplx> forward_2d_real(std::span<const double> data, int n) {
  std::vector<cplx> out(data.begin(), data.end());
  forward_2d(out, n, n);
  return out;
}

int next_pow2(int v) {
  int p = 1;
  while (p < v) p <<= 1;
  return p;
}

} // namespace lact::fft
