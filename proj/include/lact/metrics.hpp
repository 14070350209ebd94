#pragma once

#include <string>

#include "lact/image.hpp"

namespace lact::metrics {

struct MetricsRow {
  std::string slice_id;
  std::string method;
  double psnr_db = 0.0; // +inf when the image equals the reference
  double nrmse = 0.0;
  double ssim = 0.0;

  bool psnr_infinite() const;
};

// 10 log10(max(ref)^2 / MSE). Returns +infinity when x == ref.
double psnr(const Image& x, const Image& ref);

// ||x - ref||_2 / ||ref||_2.
double nrmse(const Image& x, const Image& ref);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM over all fully contained Gaussian windows. The dynamic range is
// taken from the joint min/max of both images so the index is symmetric.
double ssim(const Image& x, const Image& ref, const SsimOptions& opt = {});

MetricsRow evaluate(const Image& x, const Image& ref, std::string slice_id = {}, std::string method = {});

} // namespace lact::metrics
