// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: lact_acceptance <path to lact executable> [work dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "lact/dwt.hpp"
#include "lact/metrics.hpp"
#include "lact/models.hpp"
#include "lact/network.hpp"
#include "lact/nn.hpp"
#include "lact/parallel.hpp"
#include "lact/rng.hpp"
#include "lact/spectrum.hpp"
#include "lact/tomo.hpp"

using namespace lact;
using lact::testing::check_gradient;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// 1. Perfect reconstruction of the filter bank.

void perfect_reconstruction() {
  const int n = 128;
  const auto t0 = std::chrono::steady_clock::now();
  const auto bank = dwt::build_filter_bank(n, 4);
  SplitMix64 rng(2024);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Image x(n);
    for (auto& v : x.values()) v = rng.normal();
    const auto y = dwt::recompose(dwt::decompose(x, bank), bank);
    double err = 0.0, mag = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      err = std::max(err, std::abs(y.values()[i] - x.values()[i]));
      mag = std::max(mag, std::abs(x.values()[i]));
    }
    worst = std::max(worst, err / mag);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(1, worst <= 1e-8 && secs <= 10.0,
         fmt("perfect reconstruction, 100 images 128x128: max rel error %.3e (<= 1e-8), %.2f s (<= 10 s)", worst,
             secs));
}

// 2. Finite-difference gradient checks.

using TensorD = nn::Tensor<double>;

TensorD random_tensor(nn::Shape s, std::uint64_t seed, double scale = 1.0) {
  TensorD t(s);
  SplitMix64 rng(seed);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double weighted_sum(const TensorD& y, const TensorD& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * r.data()[i];
  return s;
}

std::vector<std::size_t> subsample(std::size_t size, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx;
  if (size <= count) {
    for (std::size_t i = 0; i < size; ++i) idx.push_back(i);
    return idx;
  }
  SplitMix64 rng(seed);
  for (std::size_t k = 0; k < count; ++k) idx.push_back(rng.below(size));
  return idx;
}

void gradient_checks() {
  std::vector<std::pair<std::string, double>> results;
  auto note = [&](const std::string& name, double err) { results.emplace_back(name, err); };

  for (int k : {3, 1}) {
    auto x = random_tensor({2, 3, 6, 6}, 10 + k);
    auto w = random_tensor({4, 3, k, k}, 20 + k);
    auto b = random_tensor({4, 1, 1, 1}, 30 + k);
    const auto r = random_tensor({2, 4, 6, 6}, 40 + k);
    auto f = [&] { return weighted_sum(nn::conv2d(x, w, b), r); };
    const auto g = nn::conv2d_backward(x, w, r);
    double e = check_gradient(x.span(), g.dx.span(), f).max_rel;
    e = std::max(e, check_gradient(w.span(), g.dw.span(), f).max_rel);
    e = std::max(e, check_gradient(b.span(), g.db.span(), f).max_rel);
    note(k == 3 ? "conv3x3" : "conv1x1", e);
  }
  {
    auto x = random_tensor({2, 3, 4, 4}, 50);
    const auto r = random_tensor(x.shape(), 51);
    auto f = [&] { return weighted_sum(nn::relu(x), r); };
    note("relu", check_gradient(x.span(), nn::relu_backward(x, r).span(), f).max_rel);
  }
  {
    auto x = random_tensor({3, 2, 4, 4}, 60, 2.0);
    auto g = random_tensor({2, 1, 1, 1}, 61);
    auto b = random_tensor({2, 1, 1, 1}, 62);
    const auto r = random_tensor(x.shape(), 63);
    auto f = [&] {
      TensorD rm(2, 1, 1, 1), rv(2, 1, 1, 1, 1.0);
      return weighted_sum(nn::batchnorm(x, g, b, rm, rv, nn::Mode::train), r);
    };
    TensorD rm(2, 1, 1, 1), rv(2, 1, 1, 1, 1.0);
    nn::BatchNormCache<double> cache;
    nn::batchnorm(x, g, b, rm, rv, nn::Mode::train, &cache);
    const auto grads = nn::batchnorm_backward(cache, g, r);
    double e = check_gradient(x.span(), grads.dx.span(), f).max_rel;
    e = std::max(e, check_gradient(g.span(), grads.dgamma.span(), f).max_rel);
    e = std::max(e, check_gradient(b.span(), grads.dbeta.span(), f).max_rel);
    note("batchnorm", e);
  }
  {
    auto x = random_tensor({2, 2, 6, 6}, 70);
    const auto r = random_tensor({2, 2, 3, 3}, 71);
    auto f = [&] { return weighted_sum(nn::maxpool2(x), r); };
    std::vector<std::uint32_t> arg;
    nn::maxpool2(x, &arg);
    note("maxpool2", check_gradient(x.span(), nn::maxpool2_backward(r, arg, x.shape()).span(), f).max_rel);
  }
  {
    auto x = random_tensor({2, 2, 3, 3}, 80);
    const auto r = random_tensor({2, 2, 6, 6}, 81);
    auto f = [&] { return weighted_sum(nn::avgunpool2(x), r); };
    note("avgunpool2", check_gradient(x.span(), nn::avgunpool2_backward(r).span(), f).max_rel);
  }
  {
    auto a = random_tensor({2, 2, 4, 4}, 90);
    auto b = random_tensor({2, 3, 4, 4}, 91);
    const auto r = random_tensor({2, 5, 4, 4}, 92);
    auto f = [&] { return weighted_sum(nn::concat(a, b), r); };
    const auto [da, db] = nn::concat_backward(r, 2);
    note("concat", std::max(check_gradient(a.span(), da.span(), f).max_rel,
                            check_gradient(b.span(), db.span(), f).max_rel));
  }
  {
    auto p = random_tensor({2, 3, 4, 4}, 100);
    const auto t = random_tensor(p.shape(), 101);
    auto f = [&] { return nn::mse_loss(p, t); };
    note("mse", check_gradient(p.span(), nn::mse_loss_backward(p, t).span(), f).max_rel);
  }
  {
    // A depth-3 wavelet U-Net with every parameter randomized, including the
    // zero-initialized head.
    const auto arch = models::make_arch(models::ArchKind::wavelet_unet, 3, 4);
    nn::Network<double> net(models::build_arch(arch), 5);
    SplitMix64 rng(6);
    for (auto& [name, t] : net.params()) {
      const bool gain = name.ends_with(".gamma");
      for (auto& v : t.values())
        v = gain ? 1.0 + 0.2 * rng.normal() : (v == 0.0 ? 0.3 * rng.normal() : v);
    }
    auto x = random_tensor({2, arch.channels, 16, 16}, 200);
    const auto r = random_tensor({2, arch.channels, 16, 16}, 201);
    auto f = [&] { return weighted_sum(net.forward(x, nn::Mode::train), r); };
    net.zero_grad();
    net.forward(x, nn::Mode::train);
    const auto dx = net.backward(r);
    double scale = 0.0;
    for (const auto& [name, g] : net.grads())
      for (double v : g.values()) scale = std::max(scale, std::abs(v));
    double e = check_gradient(x.span(), dx.span(), f, 1e-5, subsample(x.size(), 64, 300)).max_rel;
    std::uint64_t seed = 400;
    for (auto& [name, p] : net.params()) {
      const auto g = net.grads().at(name);
      e = std::max(e, check_gradient(p.span(), g.span(), f, 1e-5, subsample(p.size(), 16, seed++), scale).max_rel);
    }
    note("depth-3 U-Net", e);
  }

  double worst = 0.0;
  std::string detail;
  for (const auto& [name, e] : results) {
    worst = std::max(worst, e);
    detail += fmt(" %s=%.1e", name.c_str(), e);
  }
  report(2, worst <= 1e-5, fmt("gradients vs finite differences, max rel error %.3e (<= 1e-5):", worst) + detail);
}

// 3. Katsevich consistency.

void katsevich_consistency() {
  const int n = 64;
  const auto ph = tomo::shepp_logan(n);
  const auto rec = spectrum::katsevich_reconstruct(ph, {0.0, 360.0, 1000.0});
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ph.size(); ++i) {
    num += (rec.values()[i] - ph.values()[i]) * (rec.values()[i] - ph.values()[i]);
    den += ph.values()[i] * ph.values()[i];
  }
  const double rel = std::sqrt(num / den);

  // Mismatched frequencies must lie on the wedge boundary ring: a 3x3
  // neighbourhood that contains both wedge and non-wedge pixels.
  int mismatched = 0, off_ring = 0;
  for (double span : {120.0, 150.0}) {
    const auto sig = spectrum::sigma_map({0, 0}, n, {0.0, span, 1000.0});
    const auto wedge = spectrum::wedge_mask(n, 0.0, span);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        if (r == n / 2 && c == n / 2) continue;
        if ((sig.at(r, c) == 0.0) == (wedge.at(r, c) == 1.0)) continue;
        ++mismatched;
        bool in = false, out = false;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
            (wedge.at(rr, cc) == 1.0 ? in : out) = true;
          }
        if (!(in && out)) ++off_ring;
      }
  }
  report(3, rel <= 1e-6 && off_ring == 0,
         fmt("full-arc Katsevich relative error %.3e (<= 1e-6); isocenter zero set vs wedge at 120/150 deg: "
             "%d mismatches, %d off the boundary ring (0)",
             rel, mismatched, off_ring));
}

// 4. Wedge concentration of limited-arc artifacts.

void wedge_concentration() {
  models::DatasetOptions opt;
  opt.arc_deg = 120.0;
  const auto wedge = spectrum::wedge_mask(opt.n, 0.0, opt.arc_deg);
  const double area = spectrum::mask_area_fraction(wedge);
  double min_ratio = std::numeric_limits<double>::infinity();
  double raw_min_ratio = min_ratio;
  std::vector<std::vector<double>> profiles, raw_profiles;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pair = models::simulate_pair(opt, 1000 + seed).images;
    const auto art = spectrum::artifact_spectrum(pair.limited, pair.full);
    min_ratio = std::min(min_ratio, spectrum::wedge_energy_ratio(art.log_magnitude, wedge) / area);
    raw_min_ratio = std::min(raw_min_ratio, spectrum::wedge_energy_ratio(art.magnitude, wedge) / area);
    profiles.push_back(spectrum::angular_profile(art.log_magnitude));
    raw_profiles.push_back(spectrum::angular_profile(art.magnitude));
  }
  double min_corr = 1.0, raw_min_corr = 1.0;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (std::size_t j = i + 1; j < profiles.size(); ++j) {
      min_corr = std::min(min_corr, spectrum::profile_correlation(profiles[i], profiles[j]));
      raw_min_corr = std::min(raw_min_corr, spectrum::profile_correlation(raw_profiles[i], raw_profiles[j]));
    }
  report(4, min_ratio >= 1.5 && min_corr >= 0.9,
         fmt("10 phantoms at 120 deg, log spectra: min wedge energy / area %.3f (>= 1.5, area %.3f), "
             "min profile correlation %.3f (>= 0.9); raw |FFT| for reference: %.3f, %.3f",
             min_ratio, area, min_corr, raw_min_ratio, raw_min_corr));
}

// 5. Method ordering after desk-scale training.

struct ArcOutcome {
  std::vector<metrics::MetricsRow> mean;  // fbp, image_plain, image_unet, wavelet_unet
  double cpu = 0.0;
};

ArcOutcome train_and_evaluate(double arc, const fs::path& dir) {
  ArcOutcome out;
  const double t0 = cpu_seconds();
  models::DatasetOptions opt;
  opt.n_images = 220;
  opt.n_val = 20;
  opt.arc_deg = arc;
  fs::remove_all(dir);
  const auto manifest = models::make_dataset(opt, dir);

  std::vector<models::MethodSpec> methods{{"fbp", [](const tomo::Sinogram&, const Image& lim) { return lim; }}};
  std::vector<std::shared_ptr<models::Model>> nets;
  for (auto kind : {models::ArchKind::image_plain, models::ArchKind::image_unet, models::ArchKind::wavelet_unet}) {
    const models::TrainConfig cfg;
    const double t = cpu_seconds();
    auto res = models::train(models::make_arch(kind), cfg, manifest);
    std::printf("  %.0f deg %s: best val PSNR %.3f dB after %zu epochs, %.0f s\n", arc, models::to_string(kind),
                res.best.meta.at("val_psnr").get<double>(), res.log.size(), cpu_seconds() - t);
    std::fflush(stdout);
    auto model = std::make_shared<models::Model>(models::from_checkpoint(res.best));
    nets.push_back(model);
    methods.push_back({models::to_string(kind),
                       [model](const tomo::Sinogram&, const Image& lim) { return models::infer(*model, lim); }});
  }
  out.mean = models::evaluate(manifest, methods).mean();
  out.cpu = cpu_seconds() - t0;
  return out;
}

void method_ordering(const fs::path& work) {
  for (double arc : {120.0, 150.0}) {
    ArcOutcome r;
    try {
      r = train_and_evaluate(arc, work / fmt("dataset_%03.0f", arc));
    } catch (const std::exception& e) {
      report(5, false, fmt("%.0f deg: %s", arc, e.what()));
      continue;
    }
    const auto& m = r.mean;
    const bool psnr = m[0].psnr_db < m[1].psnr_db && m[1].psnr_db < m[2].psnr_db && m[2].psnr_db <= m[3].psnr_db;
    const bool ssim = m[0].ssim < m[1].ssim && m[1].ssim < m[2].ssim && m[2].ssim <= m[3].ssim;
    const bool nrmse = m[0].nrmse > m[1].nrmse && m[1].nrmse > m[2].nrmse && m[2].nrmse >= m[3].nrmse;
    const bool margin = m[3].psnr_db >= m[0].psnr_db + 3.0;
    const bool time = r.cpu <= 3600.0;
    std::string detail = fmt("%.0f deg ordering FBP < image_plain < image_unet <= wavelet_unet;", arc);
    for (int k = 0; k < 4; ++k)
      detail += fmt(" %s %.3f dB/%.4f/%.4f", m[k].method.c_str(), m[k].psnr_db, m[k].ssim, m[k].nrmse);
    detail += fmt(" (psnr %s, ssim %s, nrmse %s); wavelet - FBP %.2f dB (>= 3); %.0f CPU s (<= 3600)",
                  psnr ? "ok" : "no", ssim ? "ok" : "no", nrmse ? "ok" : "no", m[3].psnr_db - m[0].psnr_db, r.cpu);
    report(5, psnr && ssim && nrmse && margin && time, detail);
  }
}

// 6. POCS-TV against limited-arc FBP.

void tv_baseline(const fs::path& work) {
  const auto path = work / "dataset_120" / "manifest.json";
  if (!fs::exists(path)) {
    models::DatasetOptions opt;
    models::make_dataset(opt, path.parent_path());
  }
  const auto manifest = models::load_manifest(path);
  int better = 0, total = 0;
  double psnr_tv = 0.0, psnr_fbp = 0.0;
  for (const auto* e : manifest.split("val")) {
    const auto pair = models::load_pair(manifest, *e);
    const auto sino = models::load_limited_sinogram(manifest, *e);
    const auto tv = tomo::pocs_tv(sino, pair.limited.n()).image;
    const bool ok = tomo::total_variation(tv) < tomo::total_variation(pair.limited) &&
                    tomo::data_residual(tv, sino) < tomo::data_residual(pair.limited, sino);
    better += ok;
    ++total;
    psnr_tv += metrics::psnr(tv, pair.full);
    psnr_fbp += metrics::psnr(pair.limited, pair.full);
  }
  report(6, total > 0 && better == total,
         fmt("POCS-TV lower TV and lower data residual than limited FBP on %d/%d validation slices; "
             "mean PSNR TV %.3f dB, FBP %.3f dB (not required)",
             better, total, psnr_tv / total, psnr_fbp / total));
}

// 7. Metric unit values.

void metric_units() {
  const int n = 32;
  Image one(n), half(n), ref(n), twice(n);
  SplitMix64 rng(3);
  for (std::size_t i = 0; i < one.size(); ++i) {
    one.values()[i] = 1.0;
    half.values()[i] = 0.5;
    ref.values()[i] = rng.uniform(0.0, 1.0);
    twice.values()[i] = 2.0 * ref.values()[i];
  }
  const double p = metrics::psnr(half, one);
  const double e = metrics::nrmse(twice, ref);
  const double s = metrics::ssim(ref, ref);
  report(7, std::abs(p - 6.0206) <= 1e-3 && e == 1.0 && std::abs(s - 1.0) <= 1e-12,
         fmt("psnr(0.5, 1) = %.6f dB (6.0206 +- 1e-3), nrmse(2 ref, ref) = %.17g (1), ssim(x, x) = %.17g (1 +- 1e-12)",
             p, e, s));
}

// 8. Byte-identical CLI runs.

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void cli_determinism(const std::string& exe, const fs::path& work) {
  std::vector<std::string> outputs;
  bool ran = true;
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = work / fmt("determinism_%d", rep);
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "c.json") << R"({"dataset.n_images": 12, "dataset.n_val": 2, "grid": 64,
      "train.epochs": 3, "train.patch": 32, "train.batch_size": 4, "arch.base_channels": 8})";
    const std::string q = "\"" + exe + "\"";
    const std::string d = "\"" + dir.string() + "\"";
    const std::string cfg = " --config " + d + "/c.json --seed 11 --threads 1";
    for (const std::string& cmd :
         {q + " dataset" + cfg + " --out " + d + "/ds",
          q + " train" + cfg + " --manifest " + d + "/ds/manifest.json --out " + d + "/w.lack",
          q + " infer --threads 1 --checkpoint " + d + "/w.lack --in " + d + "/ds/limited/0011.lact --out " + d +
              "/r.lact"})
      if (std::system((cmd + " > " + d + "/log.txt 2>&1").c_str()) != 0) ran = false;
    std::string all;
    for (const char* f : {"ds/manifest.json", "ds/full/0000.lact", "ds/limited/0011.lact", "w.lack", "w.lack.csv",
                          "r.lact", "r.lact.json"})
      all += slurp(dir / f);
    outputs.push_back(all);
  }
  const bool same = ran && !outputs[0].empty() && outputs[0] == outputs[1];
  report(8, same,
         fmt("dataset + train + infer twice with --threads 1: %s (%zu bytes compared)",
             !ran ? "a command failed" : (same ? "byte-identical" : "outputs differ"), outputs[0].size()));
}

} // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <lact executable> [work dir]\n", argv[0]);
    return 2;
  }
  const std::string exe = fs::absolute(argv[1]).string();
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "lact_acceptance";
  fs::create_directories(work);
  set_threads(1);

  perfect_reconstruction();
  gradient_checks();
  katsevich_consistency();
  wedge_concentration();
  metric_units();
  cli_determinism(exe, work);
  method_ordering(work);
  tv_baseline(work);

  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
