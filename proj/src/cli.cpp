#include "lact/cli.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "lact/dwt.hpp"
#include "lact/io.hpp"
#include "lact/metrics.hpp"
#include "lact/models.hpp"
#include "lact/parallel.hpp"
#include "lact/spectrum.hpp"
#include "lact/tomo.hpp"

namespace lact::cli {

namespace {

namespace fs = std::filesystem;
using io::Json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  std::string phantom_kind = "random";
  int ellipses = 8;
  int grid = 128;
  double pixel_size = 1.0;
  std::uint64_t seed = 1;
  int views = 360;
  double arc = 180.0;
  std::string window = "ramlak";
  int threads = 1;
  tomo::TvParams tv;
  models::DatasetOptions dataset;
  models::TrainConfig train;
  models::ArchKind arch = models::ArchKind::wavelet_unet;
  int depth = 3;
  int base_channels = 16;
};

template <typename T>
T value_as(const std::string& key, const Json& v) {
  try {
    return v.get<T>();
  } catch (const Json::exception&) {
    throw UsageError("config key '" + key + "' has the wrong type");
  }
}

using Setter = std::function<void(Settings&, const std::string&, const Json&)>;

template <typename T, typename F>
Setter setter(F f) {
  return [f](Settings& s, const std::string& key, const Json& v) { f(s, value_as<T>(key, v)); };
}

const std::map<std::string, Setter>& config_keys() {
  static const std::map<std::string, Setter> keys = {
      {"seed", setter<std::uint64_t>([](Settings& s, std::uint64_t v) { s.seed = s.dataset.seed = s.train.seed = v; })},
      {"grid", setter<int>([](Settings& s, int v) { s.grid = s.dataset.n = v; })},
      {"arc", setter<double>([](Settings& s, double v) { s.arc = s.dataset.arc_deg = v; })},
      {"views", setter<int>([](Settings& s, int v) { s.views = s.dataset.n_angles = v; })},
      {"pixel_size", setter<double>([](Settings& s, double v) { s.pixel_size = s.dataset.pixel_size = v; })},
      {"threads", setter<int>([](Settings& s, int v) { s.threads = v; })},
      {"phantom.kind", setter<std::string>([](Settings& s, std::string v) { s.phantom_kind = std::move(v); })},
      {"phantom.ellipses", setter<int>([](Settings& s, int v) { s.ellipses = v; })},
      {"fbp.window", setter<std::string>([](Settings& s, std::string v) { s.window = std::move(v); })},
      {"tv.n_iters", setter<int>([](Settings& s, int v) { s.tv.n_iters = v; })},
      {"tv.sart_relax", setter<double>([](Settings& s, double v) { s.tv.sart_relax = v; })},
      {"tv.n_tv_steps", setter<int>([](Settings& s, int v) { s.tv.n_tv_steps = v; })},
      {"tv.tv_step_scale", setter<double>([](Settings& s, double v) { s.tv.tv_step_scale = v; })},
      {"tv.enforce_nonnegativity", setter<bool>([](Settings& s, bool v) { s.tv.enforce_nonnegativity = v; })},
      {"dataset.n_images", setter<int>([](Settings& s, int v) { s.dataset.n_images = v; })},
      {"dataset.n_val", setter<int>([](Settings& s, int v) { s.dataset.n_val = v; })},
      {"dataset.n", setter<int>([](Settings& s, int v) { s.dataset.n = v; })},
      {"dataset.pixel_size", setter<double>([](Settings& s, double v) { s.dataset.pixel_size = v; })},
      {"dataset.arc_deg", setter<double>([](Settings& s, double v) { s.dataset.arc_deg = v; })},
      {"dataset.n_angles", setter<int>([](Settings& s, int v) { s.dataset.n_angles = v; })},
      {"dataset.ellipses", setter<int>([](Settings& s, int v) { s.dataset.ellipses = v; })},
      {"dataset.seed", setter<std::uint64_t>([](Settings& s, std::uint64_t v) { s.dataset.seed = v; })},
      {"train.epochs", setter<int>([](Settings& s, int v) { s.train.epochs = v; })},
      {"train.batch_size", setter<int>([](Settings& s, int v) { s.train.batch_size = v; })},
      {"train.patch", setter<int>([](Settings& s, int v) { s.train.patch = v; })},
      {"train.patches_per_image", setter<int>([](Settings& s, int v) { s.train.patches_per_image = v; })},
      {"train.lr_start", setter<double>([](Settings& s, double v) { s.train.lr_start = v; })},
      {"train.lr_end", setter<double>([](Settings& s, double v) { s.train.lr_end = v; })},
      {"train.weight_decay", setter<double>([](Settings& s, double v) { s.train.weight_decay = v; })},
      {"train.momentum", setter<double>([](Settings& s, double v) { s.train.momentum = v; })},
      {"train.seed", setter<std::uint64_t>([](Settings& s, std::uint64_t v) { s.train.seed = v; })},
      {"train.loss_scale", setter<double>([](Settings& s, double v) { s.train.loss_scale = v; })},
      {"arch.kind", setter<std::string>([](Settings& s, const std::string& v) {
         try {
           s.arch = models::parse_arch(v);
         } catch (const std::invalid_argument& e) {
           throw UsageError(e.what());
         }
       })},
      {"arch.depth", setter<int>([](Settings& s, int v) { s.depth = v; })},
      {"arch.base_channels", setter<int>([](Settings& s, int v) { s.base_channels = v; })},
  };
  return keys;
}

void flatten(const Json& j, const std::string& prefix, std::vector<std::pair<std::string, Json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      flatten(*it, key, out);
    else
      out.emplace_back(key, *it);
  }
}

void apply(Settings& s, const std::string& key, const Json& v) {
  const auto& keys = config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) throw UsageError("unknown config key '" + key + "'");
  it->second(s, key, v);
}

void load_config(Settings& s, const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  Json j;
  try {
    j = io::read_json(path);
  } catch (const std::exception& e) {
    throw UsageError(std::string("malformed config: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("malformed config: top level must be a JSON object");
  std::vector<std::pair<std::string, Json>> flat;
  flatten(j, "", flat);
  for (const auto& [k, v] : flat) apply(s, k, v);
}

tomo::Window parse_window(const std::string& w) {
  if (w == "ramlak") return tomo::Window::ramlak;
  if (w == "hann") return tomo::Window::hann;
  throw UsageError("unknown filter window '" + w + "' (expected ramlak or hann)");
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw std::runtime_error(std::string(what) + " not found: " + p.string());
}

void maybe_png(const std::string& png, const Image& img) {
  if (!png.empty()) io::export_png(png, img);
}

// Flags given on the command line, applied after the config file.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> raw;  // key, JSON text or string
  std::optional<std::uint64_t> seed;
  std::optional<int> grid, views, epochs, threads;
  std::optional<double> arc;
  std::optional<std::string> arch;

  void apply_to(Settings& s) const {
    if (seed) apply(s, "seed", *seed);
    if (grid) apply(s, "grid", *grid);
    if (views) apply(s, "views", *views);
    if (arc) apply(s, "arc", *arc);
    if (epochs) apply(s, "train.epochs", *epochs);
    if (threads) apply(s, "threads", *threads);
    if (arch) apply(s, "arch.kind", *arch);
  }
};

struct Command {
  CLI::App* app = nullptr;
  std::function<void()> run;
};

models::Model load_model(const fs::path& path) {
  require_file(path, "checkpoint");
  return models::from_checkpoint(io::load_checkpoint(path));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Limited-angle CT artifact removal toolkit", "lact"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Settings s;
  Overrides ov;
  std::string config_path;
  std::map<std::string, Command> commands;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config with flat dotted keys")->check(CLI::ExistingFile);
    sub->add_option("--threads", ov.threads, "worker threads; 1 is fully deterministic");
    sub->add_option("--seed", ov.seed, "random seed");
  };

  std::string in_path, out_path, png_path, manifest_path, checkpoint_path, log_path, methods = "fbp,tv,proposed";
  std::string full_path, limited_path, window;
  std::vector<std::string> checkpoint_specs;
  std::optional<int> ellipses, iters, images, val, depth, base;
  std::optional<std::string> kind;

  {
    auto* sub = app.add_subcommand("phantom", "Render a Shepp-Logan or random-ellipse phantom");
    add_common(sub);
    sub->add_option("--kind", kind, "shepp or random")->check(CLI::IsMember({"shepp", "random"}));
    sub->add_option("--grid", ov.grid, "image side in pixels");
    sub->add_option("--ellipses", ellipses, "ellipse count for random phantoms");
    sub->add_option("--out", out_path, "output image (.lact)")->required();
    sub->add_option("--png", png_path, "also export a PNG preview");
    commands["phantom"] = {sub, [&] {
                             if (kind) s.phantom_kind = *kind;
                             if (ellipses) s.ellipses = *ellipses;
                             const Image img = s.phantom_kind == "shepp"
                                                   ? tomo::shepp_logan(s.grid, s.pixel_size)
                                                   : tomo::random_phantom(s.grid, s.seed, s.ellipses, s.pixel_size);
                             io::save_image(out_path, img);
                             maybe_png(png_path, img);
                             out << "phantom " << s.phantom_kind << " " << s.grid << "x" << s.grid << " -> " << out_path << "\n";
                           }};
  }
  {
    auto* sub = app.add_subcommand("project", "Parallel-beam sinogram of an image, restricted to [0, arc)");
    add_common(sub);
    sub->add_option("--in", in_path, "input image (.lact)")->required();
    sub->add_option("--arc", ov.arc, "kept arc in degrees (180 = full)");
    sub->add_option("--views", ov.views, "views over the full 180 degrees");
    sub->add_option("--out", out_path, "output sinogram (.lact)")->required();
    commands["project"] = {sub, [&] {
                             require_file(in_path, "image");
                             const auto img = io::load_image(in_path);
                             auto sino = tomo::forward_project(img, tomo::parallel_geometry(img.n(), img.pixel_size(), s.views));
                             if (s.arc < 180.0) sino = tomo::restrict_angles(sino, 0.0, s.arc);
                             io::save_sinogram(out_path, sino);
                             out << "sinogram " << sino.n_angles() << " views x " << sino.n_det() << " bins -> " << out_path << "\n";
                           }};
  }
  {
    auto* sub = app.add_subcommand("fbp", "Filtered backprojection of a sinogram");
    add_common(sub);
    sub->add_option("--in", in_path, "input sinogram (.lact)")->required();
    sub->add_option("--grid", ov.grid, "output image side");
    sub->add_option("--window", window, "ramlak or hann");
    sub->add_option("--out", out_path, "output image (.lact)")->required();
    sub->add_option("--png", png_path, "also export a PNG preview");
    commands["fbp"] = {sub, [&] {
                         if (!window.empty()) s.window = window;
                         const auto w = parse_window(s.window);
                         require_file(in_path, "sinogram");
                         const auto img = tomo::fbp(io::load_sinogram(in_path), s.grid, w, s.pixel_size);
                         io::save_image(out_path, img);
                         maybe_png(png_path, img);
                         out << "fbp " << s.grid << "x" << s.grid << " -> " << out_path << "\n";
                       }};
  }
  {
    auto* sub = app.add_subcommand("tv", "POCS-TV (SART + TV descent) reconstruction");
    add_common(sub);
    sub->add_option("--in", in_path, "input sinogram (.lact)")->required();
    sub->add_option("--grid", ov.grid, "output image side");
    sub->add_option("--iters", iters, "outer iterations");
    sub->add_option("--out", out_path, "output image (.lact)")->required();
    sub->add_option("--png", png_path, "also export a PNG preview");
    commands["tv"] = {sub, [&] {
                        if (iters) s.tv.n_iters = *iters;
                        require_file(in_path, "sinogram");
                        const auto r = tomo::pocs_tv(io::load_sinogram(in_path), s.grid, s.tv, s.pixel_size);
                        io::save_image(out_path, r.image);
                        maybe_png(png_path, r.image);
                        out << "tv " << s.tv.n_iters << " iterations, residual " << r.residual_log.back() << " -> " << out_path
                            << "\n";
                      }};
  }
  {
    auto* sub = app.add_subcommand("dataset", "Simulate full/limited FBP pairs and write a manifest");
    add_common(sub);
    sub->add_option("--out", out_path, "output directory")->required();
    sub->add_option("--arc", ov.arc, "limited arc in degrees");
    sub->add_option("--grid", ov.grid, "image side");
    sub->add_option("--views", ov.views, "views over the full 180 degrees");
    sub->add_option("--images", images, "total phantom count");
    sub->add_option("--val", val, "validation phantom count");
    commands["dataset"] = {sub, [&] {
                             if (images) s.dataset.n_images = *images;
                             if (val) s.dataset.n_val = *val;
                             const auto m = models::make_dataset(s.dataset, out_path);
                             out << "dataset " << m.split("train").size() << " train / " << m.split("val").size() << " val at "
                                 << s.dataset.arc_deg << " deg -> " << (fs::path(out_path) / "manifest.json").string() << "\n";
                           }};
  }
  {
    auto* sub = app.add_subcommand("train", "Train a residual network on a dataset manifest");
    add_common(sub);
    sub->add_option("--manifest", manifest_path, "dataset manifest.json")->required();
    sub->add_option("--arch", ov.arch, "wavelet_unet (proposed), image_unet or image_plain");
    sub->add_option("--epochs", ov.epochs, "training epochs");
    sub->add_option("--depth", depth, "pooling stages (U-Net) or stage count (plain)");
    sub->add_option("--base", base, "base channel width");
    sub->add_option("--out", out_path, "best checkpoint (.lack)")->required();
    sub->add_option("--log", log_path, "per-epoch CSV log (default <out>.csv)");
    commands["train"] = {sub, [&] {
                           if (depth) s.depth = *depth;
                           if (base) s.base_channels = *base;
                           require_file(manifest_path, "manifest");
                           const auto m = models::load_manifest(manifest_path);
                           const auto arch = models::make_arch(s.arch, s.depth, s.base_channels);
                           const auto r = models::train(arch, s.train, m, [&](const models::EpochLog& e) {
                             out << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " val_psnr " << e.val_psnr
                                 << "\n";
                           });
                           io::save_checkpoint(out_path, r.best);
                           io::write_text(log_path.empty() ? out_path + ".csv" : log_path, models::log_to_csv(r.log));
                           out << "best epoch " << r.best.meta.at("epoch").get<int>() << " -> " << out_path << "\n";
                         }};
  }
  {
    auto* sub = app.add_subcommand("infer", "Remove limited-angle artifacts with a trained checkpoint");
    add_common(sub);
    sub->add_option("--checkpoint", checkpoint_path, "trained checkpoint (.lack)")->required();
    sub->add_option("--in", in_path, "limited-angle FBP image (.lact)")->required();
    sub->add_option("--out", out_path, "restored image (.lact)")->required();
    sub->add_option("--png", png_path, "also export a PNG preview");
    commands["infer"] = {sub, [&] {
                           auto model = load_model(checkpoint_path);
                           require_file(in_path, "image");
                           const auto img = models::infer(model, io::load_image(in_path));
                           io::save_image(out_path, img);
                           maybe_png(png_path, img);
                           out << "infer " << models::to_string(model.arch.kind) << " -> " << out_path << "\n";
                         }};
  }
  {
    auto* sub = app.add_subcommand("eval", "Metrics table (PSNR, NRMSE, SSIM) over the validation split");
    add_common(sub);
    sub->add_option("--manifest", manifest_path, "dataset manifest.json")->required();
    sub->add_option("--methods", methods, "comma-separated: fbp, tv, proposed, wavelet_unet, image_unet, image_plain");
    sub->add_option("--checkpoint", checkpoint_specs, "method=path for each network method")->take_all();
    sub->add_option("--out", out_path, "output CSV")->required();
    commands["eval"] = {sub, [&] {
                          std::map<std::string, std::string> ckpts;
                          for (const auto& spec : checkpoint_specs) {
                            const auto eq = spec.find('=');
                            if (eq == std::string::npos || eq == 0) throw UsageError("--checkpoint expects method=path, got '" + spec + "'");
                            ckpts[spec.substr(0, eq)] = spec.substr(eq + 1);
                          }
                          const auto names = split_list(methods);
                          if (names.empty()) throw UsageError("--methods is empty");
                          std::vector<models::MethodSpec> specs;
                          std::map<std::string, std::shared_ptr<models::Model>> nets;
                          for (const auto& name : names) {
                            if (name == "fbp") {
                              specs.push_back({name, [](const tomo::Sinogram&, const Image& lim) { return lim; }});
                            } else if (name == "tv") {
                              const auto tv = s.tv;
                              const double px = s.pixel_size;
                              specs.push_back({name, [tv, px](const tomo::Sinogram& sino, const Image& lim) {
                                                 return tomo::pocs_tv(sino, lim.n(), tv, px).image;
                                               }});
                            } else {
                              models::ArchKind k;
                              try {
                                k = models::parse_arch(name);
                              } catch (const std::invalid_argument&) {
                                throw UsageError("unknown method '" + name + "'");
                              }
                              const auto it = ckpts.find(name);
                              if (it == ckpts.end()) throw std::runtime_error("missing checkpoint for method '" + name + "'");
                              auto model = std::make_shared<models::Model>(load_model(it->second));
                              if (model->arch.kind != k)
                                throw std::runtime_error("checkpoint for '" + name + "' holds a " + models::to_string(model->arch.kind));
                              nets[name] = model;
                              specs.push_back({name, [model](const tomo::Sinogram&, const Image& lim) {
                                                 return models::infer(*model, lim);
                                               }});
                            }
                          }
                          require_file(manifest_path, "manifest");
                          const auto table = models::evaluate(models::load_manifest(manifest_path), specs);
                          io::write_text(out_path, table.to_csv());
                          for (const auto& r : table.mean())
                            out << r.method << ": psnr " << r.psnr_db << " nrmse " << r.nrmse << " ssim " << r.ssim << "\n";
                        }};
  }
  {
    auto* sub = app.add_subcommand("spectrum", "Artifact spectrum of limited minus full, with wedge statistics");
    add_common(sub);
    sub->add_option("--limited", limited_path, "limited-angle image (.lact)")->required();
    sub->add_option("--full", full_path, "full-angle image (.lact)")->required();
    sub->add_option("--arc", ov.arc, "acquired arc in degrees");
    sub->add_option("--out", out_path, "log-magnitude spectrum (.lact, DC-centered)")->required();
    sub->add_option("--png", png_path, "also export a PNG preview");
    commands["spectrum"] = {sub, [&] {
                              require_file(limited_path, "image");
                              require_file(full_path, "image");
                              const auto lim = io::load_image(limited_path);
                              const auto full = io::load_image(full_path);
                              const auto spec = spectrum::artifact_spectrum(lim, full);
                              const auto mask = spectrum::wedge_mask(lim.n(), 0.0, s.arc);
                              Image map(spec.log_magnitude.n, 1.0, spec.log_magnitude.data);
                              io::save_image(out_path, map);
                              maybe_png(png_path, map);
                              out << "wedge_energy_ratio " << spectrum::wedge_energy_ratio(spec.log_magnitude, mask)
                                  << " area_fraction " << spectrum::mask_area_fraction(mask) << "\n";
                            }};
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!config_path.empty()) load_config(s, config_path);
    ov.apply_to(s);
    if (s.threads < 1) throw UsageError("--threads must be >= 1");
    set_threads(s.threads);
    for (auto& [name, cmd] : commands)
      if (cmd.app->parsed()) cmd.run();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

} // namespace lact::cli
