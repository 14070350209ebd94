#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lact/models.hpp"
#include "lact/parallel.hpp"
#include "lact/rng.hpp"
#include "lact/tomo.hpp"

namespace lact::models {

void DatasetOptions::validate() const {
  if (n_images < 1) throw std::invalid_argument("dataset: n_images must be >= 1");
  if (n_val < 0 || n_val >= n_images) throw std::invalid_argument("dataset: need 0 <= n_val < n_images");
  if (n < Image::kMinSide) throw std::invalid_argument("dataset: image side must be >= 8");
  if (!(pixel_size > 0.0)) throw std::invalid_argument("dataset: pixel_size must be positive");
  if (!(arc_deg > 0.0 && arc_deg <= 180.0)) throw std::invalid_argument("dataset: arc must lie in (0, 180]");
  if (n_angles < 2) throw std::invalid_argument("dataset: need at least two views");
  if (ellipses < 1) throw std::invalid_argument("dataset: ellipses must be >= 1");
}

SimulatedPair simulate_pair(const DatasetOptions& opt, std::uint64_t phantom_seed) {
  const Image phantom = tomo::random_phantom(opt.n, phantom_seed, opt.ellipses, opt.pixel_size);
  const auto geom = tomo::parallel_geometry(opt.n, opt.pixel_size, opt.n_angles);
  const auto sino = tomo::forward_project(phantom, geom);
  auto limited_sino = tomo::restrict_angles(sino, 0.0, opt.arc_deg);
  SimulatedPair p{{tomo::fbp(sino, opt.n, tomo::Window::ramlak, opt.pixel_size),
                   tomo::fbp(limited_sino, opt.n, tomo::Window::ramlak, opt.pixel_size)},
                  std::move(limited_sino)};
  return p;
}

std::vector<const DatasetEntry*> DatasetManifest::split(std::string_view tag) const {
  std::vector<const DatasetEntry*> out;
  for (const auto& e : entries)
    if (e.split == tag) out.push_back(&e);
  return out;
}

io::Json DatasetManifest::to_json() const {
  io::Json items = io::Json::array();
  for (const auto& e : entries) {
    io::Json j{{"id", e.id},
               {"seed", std::to_string(e.seed)},
               {"split", e.split},
               {"arc_deg", options.arc_deg},
               {"full", e.full_path},
               {"limited", e.limited_path}};
    if (!e.sinogram_path.empty()) j["limited_sinogram"] = e.sinogram_path;
    items.push_back(std::move(j));
  }
  return io::Json{{"kind", "dataset"},
                  {"n_images", options.n_images},
                  {"n_val", options.n_val},
                  {"n", options.n},
                  {"pixel_size", options.pixel_size},
                  {"arc_deg", options.arc_deg},
                  {"n_angles", options.n_angles},
                  {"ellipses", options.ellipses},
                  {"seed", std::to_string(options.seed)},
                  {"entries", std::move(items)}};
}

DatasetManifest DatasetManifest::from_json(const io::Json& j, fs::path root) {
  DatasetManifest m;
  m.root = std::move(root);
  try {
    auto& o = m.options;
    o.n_images = j.at("n_images").get<int>();
    o.n_val = j.at("n_val").get<int>();
    o.n = j.at("n").get<int>();
    o.pixel_size = j.at("pixel_size").get<double>();
    o.arc_deg = j.at("arc_deg").get<double>();
    o.n_angles = j.at("n_angles").get<int>();
    o.ellipses = j.at("ellipses").get<int>();
    o.seed = std::stoull(j.at("seed").get<std::string>());
    for (const auto& item : j.at("entries")) {
      DatasetEntry e;
      e.id = item.at("id").get<int>();
      e.seed = std::stoull(item.at("seed").get<std::string>());
      e.split = item.at("split").get<std::string>();
      e.full_path = item.at("full").get<std::string>();
      e.limited_path = item.at("limited").get<std::string>();
      e.sinogram_path = item.value("limited_sinogram", std::string());
      m.entries.push_back(std::move(e));
    }
  } catch (const io::Json::exception& e) {
    throw std::runtime_error(std::string("manifest: ") + e.what());
  }
  m.options.validate();
  return m;
}

DatasetManifest make_dataset(const DatasetOptions& opt, const fs::path& out_dir) {
  opt.validate();
  DatasetManifest m;
  m.options = opt;
  m.root = out_dir;
  const int n_train = opt.n_images - opt.n_val;
  m.entries.resize(static_cast<std::size_t>(opt.n_images));
  for (int i = 0; i < opt.n_images; ++i) {
    auto& e = m.entries[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04d", i);
    e.id = i;
    e.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(i));
    e.split = i < n_train ? "train" : "val";
    e.full_path = std::string("full/") + stem + ".lact";
    e.limited_path = std::string("limited/") + stem + ".lact";
    if (e.split == "val") e.sinogram_path = std::string("sinogram/") + stem + ".lact";
  }
  fs::create_directories(out_dir);
  parallel_for(m.entries.size(), [&](std::size_t i) {
    const auto& e = m.entries[i];
    const auto p = simulate_pair(opt, e.seed);
    io::save_image(out_dir / e.full_path, p.images.full);
    io::save_image(out_dir / e.limited_path, p.images.limited);
    if (!e.sinogram_path.empty()) io::save_sinogram(out_dir / e.sinogram_path, p.limited_sino);
  });
  io::write_json(out_dir / "manifest.json", m.to_json());
  return m;
}

DatasetManifest load_manifest(const fs::path& manifest_path) {
  return DatasetManifest::from_json(io::read_json(manifest_path), manifest_path.parent_path());
}

ImagePair load_pair(const DatasetManifest& m, const DatasetEntry& e) {
  return {io::load_image(m.root / e.full_path), io::load_image(m.root / e.limited_path)};
}

tomo::Sinogram load_limited_sinogram(const DatasetManifest& m, const DatasetEntry& e) {
  if (e.sinogram_path.empty())
    throw std::runtime_error("dataset entry " + std::to_string(e.id) + " has no stored sinogram");
  return io::load_sinogram(m.root / e.sinogram_path);
}

PreparedPair prepare_pair(const ImagePair& pair, const ArchSpec& arch, const dwt::FilterBank* bank) {
  if (pair.full.n() != pair.limited.n()) throw std::invalid_argument("prepare_pair: image sizes differ");
  PreparedPair p;
  p.n = pair.full.n();
  const Image residual = pair.limited - pair.full;
  if (arch.kind == ArchKind::wavelet_unet) {
    if (!bank || bank->n != p.n) throw std::invalid_argument("prepare_pair: wavelet input needs a matching bank");
    const auto in = dwt::decompose(pair.limited, *bank);
    const auto tg = dwt::decompose(residual, *bank);
    p.channels = in.channels();
    p.input.assign(in.data.begin(), in.data.end());
    p.target.assign(tg.data.begin(), tg.data.end());
  } else {
    p.channels = 1;
    p.input.assign(pair.limited.values().begin(), pair.limited.values().end());
    p.target.assign(residual.values().begin(), residual.values().end());
  }
  if (p.channels != arch.channels)
    throw std::invalid_argument("prepare_pair: bank yields " + std::to_string(p.channels) + " channels, arch expects " +
                                std::to_string(arch.channels));
  return p;
}

Batch sample_patches(const PreparedPair& pair, int patch, int count, std::uint64_t seed) {
  if (patch < 1 || patch > pair.n)
    throw std::invalid_argument("sample_patches: patch " + std::to_string(patch) + " exceeds image size " +
                                std::to_string(pair.n));
  if (count < 1) throw std::invalid_argument("sample_patches: count must be >= 1");
  Batch b{nn::Tensor<float>(count, pair.channels, patch, patch), nn::Tensor<float>(count, pair.channels, patch, patch)};
  SplitMix64 rng(seed);
  const auto span = static_cast<std::uint64_t>(pair.n - patch + 1);
  const std::size_t plane = static_cast<std::size_t>(pair.n) * pair.n;
  for (int k = 0; k < count; ++k) {
    const int r0 = static_cast<int>(rng.below(span));
    const int c0 = static_cast<int>(rng.below(span));
    for (int c = 0; c < pair.channels; ++c)
      for (int r = 0; r < patch; ++r) {
        const std::size_t src = c * plane + static_cast<std::size_t>(r0 + r) * pair.n + c0;
        std::copy_n(pair.input.data() + src, patch, &b.input.at(k, c, r, 0));
        std::copy_n(pair.target.data() + src, patch, &b.target.at(k, c, r, 0));
      }
  }
  return b;
}

} // namespace lact::models
