#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lact/dwt.hpp"
#include "lact/image.hpp"
#include "lact/io.hpp"
#include "lact/metrics.hpp"
#include "lact/network.hpp"

namespace lact::models {

namespace fs = std::filesystem;

enum class ArchKind { wavelet_unet, image_unet, image_plain };

const char* to_string(ArchKind k);
ArchKind parse_arch(std::string_view s);

struct ArchSpec {
  ArchKind kind = ArchKind::wavelet_unet;
  int depth = 3;
  int base_channels = 16;
  int channels = 15;         // network input = output
  int convs_per_stage = 2;
  int levels = 4;            // filter-bank stages; wavelet kind only

  void validate() const;
  int pool_count() const { return kind == ArchKind::image_plain ? 0 : depth; }
};

// Channels follow the kind: 15 (4-stage bank) for wavelet_unet, 1 otherwise.
ArchSpec make_arch(ArchKind kind, int depth = 3, int base_channels = 16);

nn::NetworkSpec build_arch(const ArchSpec& spec);

io::Json arch_to_json(const ArchSpec& a);
ArchSpec arch_from_json(const io::Json& j);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  int patch = 64;
  int patches_per_image = 2;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  // The objective is loss_scale * channels * MSE, the per-pixel squared
  // error summed over channels.
  double loss_scale = 300.0;

  void validate(const ArchSpec& arch) const;
  // Log-linear from lr_start at epoch 0 to lr_end at the final epoch.
  double lr_at(int epoch) const;
};

io::Json config_to_json(const TrainConfig& c);

struct DatasetOptions {
  int n_images = 220;
  int n_val = 20;
  int n = 128;
  double pixel_size = 1.0;
  double arc_deg = 120.0;
  int n_angles = 360;     // views over the full 180 degree arc
  int ellipses = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetEntry {
  int id = 0;
  std::uint64_t seed = 0;
  std::string split;  // "train" or "val"
  std::string full_path;
  std::string limited_path;
  std::string sinogram_path;  // limited-arc sinogram; validation entries only
};

struct DatasetManifest {
  DatasetOptions options;
  std::vector<DatasetEntry> entries;
  fs::path root;  // directory the entry paths are relative to

  std::vector<const DatasetEntry*> split(std::string_view tag) const;
  io::Json to_json() const;
  static DatasetManifest from_json(const io::Json& j, fs::path root);
};

struct ImagePair {
  Image full;
  Image limited;
};

struct SimulatedPair {
  ImagePair images;
  tomo::Sinogram limited_sino;
};

// Full-arc FBP and limited-arc FBP of one random phantom.
SimulatedPair simulate_pair(const DatasetOptions& opt, std::uint64_t phantom_seed);

DatasetManifest make_dataset(const DatasetOptions& opt, const fs::path& out_dir);
DatasetManifest load_manifest(const fs::path& manifest_path);
ImagePair load_pair(const DatasetManifest& m, const DatasetEntry& e);
tomo::Sinogram load_limited_sinogram(const DatasetManifest& m, const DatasetEntry& e);

// Whole-image network input and residual target (limited - full), channel-major.
struct PreparedPair {
  int channels = 0;
  int n = 0;
  std::vector<float> input;
  std::vector<float> target;
};

PreparedPair prepare_pair(const ImagePair& pair, const ArchSpec& arch, const dwt::FilterBank* bank);

struct Batch {
  nn::Tensor<float> input;
  nn::Tensor<float> target;
};

// count windows with uniform random top-left corners drawn from splitmix64(seed).
Batch sample_patches(const PreparedPair& pair, int patch, int count, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
};

struct Model {
  ArchSpec arch;
  nn::Network<float> net;
  std::map<std::string, nn::Tensor<float>> momentum;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t rng_state = 0;
  double val_psnr = 0.0;

  Model(const ArchSpec& a, std::uint64_t init_seed);
};

io::Checkpoint to_checkpoint(const Model& m);
Model from_checkpoint(const io::Checkpoint& ck);

struct TrainResult {
  io::Checkpoint best;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Minimizes MSE between predicted and true residuals with SGD. The returned
// checkpoint is the epoch with the best mean validation PSNR.
TrainResult train(const ArchSpec& arch, const TrainConfig& cfg, const DatasetManifest& manifest,
                  const EpochCallback& on_epoch = {});

std::string log_to_csv(const std::vector<EpochLog>& log);

// Restores an image: limited - lift(network(limited)).
Image infer_wavelet(Model& model, const Image& limited, const dwt::FilterBank& bank);
Image infer_image(Model& model, const Image& limited);
Image infer(Model& model, const Image& limited);

// Network residual estimate lifted back to the image domain.
Image predict_residual(Model& model, const Image& limited, const dwt::FilterBank* bank);

struct MethodSpec {
  std::string name;   // column prefix in the metrics table
  std::function<Image(const tomo::Sinogram& limited_sino, const Image& limited)> run;
};

struct MetricsTable {
  std::vector<std::string> methods;
  std::vector<std::string> slices;
  // rows[slice][method]
  std::vector<std::vector<metrics::MetricsRow>> rows;

  std::vector<metrics::MetricsRow> mean() const;
  std::string to_csv() const;
};

// Runs every method on each validation slice of the manifest against the
// full-arc reference.
MetricsTable evaluate(const DatasetManifest& manifest, const std::vector<MethodSpec>& methods);

} // namespace lact::models
