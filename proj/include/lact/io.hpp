#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lact/image.hpp"
#include "lact/tensor.hpp"
#include "lact/tomo.hpp"

namespace lact::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

// In-memory form of a TensorFile. Exactly one of f32/f64 holds the payload.
struct TensorData {
  std::vector<std::uint32_t> dims;
  DType dtype = DType::f64;
  std::vector<float> f32;
  std::vector<double> f64;

  static TensorData of(std::vector<std::uint32_t> dims, std::vector<float> v);
  static TensorData of(std::vector<std::uint32_t> dims, std::vector<double> v);
  std::size_t count() const;
  std::vector<double> as_double() const;
  bool operator==(const TensorData&) const = default;
};

void write_tensor(std::ostream& os, const TensorData& t);
TensorData read_tensor(std::istream& is);
void save_tensor(const fs::path& path, const TensorData& t);
TensorData load_tensor(const fs::path& path);

TensorData to_tensor_data(const nn::Tensor<float>& t);
nn::Tensor<float> to_tensor_f32(const TensorData& t);

// Image payload is an f64 (n, n) tensor; pixel size lives in "<path>.json".
void save_image(const fs::path& path, const Image& img);
Image load_image(const fs::path& path);

// Sinogram payload is an f64 (n_angles, n_det) tensor; geometry and the
// explicit angle list live in "<path>.json".
void save_sinogram(const fs::path& path, const tomo::Sinogram& sino);
tomo::Sinogram load_sinogram(const fs::path& path);

struct Checkpoint {
  std::map<std::string, TensorData> tensors;
  Json meta = Json::object();
};

void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const fs::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const fs::path& path);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);
void write_text(const fs::path& path, const std::string& text);

// Grayscale PNG windowed to [min, max] of the image; the window is written to
// "<path>.json". bits is 8 or 16.
void export_png(const fs::path& path, const Image& img, int bits = 16);

fs::path sidecar_path(const fs::path& path);

} // namespace lact::io
