#include "lact/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace lact::io {

namespace {

constexpr char kTensorMagic[4] = {'L', 'A', 'C', 'T'};
constexpr char kCheckpointMagic[4] = {'L', 'A', 'C', 'K'};
constexpr std::uint8_t kMaxDims = 8;

template <typename U>
void put_le(std::ostream& os, U v) {
  char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  unsigned char b[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(U))) throw std::runtime_error(std::string("truncated ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  if (!is.read(dst, static_cast<std::streamsize>(n))) throw std::runtime_error(std::string("truncated ") + what);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

} // namespace

TensorData TensorData::of(std::vector<std::uint32_t> dims, std::vector<float> v) {
  TensorData t;
  t.dims = std::move(dims);
  t.dtype = DType::f32;
  t.f32 = std::move(v);
  if (t.f32.size() != product(t.dims)) throw std::invalid_argument("tensor data: payload does not match dims");
  return t;
}

TensorData TensorData::of(std::vector<std::uint32_t> dims, std::vector<double> v) {
  TensorData t;
  t.dims = std::move(dims);
  t.dtype = DType::f64;
  t.f64 = std::move(v);
  if (t.f64.size() != product(t.dims)) throw std::invalid_argument("tensor data: payload does not match dims");
  return t;
}

std::size_t TensorData::count() const { return product(dims); }

std::vector<double> TensorData::as_double() const {
  if (dtype == DType::f64) return f64;
  return {f32.begin(), f32.end()};
}

void write_tensor(std::ostream& os, const TensorData& t) {
  if (t.dims.empty() || t.dims.size() > kMaxDims) throw std::invalid_argument("tensor file: ndim must be 1..8");
  const std::size_t n = t.count();
  if ((t.dtype == DType::f32 ? t.f32.size() : t.f64.size()) != n)
    throw std::invalid_argument("tensor file: payload does not match dims");
  os.write(kTensorMagic, 4);
  put_le<std::uint16_t>(os, kTensorVersion);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint32_t>(os, d);
  if (t.dtype == DType::f32)
    for (float v : t.f32) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  else
    for (double v : t.f64) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("tensor file: write failed");
}

TensorData read_tensor(std::istream& is) {
  char magic[4];
  read_exact(is, magic, 4, "tensor header");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw std::runtime_error("tensor file: bad magic");
  const auto version = get_le<std::uint16_t>(is, "tensor header");
  if (version != kTensorVersion)
    throw std::runtime_error("tensor file: unsupported version " + std::to_string(version));
  const auto dtype = get_le<std::uint8_t>(is, "tensor header");
  if (dtype != 1 && dtype != 2) throw std::runtime_error("tensor file: unknown dtype code " + std::to_string(dtype));
  const auto ndim = get_le<std::uint8_t>(is, "tensor header");
  if (ndim == 0 || ndim > kMaxDims) throw std::runtime_error("tensor file: bad ndim " + std::to_string(ndim));
  TensorData t;
  t.dtype = static_cast<DType>(dtype);
  for (int i = 0; i < ndim; ++i) t.dims.push_back(get_le<std::uint32_t>(is, "tensor dims"));
  const std::size_t n = t.count();
  const std::size_t width = t.dtype == DType::f32 ? 4 : 8;
  std::vector<unsigned char> raw(n * width);
  read_exact(is, reinterpret_cast<char*>(raw.data()), raw.size(), "tensor payload");
  if (t.dtype == DType::f32) {
    t.f32.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
      t.f32[i] = std::bit_cast<float>(u);
    }
  } else {
    t.f64.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t u = 0;
      for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
      t.f64[i] = std::bit_cast<double>(u);
    }
  }
  return t;
}

void save_tensor(const fs::path& path, const TensorData& t) {
  auto os = open_out(path);
  write_tensor(os, t);
}

TensorData load_tensor(const fs::path& path) {
  auto is = open_in(path);
  try {
    return read_tensor(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

TensorData to_tensor_data(const nn::Tensor<float>& t) {
  const auto& s = t.shape();
  return TensorData::of({static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                         static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                        t.values());
}

nn::Tensor<float> to_tensor_f32(const TensorData& t) {
  if (t.dtype != DType::f32 || t.dims.size() != 4) throw std::runtime_error("expected a rank-4 f32 tensor");
  nn::Shape s{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
              static_cast<int>(t.dims[3])};
  return nn::Tensor<float>(s, t.f32);
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

Json read_json(const fs::path& path) {
  auto is = open_in(path);
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void save_image(const fs::path& path, const Image& img) {
  const auto n = static_cast<std::uint32_t>(img.n());
  save_tensor(path, TensorData::of({n, n}, img.values()));
  write_json(sidecar_path(path), Json{{"kind", "image"}, {"n", img.n()}, {"pixel_size", img.pixel_size()}});
}

Image load_image(const fs::path& path) {
  auto t = load_tensor(path);
  if (t.dims.size() != 2 || t.dims[0] != t.dims[1])
    throw std::runtime_error(path.string() + ": expected a square 2-D tensor");
  double ps = 1.0;
  if (fs::exists(sidecar_path(path))) ps = read_json(sidecar_path(path)).value("pixel_size", 1.0);
  return Image(static_cast<int>(t.dims[0]), ps, t.as_double());
}

void save_sinogram(const fs::path& path, const tomo::Sinogram& sino) {
  sino.validate();
  save_tensor(path, TensorData::of({static_cast<std::uint32_t>(sino.n_angles()), static_cast<std::uint32_t>(sino.n_det())},
                                   sino.data));
  const auto& g = sino.geometry;
  write_json(sidecar_path(path), Json{{"kind", "sinogram"},
                                      {"n_angles", g.n_angles},
                                      {"angle_start_deg", g.angle_start_deg},
                                      {"angle_end_deg", g.angle_end_deg},
                                      {"n_det", g.n_det},
                                      {"det_spacing", g.det_spacing},
                                      {"angles_deg", sino.angles_deg}});
}

tomo::Sinogram load_sinogram(const fs::path& path) {
  auto t = load_tensor(path);
  const auto j = read_json(sidecar_path(path));
  tomo::Geometry g;
  try {
    g.n_angles = j.at("n_angles").get<int>();
    g.angle_start_deg = j.at("angle_start_deg").get<double>();
    g.angle_end_deg = j.at("angle_end_deg").get<double>();
    g.n_det = j.at("n_det").get<int>();
    g.det_spacing = j.at("det_spacing").get<double>();
  } catch (const Json::exception& e) {
    throw std::runtime_error(sidecar_path(path).string() + ": " + e.what());
  }
  if (t.dims.size() != 2 || static_cast<int>(t.dims[0]) != g.n_angles || static_cast<int>(t.dims[1]) != g.n_det)
    throw std::runtime_error(path.string() + ": payload does not match its geometry");
  tomo::Sinogram s(g);
  s.angles_deg = j.at("angles_deg").get<std::vector<double>>();
  s.data = t.as_double();
  s.validate();
  return s;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic, 4);
  put_le<std::uint16_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    if (name.empty() || name.size() > 0xffff) throw std::invalid_argument("checkpoint: bad entry name");
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
  const std::string meta = ck.meta.dump();
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  read_exact(is, magic, 4, "checkpoint header");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = get_le<std::uint16_t>(is, "checkpoint header");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is, "checkpoint header");
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(is, "checkpoint entry name");
    std::string name(len, '\0');
    read_exact(is, name.data(), len, "checkpoint entry name");
    if (!ck.tensors.emplace(name, read_tensor(is)).second)
      throw std::runtime_error("checkpoint: duplicate entry " + name);
  }
  const auto meta_len = get_le<std::uint32_t>(is, "checkpoint metadata");
  std::string meta(meta_len, '\0');
  read_exact(is, meta.data(), meta_len, "checkpoint metadata");
  try {
    ck.meta = Json::parse(meta);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: malformed metadata: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  auto os = open_out(path);
  write_checkpoint(os, ck);
}

Checkpoint load_checkpoint(const fs::path& path) {
  auto is = open_in(path);
  try {
    return read_checkpoint(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void export_png(const fs::path& path, const Image& img, int bits) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("png: bits must be 8 or 16");
  const double lo = img.min(), hi = img.max();
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  const int n = img.n();
  const int maxv = bits == 8 ? 255 : 65535;
  const int bpp = bits / 8;
  std::vector<unsigned char> rows(static_cast<std::size_t>(n) * n * bpp);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double t = std::clamp((img.values()[i] - lo) * scale, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(t * maxv));
    if (bpp == 1) rows[i] = static_cast<unsigned char>(q);
    else {
      rows[2 * i] = static_cast<unsigned char>(q >> 8);
      rows[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
  }

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, n, n, bits, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < n; ++r) png_write_row(png, rows.data() + static_cast<std::size_t>(r) * n * bpp);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);

  write_json(sidecar_path(path), Json{{"kind", "png_window"}, {"bits", bits}, {"min", lo}, {"max", hi}});
}

} // namespace lact::io
