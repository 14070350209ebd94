#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

#include "lact/models.hpp"
#include "lact/rng.hpp"

namespace lact::models {

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;
constexpr std::uint64_t kStreamTag = 0x73747265;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

nn::Tensor<float> to_input(const Image& limited, const ArchSpec& arch, const dwt::FilterBank* bank,
                           std::optional<dwt::CoefficientStack>* stack_out) {
  const int n = limited.n();
  nn::Tensor<float> x(1, arch.channels, n, n);
  if (arch.kind == ArchKind::wavelet_unet) {
    auto stack = dwt::decompose(limited, *bank);
    if (stack.channels() != arch.channels) throw std::invalid_argument("infer: bank and checkpoint channel counts differ");
    std::copy(stack.data.begin(), stack.data.end(), x.data());
    if (stack_out) *stack_out = std::move(stack);
  } else {
    std::copy(limited.values().begin(), limited.values().end(), x.data());
  }
  return x;
}

void check_size(const ArchSpec& arch, int n) {
  const int div = 1 << arch.pool_count();
  if (n % div != 0)
    throw std::invalid_argument("image size " + std::to_string(n) + " is not divisible by 2^" +
                                std::to_string(arch.pool_count()));
}

} // namespace

void TrainConfig::validate(const ArchSpec& arch) const {
  arch.validate();
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (patches_per_image < 1) throw std::invalid_argument("train: patches_per_image must be >= 1");
  if (!(lr_start >= lr_end && lr_end > 0.0)) throw std::invalid_argument("train: need lr_start >= lr_end > 0");
  if (!(loss_scale > 0.0)) throw std::invalid_argument("train: loss_scale must be positive");
  if (weight_decay < 0.0 || momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("train: need weight_decay >= 0 and momentum in [0, 1)");
  const int div = 1 << arch.pool_count();
  if (patch < div || patch % div != 0)
    throw std::invalid_argument("train: patch " + std::to_string(patch) + " is not divisible by 2^" +
                                std::to_string(arch.pool_count()));
}

double TrainConfig::lr_at(int epoch) const {
  if (epochs <= 1) return lr_start;
  const double t = std::clamp(static_cast<double>(epoch) / (epochs - 1), 0.0, 1.0);
  if (epoch >= epochs - 1) return lr_end;
  return std::exp(std::log(lr_start) + t * (std::log(lr_end) - std::log(lr_start)));
}

io::Json config_to_json(const TrainConfig& c) {
  return io::Json{{"epochs", c.epochs},         {"batch_size", c.batch_size},
                  {"patch", c.patch},           {"patches_per_image", c.patches_per_image},
                  {"lr_start", c.lr_start},     {"lr_end", c.lr_end},
                  {"weight_decay", c.weight_decay}, {"momentum", c.momentum},
                  {"seed", std::to_string(c.seed)}, {"loss_scale", c.loss_scale}};
}

Model::Model(const ArchSpec& a, std::uint64_t init_seed) : arch(a), net(build_arch(a), init_seed), seed(init_seed) {
  for (const auto& [name, p] : net.params()) momentum.emplace(name, nn::Tensor<float>(p.shape()));
}

io::Checkpoint to_checkpoint(const Model& m) {
  io::Checkpoint ck;
  for (const auto& [name, p] : m.net.params()) ck.tensors.emplace("param/" + name, io::to_tensor_data(p));
  for (const auto& [name, v] : m.momentum) ck.tensors.emplace("momentum/" + name, io::to_tensor_data(v));
  for (const auto& [name, b] : m.net.buffers()) ck.tensors.emplace("buffer/" + name, io::to_tensor_data(b));
  ck.meta = io::Json{{"kind", "checkpoint"},
                     {"arch", arch_to_json(m.arch)},
                     {"epoch", m.epoch},
                     {"seed", std::to_string(m.seed)},
                     {"rng_state", std::to_string(m.rng_state)},
                     {"val_psnr", std::isfinite(m.val_psnr) ? io::Json(m.val_psnr) : io::Json()}};
  return ck;
}

Model from_checkpoint(const io::Checkpoint& ck) {
  const auto& meta = ck.meta;
  if (!meta.contains("arch")) throw std::runtime_error("checkpoint: missing arch metadata");
  std::uint64_t seed = 0, rng_state = 0;
  int epoch = 0;
  try {
    seed = std::stoull(meta.at("seed").get<std::string>());
    rng_state = std::stoull(meta.at("rng_state").get<std::string>());
    epoch = meta.at("epoch").get<int>();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad metadata: ") + e.what());
  }
  Model m(arch_from_json(meta.at("arch")), seed);
  m.epoch = epoch;
  m.rng_state = rng_state;
  const auto& vp = meta.value("val_psnr", io::Json());
  m.val_psnr = vp.is_number() ? vp.get<double>() : std::numeric_limits<double>::quiet_NaN();

  std::size_t used = 0;
  auto fill = [&](const std::string& key, nn::Tensor<float>& dst) {
    auto it = ck.tensors.find(key);
    if (it == ck.tensors.end()) throw std::runtime_error("checkpoint: missing entry " + key);
    auto t = io::to_tensor_f32(it->second);
    if (!(t.shape() == dst.shape()))
      throw std::runtime_error("checkpoint: entry " + key + " has shape " + t.shape().str() + ", expected " +
                               dst.shape().str());
    dst = std::move(t);
    ++used;
  };
  for (auto& [name, p] : m.net.params()) fill("param/" + name, p);
  for (auto& [name, v] : m.momentum) fill("momentum/" + name, v);
  for (auto& [name, b] : m.net.buffers()) fill("buffer/" + name, b);
  if (used != ck.tensors.size()) throw std::runtime_error("checkpoint: entries do not match the architecture");
  return m;
}

TrainResult train(const ArchSpec& arch, const TrainConfig& cfg, const DatasetManifest& manifest,
                  const EpochCallback& on_epoch) {
  cfg.validate(arch);
  const auto train_entries = manifest.split("train");
  const auto val_entries = manifest.split("val");
  if (train_entries.empty()) throw std::invalid_argument("train: manifest has no training entries");
  const int n = manifest.options.n;
  check_size(arch, n);
  if (cfg.patch > n) throw std::invalid_argument("train: patch exceeds image size");

  std::optional<dwt::FilterBank> bank;
  if (arch.kind == ArchKind::wavelet_unet) bank = dwt::build_filter_bank(n, arch.levels);
  const dwt::FilterBank* bank_ptr = bank ? &*bank : nullptr;

  std::vector<PreparedPair> prepared;
  prepared.reserve(train_entries.size());
  for (const auto* e : train_entries) prepared.push_back(prepare_pair(load_pair(manifest, *e), arch, bank_ptr));
  std::vector<ImagePair> val;
  for (const auto* e : val_entries) val.push_back(load_pair(manifest, *e));

  Model model(arch, derive_seed(cfg.seed, kInitTag));
  SplitMix64 rng(derive_seed(cfg.seed, kStreamTag));
  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();

  const int channels = arch.channels;
  const int P = cfg.patch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    std::vector<int> items;
    for (int i = 0; i < static_cast<int>(prepared.size()); ++i)
      for (int k = 0; k < cfg.patches_per_image; ++k) items.push_back(i);
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);

    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < items.size(); start += cfg.batch_size) {
      const int bsz = static_cast<int>(std::min<std::size_t>(cfg.batch_size, items.size() - start));
      Batch batch{nn::Tensor<float>(bsz, channels, P, P), nn::Tensor<float>(bsz, channels, P, P)};
      const std::size_t per = static_cast<std::size_t>(channels) * P * P;
      for (int k = 0; k < bsz; ++k) {
        auto one = sample_patches(prepared[items[start + k]], P, 1, rng.next());
        std::copy_n(one.input.data(), per, batch.input.plane(k, 0));
        std::copy_n(one.target.data(), per, batch.target.plane(k, 0));
      }
      model.net.zero_grad();
      const auto pred = model.net.forward(batch.input, nn::Mode::train);
      const float loss = nn::mse_loss(pred, batch.target);
      const auto scale = static_cast<float>(cfg.loss_scale * channels);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                 std::to_string(steps + 1) + " (lr " + fmt(lr) + ")");
      auto dy = nn::mse_loss_backward(pred, batch.target);
      if (scale != 1.0f)
        for (auto& v : dy.values()) v *= scale;
      model.net.backward(dy);
      for (auto& [name, p] : model.net.params())
        nn::sgd_step(p, model.net.grads().at(name), model.momentum.at(name), lr, cfg.momentum, cfg.weight_decay);
      loss_sum += loss;
      ++steps;
    }

    double val_psnr = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty()) {
      double acc = 0.0;
      for (const auto& p : val) acc += metrics::psnr(infer(model, p.limited), p.full);
      val_psnr = acc / static_cast<double>(val.size());
    }
    model.epoch = epoch + 1;
    model.rng_state = rng.state();
    model.val_psnr = val_psnr;
    EpochLog log{epoch + 1, lr, loss_sum / steps, val_psnr};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    const bool improved = val.empty() ? true : val_psnr > best;
    if (improved) {
      if (!val.empty()) best = val_psnr;
      result.best = to_checkpoint(model);
      result.best.meta["train"] = config_to_json(cfg);
      result.best.meta["dataset_arc_deg"] = manifest.options.arc_deg;
    }
  }
  return result;
}

std::string log_to_csv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,lr,train_loss,val_psnr\n";
  for (const auto& e : log)
    s += std::to_string(e.epoch) + "," + fmt(e.lr) + "," + fmt(e.train_loss) + "," + fmt(e.val_psnr) + "\n";
  return s;
}

Image predict_residual(Model& model, const Image& limited, const dwt::FilterBank* bank) {
  check_size(model.arch, limited.n());
  const bool wavelet = model.arch.kind == ArchKind::wavelet_unet;
  if (wavelet && (!bank || bank->n != limited.n())) throw std::invalid_argument("infer: wavelet model needs a bank");
  const auto z = model.net.forward(to_input(limited, model.arch, bank, nullptr), nn::Mode::eval);
  const std::size_t plane = limited.size();
  if (!wavelet) return Image(limited.n(), limited.pixel_size(), std::vector<double>(z.data(), z.data() + plane));
  dwt::CoefficientStack stack;
  stack.n = limited.n();
  stack.meta = bank->meta;
  stack.data.assign(z.data(), z.data() + z.size());
  return dwt::recompose(stack, *bank, limited.pixel_size());
}

Image infer_wavelet(Model& model, const Image& limited, const dwt::FilterBank& bank) {
  if (model.arch.kind != ArchKind::wavelet_unet)
    throw std::invalid_argument(std::string("infer_wavelet: checkpoint holds a ") + to_string(model.arch.kind));
  check_size(model.arch, limited.n());
  std::optional<dwt::CoefficientStack> stack;
  const auto z = model.net.forward(to_input(limited, model.arch, &bank, &stack), nn::Mode::eval);
  for (std::size_t i = 0; i < stack->data.size(); ++i) stack->data[i] -= z.data()[i];
  return dwt::recompose(*stack, bank, limited.pixel_size());
}

Image infer_image(Model& model, const Image& limited) {
  if (model.arch.kind == ArchKind::wavelet_unet)
    throw std::invalid_argument("infer_image: checkpoint holds a wavelet_unet");
  return limited - predict_residual(model, limited, nullptr);
}

Image infer(Model& model, const Image& limited) {
  if (model.arch.kind == ArchKind::wavelet_unet)
    return infer_wavelet(model, limited, dwt::build_filter_bank(limited.n(), model.arch.levels));
  return infer_image(model, limited);
}

std::vector<metrics::MetricsRow> MetricsTable::mean() const {
  std::vector<metrics::MetricsRow> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    out[m].slice_id = "mean";
    out[m].method = methods[m];
    for (const auto& row : rows) {
      out[m].psnr_db += row[m].psnr_db;
      out[m].nrmse += row[m].nrmse;
      out[m].ssim += row[m].ssim;
    }
    const double k = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    out[m].psnr_db /= k;
    out[m].nrmse /= k;
    out[m].ssim /= k;
  }
  return out;
}

std::string MetricsTable::to_csv() const {
  std::string s = "slice";
  for (const auto& m : methods) s += "," + m + "_psnr," + m + "_nrmse," + m + "_ssim";
  s += "\n";
  auto emit = [&](const std::string& id, const std::vector<metrics::MetricsRow>& r) {
    s += id;
    for (const auto& v : r) s += "," + fmt(v.psnr_db) + "," + fmt(v.nrmse) + "," + fmt(v.ssim);
    s += "\n";
  };
  for (std::size_t i = 0; i < rows.size(); ++i) emit(slices[i], rows[i]);
  emit("mean", mean());
  return s;
}

MetricsTable evaluate(const DatasetManifest& manifest, const std::vector<MethodSpec>& methods) {
  if (methods.empty()) throw std::invalid_argument("evaluate: no methods given");
  MetricsTable t;
  for (const auto& m : methods) t.methods.push_back(m.name);
  for (const auto* e : manifest.split("val")) {
    const auto pair = load_pair(manifest, *e);
    const auto sino = load_limited_sinogram(manifest, *e);
    const std::string id = std::to_string(e->id);
    std::vector<metrics::MetricsRow> row;
    for (const auto& m : methods) row.push_back(metrics::evaluate(m.run(sino, pair.limited), pair.full, id, m.name));
    t.slices.push_back(id);
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw std::invalid_argument("evaluate: manifest has no validation entries");
  return t;
}

} // namespace lact::models
