#include "lact/network.hpp"

#include <cmath>
#include <cstdio>
#include <queue>
#include <stdexcept>

#include "lact/rng.hpp"

namespace lact::nn {

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::conv1x1: return "conv1x1";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::avgunpool2: return "avgunpool2";
    case LayerKind::concat: return "concat";
  }
  return "?";
}

namespace {

bool is_conv(LayerKind k) { return k == LayerKind::conv3x3 || k == LayerKind::conv1x1; }

std::string layer_name(int idx, LayerKind k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d_", idx);
  return buf + std::string(to_string(k));
}

} // namespace

NetworkSpec::NetworkSpec(int in_channels) {
  if (in_channels < 1) throw std::invalid_argument("network: input needs at least one channel");
  layers_.push_back({LayerKind::input, in_channels, in_channels, {}, "000_input"});
}

int NetworkSpec::add_raw(LayerSpec spec) {
  const int idx = static_cast<int>(layers_.size());
  if (spec.name.empty()) spec.name = layer_name(idx, spec.kind);
  layers_.push_back(std::move(spec));
  return idx;
}

int NetworkSpec::add(LayerKind kind, int input, int out_channels) {
  if (kind == LayerKind::concat || kind == LayerKind::input)
    throw std::invalid_argument("network: use add_concat for concat layers");
  if (input < 0 || input >= static_cast<int>(layers_.size()))
    throw std::invalid_argument("network: input index " + std::to_string(input) + " out of range");
  const int in_c = layers_[input].out_channels;
  const int out_c = is_conv(kind) ? out_channels : in_c;
  if (out_c < 1) throw std::invalid_argument("network: convolution needs out_channels >= 1");
  return add_raw({kind, in_c, out_c, {input}, {}});
}

int NetworkSpec::add_concat(int a, int b) {
  const int n = static_cast<int>(layers_.size());
  if (a < 0 || a >= n || b < 0 || b >= n) throw std::invalid_argument("network: concat input out of range");
  const int c = layers_[a].out_channels + layers_[b].out_channels;
  return add_raw({LayerKind::concat, c, c, {a, b}, {}});
}

int NetworkSpec::pool_count() const {
  int p = 0;
  for (const auto& l : layers_) p += l.kind == LayerKind::maxpool2;
  return p;
}

std::vector<int> NetworkSpec::topological_order() const {
  const int n = static_cast<int>(layers_.size());
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<int>> succ(n);
  for (int i = 0; i < n; ++i)
    for (int src : layers_[i].inputs) {
      if (src < 0 || src >= n) throw std::invalid_argument("network: layer " + layers_[i].name + " has a dangling input");
      ++indeg[i];
      succ[src].push_back(i);
    }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<int> order;
  while (!ready.empty()) {
    const int i = ready.top();
    ready.pop();
    order.push_back(i);
    for (int s : succ[i])
      if (--indeg[s] == 0) ready.push(s);
  }
  if (static_cast<int>(order.size()) != n) throw std::invalid_argument("network: graph has a cycle");
  return order;
}

void NetworkSpec::validate() const {
  topological_order();
  if (layers_.front().kind != LayerKind::input) throw std::invalid_argument("network: layer 0 must be the input");
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.kind == LayerKind::input) throw std::invalid_argument("network: only layer 0 may be an input");
    const std::size_t want = l.kind == LayerKind::concat ? 2 : 1;
    if (l.inputs.size() != want)
      throw std::invalid_argument("network: layer " + l.name + " expects " + std::to_string(want) + " inputs");
    int in_c = 0;
    for (int src : l.inputs) in_c += layers_[src].out_channels;
    if (in_c != l.in_channels)
      throw std::invalid_argument("network: layer " + l.name + " declares " + std::to_string(l.in_channels) +
                                  " input channels but receives " + std::to_string(in_c));
    if (!is_conv(l.kind) && l.out_channels != l.in_channels)
      throw std::invalid_argument("network: layer " + l.name + " cannot change the channel count");
    if (l.out_channels < 1) throw std::invalid_argument("network: layer " + l.name + " has no output channels");
  }
  if (output() <= 0 || output() >= static_cast<int>(layers_.size()))
    throw std::invalid_argument("network: output index out of range");
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  order_ = spec_.topological_order();
  const auto& layers = spec_.layers();
  last_use_.assign(layers.size(), -1);
  for (std::size_t pos = 0; pos < order_.size(); ++pos)
    for (int src : layers[order_[pos]].inputs) last_use_[src] = static_cast<int>(pos);

  SplitMix64 rng(seed);
  for (const auto& l : layers) {
    if (is_conv(l.kind)) {
      const int k = l.kind == LayerKind::conv3x3 ? 3 : 1;
      Tensor<T> w(l.out_channels, l.in_channels, k, k);
      const double sd = std::sqrt(2.0 / (static_cast<double>(l.in_channels) * k * k));
      for (auto& v : w.values()) v = static_cast<T>(sd * rng.normal());
      if (l.zero_init) w.fill(T(0));
      params_.emplace(l.name + ".weight", std::move(w));
      params_.emplace(l.name + ".bias", Tensor<T>(l.out_channels, 1, 1, 1));
    } else if (l.kind == LayerKind::batchnorm) {
      params_.emplace(l.name + ".gamma", Tensor<T>(l.out_channels, 1, 1, 1, T(1)));
      params_.emplace(l.name + ".beta", Tensor<T>(l.out_channels, 1, 1, 1));
      buffers_.emplace(l.name + ".running_mean", Tensor<T>(l.out_channels, 1, 1, 1));
      buffers_.emplace(l.name + ".running_var", Tensor<T>(l.out_channels, 1, 1, 1, T(1)));
    }
  }
  for (const auto& [name, p] : params_) grads_.emplace(name, Tensor<T>(p.shape()));
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.size();
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& [name, g] : grads_) g.fill(T(0));
}

template <typename T>
Tensor<T> Network<T>::run_layer(int idx, const std::vector<const Tensor<T>*>& in, Mode mode, Cache* cache) {
  const auto& l = spec_.layers()[idx];
  const Tensor<T>& x = *in[0];
  switch (l.kind) {
    case LayerKind::conv3x3:
    case LayerKind::conv1x1:
      return conv2d(x, params_.at(l.name + ".weight"), params_.at(l.name + ".bias"));
    case LayerKind::relu: return relu(x);
    case LayerKind::batchnorm:
      return batchnorm(x, params_.at(l.name + ".gamma"), params_.at(l.name + ".beta"),
                       buffers_.at(l.name + ".running_mean"), buffers_.at(l.name + ".running_var"), mode,
                       cache ? &cache->bn[idx] : nullptr);
    case LayerKind::maxpool2: return maxpool2(x, cache ? &cache->argmax[idx] : nullptr);
    case LayerKind::avgunpool2: return avgunpool2(x);
    case LayerKind::concat: return concat(x, *in[1]);
    case LayerKind::input: break;
  }
  throw std::logic_error("network: cannot run an input layer");
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Mode mode) {
  const auto& layers = spec_.layers();
  if (x.c() != spec_.in_channels())
    throw std::invalid_argument("network: input has " + std::to_string(x.c()) + " channels, expected " +
                                std::to_string(spec_.in_channels()));
  const int pools = spec_.pool_count();
  if (x.h() % (1 << pools) != 0 || x.w() % (1 << pools) != 0)
    throw std::invalid_argument("network: spatial size " + x.shape().str() + " not divisible by 2^" +
                                std::to_string(pools));

  const bool train = mode == Mode::train;
  cache_ = Cache{};
  cached_ = false;
  Cache local;
  Cache& c = train ? cache_ : local;
  c.acts.assign(layers.size(), Tensor<T>());
  if (train) {
    c.bn.assign(layers.size(), BatchNormCache<T>());
    c.argmax.assign(layers.size(), {});
  }
  c.acts[0] = x;
  const int out = spec_.output();
  for (std::size_t pos = 1; pos < order_.size(); ++pos) {
    const int idx = order_[pos];
    std::vector<const Tensor<T>*> in;
    for (int src : layers[idx].inputs) in.push_back(&c.acts[src]);
    c.acts[idx] = run_layer(idx, in, mode, train ? &c : nullptr);
    if (!train)
      for (int src : layers[idx].inputs)
        if (last_use_[src] == static_cast<int>(pos) && src != out) c.acts[src] = Tensor<T>();
  }
  if (train) {
    cached_ = true;
    return c.acts[out];
  }
  return std::move(c.acts[out]);
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& dy) {
  if (!cached_) throw std::logic_error("network: backward needs a preceding train-mode forward");
  const auto& layers = spec_.layers();
  const int out = spec_.output();
  if (!(dy.shape() == cache_.acts[out].shape()))
    throw std::invalid_argument("network: output gradient shape " + dy.shape().str() + " does not match " +
                                cache_.acts[out].shape().str());
  std::vector<Tensor<T>> d(layers.size());
  d[out] = dy;
  auto accumulate = [&](int src, Tensor<T>&& g) {
    if (d[src].empty()) d[src] = std::move(g);
    else d[src] += g;
  };
  for (std::size_t pos = order_.size(); pos-- > 1;) {
    const int idx = order_[pos];
    if (d[idx].empty()) continue;
    const auto& l = layers[idx];
    const Tensor<T>& g = d[idx];
    const int src = l.inputs[0];
    switch (l.kind) {
      case LayerKind::conv3x3:
      case LayerKind::conv1x1: {
        auto cg = conv2d_backward(cache_.acts[src], params_.at(l.name + ".weight"), g, true);
        grads_.at(l.name + ".weight") += cg.dw;
        grads_.at(l.name + ".bias") += cg.db;
        accumulate(src, std::move(cg.dx));
        break;
      }
      case LayerKind::relu: accumulate(src, relu_backward(cache_.acts[idx], g)); break;
      case LayerKind::batchnorm: {
        auto bg = batchnorm_backward(cache_.bn[idx], params_.at(l.name + ".gamma"), g);
        grads_.at(l.name + ".gamma") += bg.dgamma;
        grads_.at(l.name + ".beta") += bg.dbeta;
        accumulate(src, std::move(bg.dx));
        break;
      }
      case LayerKind::maxpool2:
        accumulate(src, maxpool2_backward(g, cache_.argmax[idx], cache_.acts[src].shape()));
        break;
      case LayerKind::avgunpool2: accumulate(src, avgunpool2_backward(g)); break;
      case LayerKind::concat: {
        auto [ga, gb] = concat_backward(g, layers[src].out_channels);
        accumulate(l.inputs[0], std::move(ga));
        accumulate(l.inputs[1], std::move(gb));
        break;
      }
      case LayerKind::input: break;
    }
    d[idx] = Tensor<T>();
  }
  if (d[0].empty()) return Tensor<T>(cache_.acts[0].shape());
  return std::move(d[0]);
}

template class Network<float>;
template class Network<double>;

} // namespace lact::nn
