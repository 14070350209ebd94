#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lact/nn.hpp"

namespace lact::nn {

enum class LayerKind { input, conv3x3, conv1x1, relu, batchnorm, maxpool2, avgunpool2, concat };

const char* to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::input;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<int> inputs;  // indices of producing layers; concat takes two
  std::string name;
  bool zero_init = false;  // convolutions only: start from zero weights instead of He-normal
};

// Directed acyclic layer graph. Layer 0 is the input.
class NetworkSpec {
public:
  explicit NetworkSpec(int in_channels);

  int add(LayerKind kind, int input, int out_channels = 0);
  int add_concat(int a, int b);
  // Appends a layer as given; channel arithmetic is checked by validate().
  int add_raw(LayerSpec spec);
  void set_output(int idx) { output_ = idx; }
  void zero_init(int idx) { layers_.at(idx).zero_init = true; }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int output() const { return output_ < 0 ? static_cast<int>(layers_.size()) - 1 : output_; }
  int in_channels() const { return layers_.front().out_channels; }
  int out_channels() const { return layers_[output()].out_channels; }
  int pool_count() const;

  // Throws on cycles, dangling edges and channel mismatches.
  void validate() const;
  // Kahn order, ties broken by layer index.
  std::vector<int> topological_order() const;

private:
  std::vector<LayerSpec> layers_;
  int output_ = -1;
};

template <typename T>
class Network {
public:
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  // Backpropagates dy through the last train-mode forward, accumulating
  // parameter gradients. Returns the gradient with respect to the input.
  Tensor<T> backward(const Tensor<T>& dy);
  void zero_grad();

  // Named as "<layer>.weight", "<layer>.bias", "<layer>.gamma", "<layer>.beta".
  std::map<std::string, Tensor<T>>& params() { return params_; }
  const std::map<std::string, Tensor<T>>& params() const { return params_; }
  std::map<std::string, Tensor<T>>& grads() { return grads_; }
  const std::map<std::string, Tensor<T>>& grads() const { return grads_; }
  // Batch-norm running statistics: "<layer>.running_mean", "<layer>.running_var".
  std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
  const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

  std::size_t parameter_count() const;
  bool has_cache() const { return cached_; }

private:
  struct Cache {
    std::vector<Tensor<T>> acts;
    std::vector<BatchNormCache<T>> bn;
    std::vector<std::vector<std::uint32_t>> argmax;
  };

  Tensor<T> run_layer(int idx, const std::vector<const Tensor<T>*>& in, Mode mode, Cache* cache);

  NetworkSpec spec_;
  std::vector<int> order_;
  std::vector<int> last_use_;
  std::map<std::string, Tensor<T>> params_, grads_, buffers_;
  Cache cache_;
  bool cached_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

} // namespace lact::nn
