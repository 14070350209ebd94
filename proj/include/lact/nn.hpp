#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lact/tensor.hpp"

namespace lact::nn {

enum class Mode { train, eval };

// Cross-correlation with stride 1 and "same" zero padding. Weights are
// (Cout, Cin, k, k) with odd k; bias is (Cout, 1, 1, 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct ConvGrads {
  Tensor<T> dx, dw, db;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, bool need_dx = true);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
// Gradient masked by x > 0; the layer output can be passed in place of x.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

// Train mode normalizes with batch statistics (biased variance) and folds
// them into the running statistics as running = 0.9 running + 0.1 batch,
// using the unbiased variance for running_var. All parameter tensors are (C, 1, 1, 1).
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, Mode mode, BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> dx, dgamma, dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& dy);

// 2x2 max pooling; ties resolve to the first element in row-major order.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax = nullptr);
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, const Shape& in_shape);

// Replicates each value into a 2x2 block; backward sums each block.
template <typename T>
Tensor<T> avgunpool2(const Tensor<T>& x);
template <typename T>
Tensor<T> avgunpool2_backward(const Tensor<T>& dy);

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& dy, int channels_a);

template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target);
template <typename T>
Tensor<T> mse_loss_backward(const Tensor<T>& pred, const Tensor<T>& target);

// v <- momentum v + grad + weight_decay param; param <- param - lr v.
template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, double lr, double momentum,
              double weight_decay);

} // namespace lact::nn
