#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "lact/nn.hpp"

namespace lact::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// cols[(ci * k * k + ky * k + kx) * H * W + y * W + x] = x[ci, y + ky - p, x + kx - p]
template <typename T>
void im2col(const T* src, int cin, int h, int w, int k, std::vector<T>& cols) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  cols.assign(static_cast<std::size_t>(cin) * k * k * hw, T(0));
  for (int ci = 0; ci < cin; ++ci) {
    const T* plane = src + ci * hw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          const T* s = plane + static_cast<std::size_t>(y + dy) * w + dx;
          T* d = dst + static_cast<std::size_t>(y) * w;
          for (int x = x0; x < x1; ++x) d[x] = s[x];
        }
      }
  }
}

template <typename T>
void col2im(const std::vector<T>& cols, int cin, int h, int w, int k, T* dst) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    T* plane = dst + ci * hw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dy = ky - pad, dx = kx - pad;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          T* d = plane + static_cast<std::size_t>(y + dy) * w + dx;
          const T* s = src + static_cast<std::size_t>(y) * w;
          for (int x = x0; x < x1; ++x) d[x] += s[x];
        }
      }
  }
}

template <typename T>
void check_conv(const Tensor<T>& x, const Tensor<T>& weight) {
  const auto& ws = weight.shape();
  if (ws.h != ws.w || ws.h % 2 == 0) throw std::invalid_argument("conv2d: kernel must be square with odd size");
  if (x.c() != ws.c)
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                                std::to_string(ws.c));
}

} // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_conv(x, weight);
  const int cout = weight.n(), cin = weight.c(), k = weight.h();
  if (static_cast<int>(bias.size()) != cout) throw std::invalid_argument("conv2d: bias length mismatch");
  const int h = x.h(), w = x.w();
  const int hw = h * w;
  Tensor<T> y(x.n(), cout, h, w);
  ConstMapMat<T> wm(weight.data(), cout, cin * k * k);
  std::vector<T> cols;
  for (int b = 0; b < x.n(); ++b) {
    MapMat<T> ym(y.plane(b, 0), cout, hw);
    if (k == 1) {
      ym.noalias() = wm * ConstMapMat<T>(x.plane(b, 0), cin, hw);
    } else {
      im2col(x.plane(b, 0), cin, h, w, k, cols);
      ym.noalias() = wm * ConstMapMat<T>(cols.data(), cin * k * k, hw);
    }
    for (int co = 0; co < cout; ++co) ym.row(co).array() += bias.data()[co];
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, bool need_dx) {
  check_conv(x, weight);
  const int cout = weight.n(), cin = weight.c(), k = weight.h();
  const int h = x.h(), w = x.w();
  const int hw = h * w;
  const int kk = cin * k * k;
  if (!(dy.shape() == Shape{x.n(), cout, h, w})) throw std::invalid_argument("conv2d_backward: dy shape mismatch");

  ConvGrads<T> g{need_dx ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(weight.shape()), Tensor<T>(cout, 1, 1, 1)};
  ConstMapMat<T> wm(weight.data(), cout, kk);
  MapMat<T> dwm(g.dw.data(), cout, kk);
  std::vector<T> cols, dcols;
  for (int b = 0; b < x.n(); ++b) {
    ConstMapMat<T> dym(dy.plane(b, 0), cout, hw);
    for (int co = 0; co < cout; ++co) {
      const T* row = dy.plane(b, co);
      T acc = T(0);
      for (int i = 0; i < hw; ++i) acc += row[i];
      g.db.data()[co] += acc;
    }
    if (k == 1) {
      ConstMapMat<T> xm(x.plane(b, 0), cin, hw);
      dwm.noalias() += dym * xm.transpose();
      if (need_dx) MapMat<T>(g.dx.plane(b, 0), cin, hw).noalias() = wm.transpose() * dym;
    } else {
      im2col(x.plane(b, 0), cin, h, w, k, cols);
      dwm.noalias() += dym * ConstMapMat<T>(cols.data(), kk, hw).transpose();
      if (need_dx) {
        dcols.resize(static_cast<std::size_t>(kk) * hw);
        MapMat<T>(dcols.data(), kk, hw).noalias() = wm.transpose() * dym;
        col2im(dcols, cin, h, w, k, g.dx.plane(b, 0));
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  if (!(x.shape() == dy.shape())) throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx.data()[i] = x.data()[i] > T(0) ? dy.data()[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, Mode mode, BatchNormCache<T>* cache) {
  const int nb = x.n(), ch = x.c();
  const std::size_t plane = x.shape().plane();
  if (static_cast<int>(gamma.size()) != ch || beta.size() != gamma.size() ||
      running_mean.size() != gamma.size() || running_var.size() != gamma.size())
    throw std::invalid_argument("batchnorm: channel mismatch");
  const std::size_t m = static_cast<std::size_t>(nb) * plane;
  Tensor<T> y(x.shape());
  if (mode == Mode::eval) {
    for (int c = 0; c < ch; ++c) {
      const T inv = T(1) / std::sqrt(running_var.data()[c] + T(kBatchNormEps));
      const T mu = running_mean.data()[c], g = gamma.data()[c], be = beta.data()[c];
      for (int b = 0; b < nb; ++b) {
        const T* s = x.plane(b, c);
        T* d = y.plane(b, c);
        for (std::size_t i = 0; i < plane; ++i) d[i] = g * (s[i] - mu) * inv + be;
      }
    }
    return y;
  }
  if (m < 2) throw std::invalid_argument("batchnorm: training needs at least two values per channel");
  if (cache) {
    cache->xhat = Tensor<T>(x.shape());
    cache->inv_std.assign(static_cast<std::size_t>(ch), T(0));
  }
  for (int c = 0; c < ch; ++c) {
    double sum = 0.0;
    for (int b = 0; b < nb; ++b) {
      const T* s = x.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) sum += s[i];
    }
    const double mean = sum / static_cast<double>(m);
    double sq = 0.0;
    for (int b = 0; b < nb; ++b) {
      const T* s = x.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) sq += (s[i] - mean) * (s[i] - mean);
    }
    const double var = sq / static_cast<double>(m);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
    const T g = gamma.data()[c], be = beta.data()[c];
    for (int b = 0; b < nb; ++b) {
      const T* s = x.plane(b, c);
      T* d = y.plane(b, c);
      T* xh = cache ? cache->xhat.plane(b, c) : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T v = (s[i] - static_cast<T>(mean)) * inv;
        if (xh) xh[i] = v;
        d[i] = g * v + be;
      }
    }
    if (cache) cache->inv_std[c] = inv;
    const double unbiased = sq / static_cast<double>(m - 1);
    T& rm = running_mean.data()[c];
    T& rv = running_var.data()[c];
    rm = static_cast<T>(kBatchNormMomentum * rm + (1.0 - kBatchNormMomentum) * mean);
    rv = static_cast<T>(kBatchNormMomentum * rv + (1.0 - kBatchNormMomentum) * unbiased);
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma, const Tensor<T>& dy) {
  const auto& xhat = cache.xhat;
  if (!(xhat.shape() == dy.shape())) throw std::invalid_argument("batchnorm_backward: shape mismatch");
  const int nb = dy.n(), ch = dy.c();
  const std::size_t plane = dy.shape().plane();
  const double m = static_cast<double>(nb) * plane;
  BatchNormGrads<T> g{Tensor<T>(dy.shape()), Tensor<T>(ch, 1, 1, 1), Tensor<T>(ch, 1, 1, 1)};
  for (int c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < nb; ++b) {
      const T* d = dy.plane(b, c);
      const T* xh = xhat.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += d[i];
        sum_dy_xhat += d[i] * xh[i];
      }
    }
    g.dgamma.data()[c] = static_cast<T>(sum_dy_xhat);
    g.dbeta.data()[c] = static_cast<T>(sum_dy);
    const double scale = gamma.data()[c] * cache.inv_std[c] / m;
    for (int b = 0; b < nb; ++b) {
      const T* d = dy.plane(b, c);
      const T* xh = xhat.plane(b, c);
      T* dx = g.dx.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i)
        dx[i] = static_cast<T>(scale * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat));
    }
  }
  return g;
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " + x.shape().str());
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor<T> y(x.n(), x.c(), oh, ow);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c) {
      const T* s = x.plane(b, c);
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j, ++o) {
          const std::uint32_t cand[4] = {static_cast<std::uint32_t>((2 * i) * x.w() + 2 * j),
                                         static_cast<std::uint32_t>((2 * i) * x.w() + 2 * j + 1),
                                         static_cast<std::uint32_t>((2 * i + 1) * x.w() + 2 * j),
                                         static_cast<std::uint32_t>((2 * i + 1) * x.w() + 2 * j + 1)};
          std::uint32_t best = cand[0];
          for (int q = 1; q < 4; ++q)
            if (s[cand[q]] > s[best]) best = cand[q];
          y.data()[o] = s[best];
          if (argmax) (*argmax)[o] = best;
        }
    }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, const Shape& in_shape) {
  if (argmax.size() != dy.size()) throw std::invalid_argument("maxpool2_backward: argmax size mismatch");
  Tensor<T> dx(in_shape);
  std::size_t o = 0;
  const std::size_t plane_out = dy.shape().plane();
  for (int b = 0; b < dy.n(); ++b)
    for (int c = 0; c < dy.c(); ++c) {
      T* d = dx.plane(b, c);
      for (std::size_t i = 0; i < plane_out; ++i, ++o) d[argmax[o]] += dy.data()[o];
    }
  return dx;
}

template <typename T>
Tensor<T> avgunpool2(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c) {
      const T* s = x.plane(b, c);
      T* d = y.plane(b, c);
      const int w2 = 2 * x.w();
      for (int i = 0; i < x.h(); ++i)
        for (int j = 0; j < x.w(); ++j) {
          const T v = s[i * x.w() + j];
          d[(2 * i) * w2 + 2 * j] = v;
          d[(2 * i) * w2 + 2 * j + 1] = v;
          d[(2 * i + 1) * w2 + 2 * j] = v;
          d[(2 * i + 1) * w2 + 2 * j + 1] = v;
        }
    }
  return y;
}

template <typename T>
Tensor<T> avgunpool2_backward(const Tensor<T>& dy) {
  if (dy.h() % 2 != 0 || dy.w() % 2 != 0) throw std::invalid_argument("avgunpool2_backward: odd gradient dims");
  Tensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int b = 0; b < dy.n(); ++b)
    for (int c = 0; c < dy.c(); ++c) {
      const T* s = dy.plane(b, c);
      T* d = dx.plane(b, c);
      for (int i = 0; i < dx.h(); ++i)
        for (int j = 0; j < dx.w(); ++j)
          d[i * dx.w() + j] = s[(2 * i) * dy.w() + 2 * j] + s[(2 * i) * dy.w() + 2 * j + 1] +
                              s[(2 * i + 1) * dy.w() + 2 * j] + s[(2 * i + 1) * dy.w() + 2 * j + 1];
    }
  return dx;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("concat: mismatched shapes " + a.shape().str() + " and " + b.shape().str());
  Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t pa = static_cast<std::size_t>(a.c()) * a.shape().plane();
  const std::size_t pb = static_cast<std::size_t>(b.c()) * b.shape().plane();
  for (int i = 0; i < a.n(); ++i) {
    std::copy_n(a.plane(i, 0), pa, y.plane(i, 0));
    if (pb) std::copy_n(b.plane(i, 0), pb, y.plane(i, a.c()));
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>& dy, int channels_a) {
  if (channels_a < 0 || channels_a > dy.c()) throw std::invalid_argument("concat_backward: bad split");
  Tensor<T> da(dy.n(), channels_a, dy.h(), dy.w());
  Tensor<T> db(dy.n(), dy.c() - channels_a, dy.h(), dy.w());
  const std::size_t pa = da.size() / std::max(1, dy.n());
  const std::size_t pb = db.size() / std::max(1, dy.n());
  for (int i = 0; i < dy.n(); ++i) {
    std::copy_n(dy.plane(i, 0), pa, da.plane(i, 0));
    if (pb) std::copy_n(dy.plane(i, channels_a), pb, db.plane(i, 0));
  }
  return {std::move(da), std::move(db)};
}

template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!(pred.shape() == target.shape())) throw std::invalid_argument("mse_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - target.data()[i];
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

template <typename T>
Tensor<T> mse_loss_backward(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!(pred.shape() == target.shape())) throw std::invalid_argument("mse_loss_backward: shape mismatch");
  Tensor<T> g(pred.shape());
  const T scale = T(2) / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g.data()[i] = scale * (pred.data()[i] - target.data()[i]);
  return g;
}

template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, double lr, double momentum,
              double weight_decay) {
  if (!(param.shape() == grad.shape()) || !(param.shape() == velocity.shape()))
    throw std::invalid_argument("sgd_step: shape mismatch");
  T* p = param.data();
  const T* g = grad.data();
  T* v = velocity.data();
  const T mu = static_cast<T>(momentum), wd = static_cast<T>(weight_decay), eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    v[i] = mu * v[i] + g[i] + wd * p[i];
    p[i] -= eta * v[i];
  }
}

#define LACT_INSTANTIATE(T)                                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);         \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> batchnorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&, Mode, \
                               BatchNormCache<T>*);                                                        \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> maxpool2(const Tensor<T>&, std::vector<std::uint32_t>*);                                \
  template Tensor<T> maxpool2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&, const Shape&);   \
  template Tensor<T> avgunpool2(const Tensor<T>&);                                                           \
  template Tensor<T> avgunpool2_backward(const Tensor<T>&);                                                  \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&);                                             \
  template std::pair<Tensor<T>, Tensor<T>> concat_backward(const Tensor<T>&, int);                           \
  template T mse_loss(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> mse_loss_backward(const Tensor<T>&, const Tensor<T>&);                                  \
  template void sgd_step(Tensor<T>&, const Tensor<T>&, Tensor<T>&, double, double, double);

LACT_INSTANTIATE(float)
LACT_INSTANTIATE(double)

#undef LACT_INSTANTIATE

} // namespace lact::nn
