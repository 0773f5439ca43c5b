#include "tergan/layers.hpp"

#include <cmath>

#include "tergan/kernels.hpp"

namespace tergan {

using Index = std::ptrdiff_t;

template <class T>
void init_he_normal(Parameter<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : w.value.data()) v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------------------

template <class T>
Conv3x3<T>::Conv3x3(const std::string& name, std::size_t in_channels, std::size_t out_channels)
    : weight(name + ".weight", {3, 3, in_channels, out_channels}), bias(name + ".bias", {out_channels}) {}

template <class T>
void Conv3x3<T>::init(std::mt19937_64& rng) {
  init_he_normal(weight, 9 * in_channels(), rng);
  bias.value.fill(T{0});
}

template <class T>
BasicTensor<T> Conv3x3<T>::forward(const BasicTensor<T>& x) const {
  return kernels::conv3x3_forward(x, weight.value, bias.value);
}

template <class T>
BasicTensor<T> Conv3x3<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, ParamGrads pg) {
  if (pg == ParamGrads::accumulate) kernels::conv3x3_backward_params(x, grad_out, weight.grad, bias.grad);
  return kernels::conv3x3_backward_input(grad_out, weight.value);
}

template <class T>
void Conv3x3<T>::collect(ParameterRefs<T>& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

// ---------------------------------------------------------------------------

template <class T>
Linear<T>::Linear(const std::string& name, std::size_t in_features, std::size_t out_features)
    : weight(name + ".weight", {in_features, out_features}), bias(name + ".bias", {out_features}) {}

template <class T>
void Linear<T>::init(std::mt19937_64& rng) {
  init_he_normal(weight, in_features(), rng);
  bias.value.fill(T{0});
}

template <class T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x) const {
  return kernels::linear_forward(x, weight.value, bias.value);
}

template <class T>
BasicTensor<T> Linear<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, ParamGrads pg) {
  if (pg == ParamGrads::accumulate) kernels::linear_backward_params(x, grad_out, weight.grad, bias.grad);
  return kernels::linear_backward_input(grad_out, weight.value);
}

template <class T>
void Linear<T>::collect(ParameterRefs<T>& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

// ---------------------------------------------------------------------------

template <class T>
BatchNorm<T>::BatchNorm(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean({channels}, T{0}),
      running_var({channels}, T{1}),
      name_(name) {
  gamma.value.fill(T{1});
}

template <class T>
BasicTensor<T> BatchNorm<T>::forward(const BasicTensor<T>& x, Mode mode, BatchNormCache<T>& cache) const {
  const Index c = gamma.value.size();
  if (x.shape().back() != static_cast<std::size_t>(c))
    throw ValidationError("batch norm " + name_ + ": expected " + std::to_string(c) + " channels, got " +
                          shape_string(x.shape()));
  cache.mode = mode;
  cache.count = x.size() / c;
  if (mode == Mode::train) {
    kernels::channel_moments(x, cache.batch_mean, cache.batch_var);
  } else {
    cache.batch_mean.assign(running_mean.data().begin(), running_mean.data().end());
    cache.batch_var.assign(running_var.data().begin(), running_var.data().end());
  }
  cache.inv_std.resize(c);
  for (Index k = 0; k < c; ++k)
    cache.inv_std[k] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cache.batch_var[k]) + kEpsilon));

  cache.normalized = BasicTensor<T>(x.shape());
  BasicTensor<T> y(x.shape());
  const Index rows = cache.count;
  const T* xp = x.ptr();
  T* np = cache.normalized.ptr();
  T* yp = y.ptr();
  const T* g = gamma.value.ptr();
  const T* b = beta.value.ptr();
  const T* m = cache.batch_mean.data();
  const T* is = cache.inv_std.data();

#pragma omp parallel for schedule(static)
  for (Index r = 0; r < rows; ++r)
    for (Index k = 0; k < c; ++k) {
      const T v = (xp[r * c + k] - m[k]) * is[k];
      np[r * c + k] = v;
      yp[r * c + k] = g[k] * v + b[k];
    }
  return y;
}

template <class T>
BasicTensor<T> BatchNorm<T>::backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out, ParamGrads pg) {
  const Index c = gamma.value.size();
  const Index rows = cache.count;
  const T* gp = grad_out.ptr();
  const T* np = cache.normalized.ptr();

  std::vector<double> sum_g(c, 0.0), sum_gn(c, 0.0);
  for (Index r = 0; r < rows; ++r)
    for (Index k = 0; k < c; ++k) {
      sum_g[k] += gp[r * c + k];
      sum_gn[k] += static_cast<double>(gp[r * c + k]) * np[r * c + k];
    }
  if (pg == ParamGrads::accumulate) {
    for (Index k = 0; k < c; ++k) {
      beta.grad[k] += static_cast<T>(sum_g[k]);
      gamma.grad[k] += static_cast<T>(sum_gn[k]);
    }
  }

  BasicTensor<T> gx(grad_out.shape());
  T* gxp = gx.ptr();
  const T* g = gamma.value.ptr();
  const T* is = cache.inv_std.data();
  if (cache.mode == Mode::eval) {
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < rows; ++r)
      for (Index k = 0; k < c; ++k) gxp[r * c + k] = gp[r * c + k] * g[k] * is[k];
    return gx;
  }

  std::vector<T> mean_g(c), mean_gn(c);
  for (Index k = 0; k < c; ++k) {
    mean_g[k] = static_cast<T>(sum_g[k] / rows);
    mean_gn[k] = static_cast<T>(sum_gn[k] / rows);
  }
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < rows; ++r)
    for (Index k = 0; k < c; ++k)
      gxp[r * c + k] = g[k] * is[k] * (gp[r * c + k] - mean_g[k] - np[r * c + k] * mean_gn[k]);
  return gx;
}

template <class T>
void BatchNorm<T>::absorb(const BatchNormCache<T>& cache) {
  if (cache.mode != Mode::train) return;
  const std::size_t c = gamma.value.size();
  const double unbias = cache.count > 1 ? static_cast<double>(cache.count) / (cache.count - 1) : 1.0;
  for (std::size_t k = 0; k < c; ++k) {
    running_mean[k] = static_cast<T>((1.0 - kMomentum) * running_mean[k] + kMomentum * cache.batch_mean[k]);
    running_var[k] =
        static_cast<T>((1.0 - kMomentum) * running_var[k] + kMomentum * unbias * cache.batch_var[k]);
  }
}

template <class T>
void BatchNorm<T>::collect(ParameterRefs<T>& refs) {
  refs.params.push_back(&gamma);
  refs.params.push_back(&beta);
  refs.buffers.push_back({name_ + ".running_mean", &running_mean});
  refs.buffers.push_back({name_ + ".running_var", &running_var});
}

// ---------------------------------------------------------------------------

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const Index n = x.size();
  const T* xp = x.ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) yp[i] = xp[i] > T{0} ? xp[i] : T{0};
  return y;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
  BasicTensor<T> gx(y.shape());
  const Index n = y.size();
  const T* yp = y.ptr();
  const T* gp = grad_out.ptr();
  T* gxp = gx.ptr();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) gxp[i] = yp[i] > T{0} ? gp[i] : T{0};
  return gx;
}

template <class T>
BasicTensor<T> leaky_relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const Index n = x.size();
  const T slope = static_cast<T>(kLeakySlope);
  const T* xp = x.ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) yp[i] = xp[i] > T{0} ? xp[i] : slope * xp[i];
  return y;
}

template <class T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  BasicTensor<T> gx(x.shape());
  const Index n = x.size();
  const T slope = static_cast<T>(kLeakySlope);
  const T* xp = x.ptr();
  const T* gp = grad_out.ptr();
  T* gxp = gx.ptr();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) gxp[i] = xp[i] > T{0} ? gp[i] : slope * gp[i];
  return gx;
}

template <class T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  const Index n = x.size();
  const T* xp = x.ptr();
  T* yp = y.ptr();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) yp[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(xp[i]))));
  return y;
}

template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
  BasicTensor<T> gx(y.shape());
  const Index n = y.size();
  const T* yp = y.ptr();
  const T* gp = grad_out.ptr();
  T* gxp = gx.ptr();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) gxp[i] = gp[i] * yp[i] * (T{1} - yp[i]);
  return gx;
}

#define TERGAN_INSTANTIATE_LAYERS(T)                                                         \
  template void init_he_normal(Parameter<T>&, std::size_t, std::mt19937_64&);               \
  template class Conv3x3<T>;                                                                  \
  template class Linear<T>;                                                                   \
  template class BatchNorm<T>;                                                                \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> leaky_relu_forward(const BasicTensor<T>&);                          \
  template BasicTensor<T> leaky_relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> sigmoid_forward(const BasicTensor<T>&);                             \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&);

TERGAN_INSTANTIATE_LAYERS(float)
TERGAN_INSTANTIATE_LAYERS(double)

}  // namespace tergan
