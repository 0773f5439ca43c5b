#pragma once

#include <random>
#include <string>
#include <vector>

#include "tergan/tensor.hpp"

namespace tergan {

enum class Mode { train, eval };

/// Whether a backward pass accumulates into parameter gradients. Frozen
/// networks propagate input gradients only.
enum class ParamGrads { accumulate, skip };

template <class T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}
  void zero_grad() { grad.fill(T{0}); }
};

/// Non-trainable state that still has to survive a checkpoint.
template <class T>
struct Buffer {
  std::string name;
  BasicTensor<T>* value;
};

template <class T>
struct ParameterRefs {
  std::vector<Parameter<T>*> params;
  std::vector<Buffer<T>> buffers;
};

/// He-scaled zero-mean normal initialisation for weights; biases start at zero.
template <class T>
void init_he_normal(Parameter<T>& w, std::size_t fan_in, std::mt19937_64& rng);

template <class T>
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(const std::string& name, std::size_t in_channels, std::size_t out_channels);

  void init(std::mt19937_64& rng);
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, ParamGrads pg);
  void collect(ParameterRefs<T>& refs);

  std::size_t in_channels() const { return weight.value.dim(2); }
  std::size_t out_channels() const { return weight.value.dim(3); }

  Parameter<T> weight, bias;
};

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in_features, std::size_t out_features);

  void init(std::mt19937_64& rng);
  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, ParamGrads pg);
  void collect(ParameterRefs<T>& refs);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  Parameter<T> weight, bias;
};

template <class T>
struct BatchNormCache {
  Mode mode = Mode::eval;
  BasicTensor<T> normalized;
  std::vector<T> inv_std;
  std::vector<T> batch_mean;
  std::vector<T> batch_var;
  std::size_t count = 0;
};

/// Per-channel normalisation over all non-channel axes.
template <class T>
class BatchNorm {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, BatchNormCache<T>& cache) const;
  BasicTensor<T> backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out, ParamGrads pg);
  /// Folds the batch statistics of a training-mode forward into the running estimates.
  void absorb(const BatchNormCache<T>& cache);
  void collect(ParameterRefs<T>& refs);

  Parameter<T> gamma, beta;
  BasicTensor<T> running_mean, running_var;

 private:
  std::string name_;
};

template <class T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);
/// Uses the forward output as the mask.
template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out);

inline constexpr double kLeakySlope = 0.2;

template <class T>
BasicTensor<T> leaky_relu_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <class T>
BasicTensor<T> sigmoid_forward(const BasicTensor<T>& x);
template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out);

}  // namespace tergan
