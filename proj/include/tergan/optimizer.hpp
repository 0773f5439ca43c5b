#pragma once

#include <cstdint>
#include <vector>

#include "tergan/layers.hpp"

namespace tergan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adaptive-moment optimiser over a fixed, ordered parameter list. Moments
/// are bound to parameters by position in that list.
template <class T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Applies one update from the accumulated gradients.
  void step(const std::vector<Parameter<T>*>& params);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::vector<BasicTensor<T>>& first_moments() { return m_; }
  std::vector<BasicTensor<T>>& second_moments() { return v_; }
  const std::vector<BasicTensor<T>>& first_moments() const { return m_; }
  const std::vector<BasicTensor<T>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v);

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<BasicTensor<T>> m_, v_;
};

template <class T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace tergan
