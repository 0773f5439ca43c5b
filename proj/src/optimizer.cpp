#include "tergan/optimizer.hpp"

#include <cmath>

namespace tergan {

template <class T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) throw ValidationError("optimizer bound to a different parameter list");
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = cfg_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (p.value.shape() != m_[i].shape()) throw ValidationError("optimizer moment shape mismatch for " + p.name);
    T* w = p.value.ptr();
    const T* g = p.grad.ptr();
    T* m = m_[i].ptr();
    T* v = v_[i].ptr();
    const auto n = static_cast<std::ptrdiff_t>(p.value.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      const double gk = g[k];
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(w[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + cfg_.epsilon));
    }
  }
}

template <class T>
void Adam<T>::restore(std::uint64_t steps, std::vector<BasicTensor<T>> m, std::vector<BasicTensor<T>> v) {
  if (m.size() != v.size()) throw ValidationError("optimizer moment lists differ in length");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace tergan
