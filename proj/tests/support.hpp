#pragma once

#include <cmath>
#include <random>

#include "tergan/config.hpp"
#include "tergan/networks.hpp"
#include "tergan/tensor.hpp"

namespace tergan::test {

template <class T = float>
BasicTensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

inline std::size_t random_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::vector<int> out(n);
  std::uniform_int_distribution<int> u(0, static_cast<int>(classes) - 1);
  for (auto& v : out) v = u(rng);
  return out;
}

/// Reduced network used across the tests: 32-pixel images, channels / 8.
inline NetworkSpec tiny_spec(std::size_t identities = 4) {
  NetworkSpec s = NetworkSpec{}.scaled(8);
  s.image_size = 32;
  s.num_identities = identities;
  return s;
}

/// Small, fast run config over a synthetic manifest.
inline RunConfig tiny_config(const std::string& output_dir) {
  RunConfig c = desk_config();
  c.network = tiny_spec(6);
  c.data.synth_identities = 6;
  c.data.folds = 3;
  c.data.held_out_fold = 0;
  c.optimizer.batch_size = 4;
  c.stages = {3, 3, 4};
  c.checkpoint_every = 2;
  c.output_dir = output_dir;
  return c;
}

template <class T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace tergan::test
