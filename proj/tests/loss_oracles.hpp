#pragma once

#include <cmath>
#include <vector>

#include "support.hpp"
#include "tergan/losses.hpp"

namespace tergan::test {

// Scalar oracles written directly from the definitions, without the
// max-shift used by the library.
inline double ce_oracle(const BasicTensor<double>& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(logits[i * c + k]);
    s += -std::log(std::exp(logits[i * c + labels[i]]) / z);
  }
  return s / static_cast<double>(n);
}

inline double bce_oracle(const BasicTensor<double>& logits, double target) {
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    s += -(target * std::log(p) + (1 - target) * std::log(1 - p));
  }
  return s / static_cast<double>(logits.size());
}

inline double l1_oracle(const BasicTensor<double>& a, const BasicTensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline DiscriminatorOutput<double> random_output(std::size_t n, std::size_t ne, std::size_t ni, std::mt19937_64& rng) {
  return {random_tensor<double>({n, ne + 1}, rng, -4, 4), random_tensor<double>({n, ni}, rng, -4, 4)};
}

inline FeatureStack<double> random_stack(std::size_t n, std::mt19937_64& rng) {
  FeatureStack<double> s;
  std::size_t side = 8;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    s.layers[l] = random_tensor<double>({n, side, side, l + 1}, rng);
    side = std::max<std::size_t>(1, side / 2);
  }
  return s;
}


/// Largest relative disagreement between every loss and its oracle over
/// `trials` random small batches.
inline double loss_oracle_sweep(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  auto note = [&](double got, double want) {
    worst = std::max(worst, std::fabs(got - want) / std::max(1.0, std::fabs(want)));
  };
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t n = random_size(rng, 1, 6), ne = random_size(rng, 2, 6), ni = random_size(rng, 2, 9);
    const auto src = random_output(n, ne, ni, rng), tgt = random_output(n, ne, ni, rng),
               fake = random_output(n, ne, ni, rng);
    const auto ys = random_labels(n, ne, rng), yt = random_labels(n, ni, rng);
    const auto d = discriminator_loss(src, tgt, fake, ys, yt);
    note(d.real_expr, ce_oracle(src.expr_logits, ys));
    note(d.real_id, ce_oracle(tgt.id_logits, yt));
    note(d.fake, ce_oracle(fake.expr_logits, std::vector<int>(n, static_cast<int>(ne))));
    const auto g = generator_adv_loss(fake, ys, yt);
    note(g.expr, ce_oracle(fake.expr_logits, ys));
    note(g.id, ce_oracle(fake.id_logits, yt));
    const auto lr = random_tensor<double>({n, 1}, rng, -4, 4), lf = random_tensor<double>({n, 1}, rng, -4, 4);
    const double consist = 0.5 * (bce_oracle(lr, 1.0) + bce_oracle(lf, 0.0));
    note(expression_consistency_loss(lr, lf).value, consist);
    note(identity_consistency_loss(lr, lf).value, consist);
    const auto a = random_tensor<double>({n, 4, 4, 3}, rng, 0, 1), b = random_tensor<double>({n, 4, 4, 3}, rng, 0, 1);
    note(pixel_recon_loss(a, b).value, l1_oracle(a, b));
    const auto s1 = random_stack(n, rng), s2 = random_stack(n, rng);
    std::array<double, 5> omega;
    for (auto& w : omega) w = std::uniform_real_distribution<double>(0, 1)(rng);
    double fm = 0;
    for (std::size_t l = 0; l < kEncoderBlocks; ++l) fm += omega[l] * l1_oracle(s1.layers[l], s2.layers[l]);
    note(feature_match_loss(s1, s2, omega).value, fm);
  }
  return worst;
}

}  // namespace tergan::test
