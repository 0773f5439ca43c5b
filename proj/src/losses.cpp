#include "tergan/losses.hpp"

#include <algorithm>
#include <cmath>

namespace tergan {
namespace {

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t classes, const char* what) {
  if (labels.size() != batch)
    throw ValidationError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for batch of " +
                          std::to_string(batch));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ValidationError(std::string(what) + ": label " + std::to_string(y) + " outside [0," +
                            std::to_string(classes - 1) + "]");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void LossWeights::validate() const {
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (!(lambda[i] >= 0.0) || !std::isfinite(lambda[i]))
      throw ConfigError("weights.lambda[" + std::to_string(i) + "] must be finite and >= 0");
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(omega1[i] >= 0.0) || !std::isfinite(omega1[i]))
      throw ConfigError("weights.omega1[" + std::to_string(i) + "] must be finite and >= 0");
    if (!(omega2[i] >= 0.0) || !std::isfinite(omega2[i]))
      throw ConfigError("weights.omega2[" + std::to_string(i) + "] must be finite and >= 0");
  }
}

std::vector<std::pair<std::string, double>> LossReport::parts() const {
  return {{"d_real_expr", d_real_expr}, {"d_real_id", d_real_id}, {"d_fake", d_fake},
          {"g_expr", g_expr},           {"g_id", g_id},           {"expr_consist", expr_consist},
          {"id_consist", id_consist},   {"irec", irec},           {"erec", erec},
          {"ef", ef},                   {"if", if_}};
}

template <class T>
LossGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ValidationError("cross entropy expects [N,C] logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  check_labels(labels, n, c, "cross entropy");
  LossGrad<T> out;
  out.grad = BasicTensor<T>(logits.shape());
  std::vector<double> p(c);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = logits.ptr() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      p[k] = std::exp(static_cast<double>(row[k]) - mx);
      z += p[k];
    }
    total += std::log(z) + mx - static_cast<double>(row[labels[r]]);
    for (std::size_t k = 0; k < c; ++k) {
      const double g = p[k] / z - (static_cast<int>(k) == labels[r] ? 1.0 : 0.0);
      out.grad[r * c + k] = static_cast<T>(g / static_cast<double>(n));
    }
  }
  out.value = total / static_cast<double>(n);
  return out;
}

template <class T>
LossGrad<T> binary_cross_entropy(const BasicTensor<T>& logits, double target) {
  const std::size_t n = logits.size();
  if (n == 0) throw ValidationError("binary cross entropy on empty batch");
  LossGrad<T> out;
  out.grad = BasicTensor<T>(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = logits[i];
    total += softplus(l) - target * l;
    out.grad[i] = static_cast<T>((sigmoid(l) - target) / static_cast<double>(n));
  }
  out.value = total / static_cast<double>(n);
  return out;
}

template <class T>
DiscriminatorLossResult<T> discriminator_loss(const DiscriminatorOutput<T>& d_real_src,
                                              const DiscriminatorOutput<T>& d_real_tgt,
                                              const DiscriminatorOutput<T>& d_fake,
                                              std::span<const int> source_expressions,
                                              std::span<const int> target_identities) {
  const std::size_t n = d_fake.expr_logits.dim(0);
  if (d_real_src.expr_logits.dim(0) != n || d_real_tgt.id_logits.dim(0) != n)
    throw ValidationError("discriminator loss: batch sizes disagree");
  const int fake_class = static_cast<int>(d_fake.expr_logits.dim(1)) - 1;
  const std::vector<int> fake_labels(n, fake_class);
  // Real images must never be assigned the fake class.
  check_labels(source_expressions, n, d_real_src.expr_logits.dim(1) - 1, "discriminator loss (expression)");

  DiscriminatorLossResult<T> r;
  auto e = softmax_cross_entropy(d_real_src.expr_logits, source_expressions);
  auto i = softmax_cross_entropy(d_real_tgt.id_logits, target_identities);
  auto f = softmax_cross_entropy(d_fake.expr_logits, std::span<const int>(fake_labels));
  r.real_expr = e.value;
  r.real_id = i.value;
  r.fake = f.value;
  r.grad_real_src_expr = std::move(e.grad);
  r.grad_real_tgt_id = std::move(i.grad);
  r.grad_fake_expr = std::move(f.grad);
  return r;
}

template <class T>
GeneratorAdvLossResult<T> generator_adv_loss(const DiscriminatorOutput<T>& d_fake,
                                             std::span<const int> source_expressions,
                                             std::span<const int> target_identities) {
  const std::size_t n = d_fake.expr_logits.dim(0);
  check_labels(source_expressions, n, d_fake.expr_logits.dim(1) - 1, "generator loss (expression)");
  GeneratorAdvLossResult<T> r;
  auto e = softmax_cross_entropy(d_fake.expr_logits, source_expressions);
  auto i = softmax_cross_entropy(d_fake.id_logits, target_identities);
  r.expr = e.value;
  r.id = i.value;
  r.grad_expr = std::move(e.grad);
  r.grad_id = std::move(i.grad);
  return r;
}

template <class T>
ConsistencyLossResult<T> consistency_loss(const BasicTensor<T>& logit_real, const BasicTensor<T>& logit_fake) {
  if (logit_real.size() != logit_fake.size())
    throw ValidationError("consistency loss: real and generated batches differ in size");
  auto real = binary_cross_entropy(logit_real, 1.0);
  auto fake = binary_cross_entropy(logit_fake, 0.0);
  ConsistencyLossResult<T> r;
  r.value = 0.5 * (real.value + fake.value);
  r.grad_real = std::move(real.grad);
  r.grad_fake = std::move(fake.grad);
  for (auto& g : r.grad_real.data()) g *= T(0.5);
  for (auto& g : r.grad_fake.data()) g *= T(0.5);
  return r;
}

template <class T>
LossGrad<T> pixel_recon_loss(const BasicTensor<T>& generated, const BasicTensor<T>& reference) {
  if (generated.shape() != reference.shape())
    throw ValidationError("reconstruction loss: shape " + shape_string(generated.shape()) + " vs " +
                          shape_string(reference.shape()));
  if (generated.empty()) throw ValidationError("reconstruction loss on empty images");
  const std::size_t n = generated.size();
  LossGrad<T> out;
  out.grad = BasicTensor<T>(generated.shape());
  const T inv = static_cast<T>(1.0 / static_cast<double>(n));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(generated[i]) - static_cast<double>(reference[i]);
    total += std::abs(d);
    out.grad[i] = d > 0 ? inv : (d < 0 ? -inv : T{0});
  }
  out.value = total / static_cast<double>(n);
  return out;
}

template <class T>
FeatureMatchResult<T> feature_match_loss(const FeatureStack<T>& generated, const FeatureStack<T>& reference,
                                         std::span<const double> omega) {
  if (omega.size() != kEncoderBlocks) throw ValidationError("feature matching needs five layer weights");
  FeatureMatchResult<T> r;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    auto lg = pixel_recon_loss(generated.layers[l], reference.layers[l]);
    r.value += omega[l] * lg.value;
    for (auto& g : lg.grad.data()) g = static_cast<T>(g * omega[l]);
    r.grad[l] = std::move(lg.grad);
  }
  return r;
}

void require_finite(const std::string& term, double value) {
  if (!std::isfinite(value)) throw DivergenceError(term, "loss term '" + term + "' is not finite");
}

double total_loss(const LossReport& r, const LossWeights& w) {
  for (const auto& [name, value] : r.parts()) require_finite(name, value);
  using W = LossWeights;
  return w[W::kIdFeature] * r.if_ + w[W::kExprFeature] * r.ef + w[W::kIdRecon] * r.irec +
         w[W::kExprRecon] * r.erec + w[W::kIdConsistency] * r.id_consist +
         w[W::kExprConsistency] * r.expr_consist + w[W::kAdversarial] * r.adversarial();
}

#define TERGAN_INSTANTIATE_LOSSES(T)                                                                        \
  template LossGrad<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);                  \
  template LossGrad<T> binary_cross_entropy(const BasicTensor<T>&, double);                                 \
  template DiscriminatorLossResult<T> discriminator_loss(const DiscriminatorOutput<T>&,                     \
                                                         const DiscriminatorOutput<T>&,                     \
                                                         const DiscriminatorOutput<T>&, std::span<const int>, \
                                                         std::span<const int>);                             \
  template GeneratorAdvLossResult<T> generator_adv_loss(const DiscriminatorOutput<T>&, std::span<const int>, \
                                                        std::span<const int>);                              \
  template ConsistencyLossResult<T> consistency_loss(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template LossGrad<T> pixel_recon_loss(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template FeatureMatchResult<T> feature_match_loss(const FeatureStack<T>&, const FeatureStack<T>&,         \
                                                    std::span<const double>);

TERGAN_INSTANTIATE_LOSSES(float)
TERGAN_INSTANTIATE_LOSSES(double)

}  // namespace tergan
