#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "tergan/networks.hpp"

namespace tergan {

/// Weights of the combined objective. Indices follow the order of the terms in
/// the weighted sum: identity-feature, expression-feature, identity
/// reconstruction, expression reconstruction, identity consistency, expression
/// consistency, adversarial.
struct LossWeights {
  enum Term : std::size_t {
    kIdFeature = 0,
    kExprFeature,
    kIdRecon,
    kExprRecon,
    kIdConsistency,
    kExprConsistency,
    kAdversarial,
  };

  std::array<double, 7> lambda{1.0, 1.0, 1.0, 1.0, 0.3, 0.3, 0.5};
  std::array<double, 5> omega1{0.5, 0.6, 0.7, 0.88, 0.99};  // expression-feature layers
  std::array<double, 5> omega2{0.5, 0.6, 0.7, 0.88, 0.99};  // identity-feature layers

  double operator[](Term t) const { return lambda[t]; }
  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Every scalar logged per adversarial step.
struct LossReport {
  double d_real_expr = 0, d_real_id = 0, d_fake = 0;
  double g_expr = 0, g_id = 0;
  double expr_consist = 0, id_consist = 0;
  double irec = 0, erec = 0;
  double ef = 0, if_ = 0;
  double total = 0;

  double adversarial() const { return d_real_expr + d_real_id + d_fake + g_expr + g_id; }

  /// (name, value) pairs in a fixed order, excluding `total`.
  std::vector<std::pair<std::string, double>> parts() const;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

template <class T>
struct LossGrad {
  double value = 0.0;
  BasicTensor<T> grad;
};

/// Mean softmax cross-entropy of logits [N, C] against integer labels.
template <class T>
LossGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

/// Mean binary cross-entropy of logits [N, 1] against a constant target.
template <class T>
LossGrad<T> binary_cross_entropy(const BasicTensor<T>& logits, double target);

template <class T>
struct DiscriminatorLossResult {
  double real_expr = 0, real_id = 0, fake = 0;
  BasicTensor<T> grad_real_src_expr;  // w.r.t. d_real_src.expr_logits
  BasicTensor<T> grad_real_tgt_id;    // w.r.t. d_real_tgt.id_logits
  BasicTensor<T> grad_fake_expr;      // w.r.t. d_fake.expr_logits
  double value() const { return real_expr + real_id + fake; }
};

/// Negated discriminator objective: classify source expressions, target
/// identities, and label generated images with the extra fake class.
template <class T>
DiscriminatorLossResult<T> discriminator_loss(const DiscriminatorOutput<T>& d_real_src,
                                              const DiscriminatorOutput<T>& d_real_tgt,
                                              const DiscriminatorOutput<T>& d_fake,
                                              std::span<const int> source_expressions,
                                              std::span<const int> target_identities);

template <class T>
struct GeneratorAdvLossResult {
  double expr = 0, id = 0;
  BasicTensor<T> grad_expr, grad_id;
  double value() const { return expr + id; }
};

/// Negated generator objective: the discriminator should assign the generated
/// image the source expression and the target identity.
template <class T>
GeneratorAdvLossResult<T> generator_adv_loss(const DiscriminatorOutput<T>& d_fake,
                                             std::span<const int> source_expressions,
                                             std::span<const int> target_identities);

template <class T>
struct ConsistencyLossResult {
  double value = 0;
  BasicTensor<T> grad_real, grad_fake;
};

/// Two-class cross-entropy over critic logits: embeddings of real inputs are
/// class 1 (target 1), embeddings of generated images class 0.
template <class T>
ConsistencyLossResult<T> consistency_loss(const BasicTensor<T>& logit_real, const BasicTensor<T>& logit_fake);

template <class T>
ConsistencyLossResult<T> expression_consistency_loss(const BasicTensor<T>& logit_real,
                                                     const BasicTensor<T>& logit_fake) {
  return consistency_loss(logit_real, logit_fake);
}

template <class T>
ConsistencyLossResult<T> identity_consistency_loss(const BasicTensor<T>& logit_real,
                                                   const BasicTensor<T>& logit_fake) {
  return consistency_loss(logit_real, logit_fake);
}

/// Mean absolute difference; gradient is w.r.t. `generated`.
template <class T>
LossGrad<T> pixel_recon_loss(const BasicTensor<T>& generated, const BasicTensor<T>& reference);

template <class T>
struct FeatureMatchResult {
  double value = 0;
  std::array<BasicTensor<T>, kEncoderBlocks> grad;  // w.r.t. the generated stack
};

/// Sum over layers of omega[l] * mean|generated_l - reference_l|.
template <class T>
FeatureMatchResult<T> feature_match_loss(const FeatureStack<T>& generated, const FeatureStack<T>& reference,
                                         std::span<const double> omega);

/// Weighted sum of the parts of `report`; throws DivergenceError naming the
/// first non-finite part.
double total_loss(const LossReport& report, const LossWeights& weights);

/// Throws DivergenceError if `value` is not finite.
void require_finite(const std::string& term, double value);

}  // namespace tergan
