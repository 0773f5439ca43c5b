#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "support.hpp"
#include "tergan/model.hpp"

namespace tergan::test {

struct TermCheck {
  std::string term;
  double worst_relative_error = 0.0;
  std::string worst_at;
  std::size_t probes = 0;
};

/// Central-difference check of every objective term against the analytic
/// gradients left by the reconstruction and consistency passes, in double
/// precision on a tiny network. Consistency terms are checked with the
/// generated image held fixed, as in training; the encoder receives them
/// through the gradient reversal, so its analytic gradient is negated.
inline std::vector<TermCheck> check_objective_gradients(std::uint64_t seed = 3) {
  const NetworkSpec spec = tiny_spec(4);
  Model<double> m(spec);
  std::mt19937_64 rng(seed);
  m.init(rng);
  // Frozen copies get their own weights so feature terms are non-trivial.
  m.frozen_expr_encoder.init(rng);
  m.frozen_id_encoder.init(rng);

  PairBatch<double> b;
  b.source = random_tensor<double>({3, 32, 32, 3}, rng, 0.05, 0.95);
  b.target = random_tensor<double>({3, 32, 32, 3}, rng, 0.05, 0.95);
  b.source_expressions = {0, 3, 5};
  b.target_identities = {1, 2, 3};

  const LossWeights none{{0, 0, 0, 0, 0, 0, 0}};
  const auto xbar = reconstruction_pass(m, b, none).generated;

  struct Term {
    std::string name;
    std::size_t lambda;
    std::vector<std::string> prefixes;  // parameter groups under test
  };
  const std::vector<Term> terms{
      {"identity feature", LossWeights::kIdFeature, {"expr_encoder", "id_encoder", "decoder"}},
      {"expression feature", LossWeights::kExprFeature, {"expr_encoder", "id_encoder", "decoder"}},
      {"identity reconstruction", LossWeights::kIdRecon, {"expr_encoder", "id_encoder", "decoder"}},
      {"expression reconstruction", LossWeights::kExprRecon, {"expr_encoder", "id_encoder", "decoder"}},
      {"identity consistency", LossWeights::kIdConsistency, {"id_encoder", "id_critic"}},
      {"expression consistency", LossWeights::kExprConsistency, {"expr_encoder", "expr_critic"}},
      {"generator adversarial", LossWeights::kAdversarial, {"expr_encoder", "id_encoder", "decoder"}},
      {"discriminator", LossWeights::kAdversarial, {"discriminator"}},
  };

  std::vector<TermCheck> out;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& term = terms[t];
    LossWeights w = none;
    w.lambda[term.lambda] = 1.0;
    const bool consistency = term.lambda == LossWeights::kIdConsistency || term.lambda == LossWeights::kExprConsistency;
    auto objective = [&]() -> double {
      if (consistency) {
        const auto c = consistency_pass(m, b, xbar, w, GradientReversal(1.0));
        return term.lambda == LossWeights::kIdConsistency ? c.id_consist : c.expr_consist;
      }
      const auto r = reconstruction_pass(m, b, w).report;
      switch (t) {
        case 0: return r.if_;
        case 1: return r.ef;
        case 2: return r.irec;
        case 3: return r.erec;
        case 6: return r.g_expr + r.g_id;
        default: return r.d_real_expr + r.d_real_id + r.d_fake;
      }
    };

    auto refs = m.all_refs();
    for (auto* p : refs.params) p->zero_grad();
    if (consistency)
      consistency_pass(m, b, xbar, w, GradientReversal(1.0));
    else
      reconstruction_pass(m, b, w);
    std::vector<BasicTensor<double>> analytic;
    for (auto* p : refs.params) analytic.push_back(p->grad);

    TermCheck check{term.name, 0.0, "", 0};
    for (std::size_t pi = 0; pi < refs.params.size(); ++pi) {
      auto* p = refs.params[pi];
      bool selected = false;
      for (const auto& prefix : term.prefixes) selected |= p->name.rfind(prefix + ".", 0) == 0;
      if (!selected) continue;
      const bool reversed = consistency && p->name.find("encoder") != std::string::npos;
      for (std::size_t k : {std::size_t{0}, p->value.size() / 2, p->value.size() - 1}) {
        const double orig = p->value[k], h = 1e-6;
        p->value[k] = orig + h;
        const double fp = objective();
        p->value[k] = orig - h;
        const double fm = objective();
        p->value[k] = orig;
        const double fd = (fp - fm) / (2 * h);
        const double an = reversed ? -analytic[pi][k] : analytic[pi][k];
        const double rel = std::fabs(fd - an) / std::max(1e-6, std::fabs(fd) + std::fabs(an));
        ++check.probes;
        if (rel > check.worst_relative_error) {
          check.worst_relative_error = rel;
          check.worst_at = p->name + "[" + std::to_string(k) + "]";
        }
      }
    }
    out.push_back(check);
  }
  return out;
}

}  // namespace tergan::test
