#include <doctest.h>

#include <cmath>

#include "loss_oracles.hpp"
#include "support.hpp"
#include "tergan/losses.hpp"

using namespace tergan;
using namespace tergan::test;

TEST_CASE("every loss matches its scalar oracle on random batches") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = random_size(rng, 1, 6), ne = random_size(rng, 2, 6), ni = random_size(rng, 2, 9);
    const auto src = random_output(n, ne, ni, rng), tgt = random_output(n, ne, ni, rng),
               fake = random_output(n, ne, ni, rng);
    const auto ys = random_labels(n, ne, rng), yt = random_labels(n, ni, rng);

    const auto d = discriminator_loss(src, tgt, fake, ys, yt);
    CHECK(d.real_expr == doctest::Approx(ce_oracle(src.expr_logits, ys)).epsilon(1e-5));
    CHECK(d.real_id == doctest::Approx(ce_oracle(tgt.id_logits, yt)).epsilon(1e-5));
    CHECK(d.fake == doctest::Approx(ce_oracle(fake.expr_logits, std::vector<int>(n, static_cast<int>(ne)))).epsilon(1e-5));

    const auto g = generator_adv_loss(fake, ys, yt);
    CHECK(g.expr == doctest::Approx(ce_oracle(fake.expr_logits, ys)).epsilon(1e-5));
    CHECK(g.id == doctest::Approx(ce_oracle(fake.id_logits, yt)).epsilon(1e-5));

    const auto lr = random_tensor<double>({n, 1}, rng, -4, 4), lf = random_tensor<double>({n, 1}, rng, -4, 4);
    const double consist = 0.5 * (bce_oracle(lr, 1.0) + bce_oracle(lf, 0.0));
    CHECK(expression_consistency_loss(lr, lf).value == doctest::Approx(consist).epsilon(1e-5));
    CHECK(identity_consistency_loss(lr, lf).value == doctest::Approx(consist).epsilon(1e-5));

    const auto a = random_tensor<double>({n, 4, 4, 3}, rng, 0, 1), b = random_tensor<double>({n, 4, 4, 3}, rng, 0, 1);
    CHECK(pixel_recon_loss(a, b).value == doctest::Approx(l1_oracle(a, b)).epsilon(1e-5));

    const auto s1 = random_stack(n, rng), s2 = random_stack(n, rng);
    std::array<double, 5> omega;
    for (auto& w : omega) w = std::uniform_real_distribution<double>(0, 1)(rng);
    double fm = 0;
    for (std::size_t l = 0; l < kEncoderBlocks; ++l) fm += omega[l] * l1_oracle(s1.layers[l], s2.layers[l]);
    CHECK(feature_match_loss(s1, s2, omega).value == doctest::Approx(fm).epsilon(1e-5));
  }
}

TEST_CASE("the acceptance sweep agrees with the per-assertion oracles") {
  CHECK(loss_oracle_sweep(21, 120) < 1e-5);
}

TEST_CASE("closed-form loss values") {
  // Zero logits: uniform over 7 expression(+fake) classes and 20 identities.
  const std::size_t n = 3;
  DiscriminatorOutput<double> zero{BasicTensor<double>({n, 7}), BasicTensor<double>({n, 20})};
  const std::vector<int> ys{0, 3, 5}, yt{1, 7, 19};
  const auto d = discriminator_loss(zero, zero, zero, ys, yt);
  CHECK(std::fabs(d.value() - (std::log(7.0) + std::log(20.0) + std::log(7.0))) < 1e-6);

  const BasicTensor<double> z({n, 1});
  CHECK(std::fabs(consistency_loss(z, z).value - std::log(2.0)) < 1e-6);

  FeatureStack<double> a, b;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    a.layers[l] = BasicTensor<double>({1, 2, 2, 2}, 0.25);
    b.layers[l] = BasicTensor<double>({1, 2, 2, 2}, 1.25);
  }
  const LossWeights w;
  // 0.5 + 0.6 + 0.7 + 0.88 + 0.99
  CHECK(std::fabs(feature_match_loss(a, b, w.omega1).value - 3.67) < 1e-6);
  CHECK(std::fabs(feature_match_loss(b, a, w.omega2).value - 3.67) < 1e-6);
}

TEST_CASE("loss gradients match finite differences of the loss value") {
  std::mt19937_64 rng(22);
  auto check_fd = [](auto&& f, BasicTensor<double>& x, const BasicTensor<double>& analytic) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-6, o = x[i];
      x[i] = o + h;
      const double fp = f();
      x[i] = o - h;
      const double fm = f();
      x[i] = o;
      CHECK(analytic[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5).scale(1e-6));
    }
  };
  auto logits = random_tensor<double>({4, 5}, rng, -3, 3);
  const auto y = random_labels(4, 5, rng);
  const auto ce = softmax_cross_entropy(logits, y);
  check_fd([&] { return softmax_cross_entropy(logits, y).value; }, logits, ce.grad);

  auto bl = random_tensor<double>({5, 1}, rng, -3, 3);
  const auto bce = binary_cross_entropy(bl, 1.0);
  check_fd([&] { return binary_cross_entropy(bl, 1.0).value; }, bl, bce.grad);

  auto gen = random_tensor<double>({2, 3, 3, 3}, rng, 0, 1);
  const auto ref = random_tensor<double>({2, 3, 3, 3}, rng, 0, 1);
  const auto l1 = pixel_recon_loss(gen, ref);
  check_fd([&] { return pixel_recon_loss(gen, ref).value; }, gen, l1.grad);
}

TEST_CASE("the weighted total follows the term order of the objective") {
  LossReport r;
  r.if_ = 1;
  r.ef = 2;
  r.irec = 3;
  r.erec = 4;
  r.id_consist = 5;
  r.expr_consist = 6;
  r.d_real_expr = 0.5;
  r.d_real_id = 0.25;
  r.d_fake = 0.125;
  r.g_expr = 1;
  r.g_id = 2;
  LossWeights w;
  const double adv = 0.5 + 0.25 + 0.125 + 1 + 2;
  CHECK(total_loss(r, w) == doctest::Approx(1 + 2 + 3 + 4 + 0.3 * 5 + 0.3 * 6 + 0.5 * adv));
  w.lambda = {2, 0, 0, 0, 0, 0, 0};
  CHECK(total_loss(r, w) == doctest::Approx(2.0));
}

TEST_CASE("a non-finite term is reported by name") {
  LossReport r;
  r.erec = std::nan("");
  try {
    total_loss(r, LossWeights{});
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(e.term == "erec");
    CHECK(std::string(e.what()).find("erec") != std::string::npos);
  }
  r.erec = 0;
  r.id_consist = INFINITY;
  CHECK_THROWS_AS(total_loss(r, LossWeights{}), DivergenceError);
}

TEST_CASE("loss inputs are validated") {
  const BasicTensor<double> logits({2, 3});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0, 3}), ValidationError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, std::vector<int>{0}), ValidationError);
  // A real image labelled with the fake class is rejected.
  DiscriminatorOutput<double> o{BasicTensor<double>({1, 3}), BasicTensor<double>({1, 2})};
  CHECK_THROWS_AS(discriminator_loss(o, o, o, std::vector<int>{2}, std::vector<int>{0}), ValidationError);
  LossWeights w;
  w.lambda[3] = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}
