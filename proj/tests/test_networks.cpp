#include <doctest.h>

#include "support.hpp"
#include "tergan/losses.hpp"
#include "tergan/model.hpp"
#include "tergan/optimizer.hpp"

using namespace tergan;
using test::random_tensor;

TEST_CASE("default hyperparameters are the published ones") {
  const NetworkSpec s;
  CHECK(s.encoder_channels == std::array<std::size_t, 5>{64, 128, 256, 512, 1024});
  CHECK(s.decoder_channels == std::array<std::size_t, 5>{512, 256, 128, 64, 3});
  CHECK(s.disc_trunk_channels == std::array<std::size_t, 4>{16, 32, 64, 128});
  CHECK(s.disc_trunk_fc == 1024);
  CHECK(s.disc_branch_fc == std::array<std::size_t, 2>{512, 256});
  CHECK(s.embed_disc_channels == std::array<std::size_t, 3>{32, 16, 1});
  CHECK(s.expr_dim == 30);
  CHECK(s.id_dim == 50);
  CHECK(s.num_expressions == 6);
  CHECK(s.num_identities == 80);

  const LossWeights w;
  CHECK(w.lambda == std::array<double, 7>{1, 1, 1, 1, 0.3, 0.3, 0.5});
  CHECK(w.omega1 == std::array<double, 5>{0.5, 0.6, 0.7, 0.88, 0.99});
  CHECK(w.omega2 == w.omega1);

  const AdamConfig a;
  CHECK(a.learning_rate == 0.0002);
  CHECK(OptimizerConfig{}.batch_size == 64);
}

TEST_CASE("network shapes at the published width") {
  const NetworkSpec spec;
  std::mt19937_64 rng(1);
  Encoder<float> enc(spec, spec.expr_dim, "e");
  enc.init(rng);
  const auto x = random_tensor({1, 64, 64, 3}, rng, 0.0, 1.0);
  const auto t = enc.forward(x, Mode::eval);
  CHECK(t.embedding.shape() == Shape{1, 30});
  std::size_t side = 64;
  for (std::size_t l = 0; l < kEncoderBlocks; ++l) {
    side /= 2;
    CHECK(t.features.layers[l].shape() == Shape{1, side, side, spec.encoder_channels[l]});
  }
  Decoder<float> dec(spec, "d");
  dec.init(rng);
  const auto out = dec.forward(random_tensor({1, 80}, rng), Mode::eval).output;
  CHECK(out.shape() == Shape{1, 64, 64, 3});
  for (float v : out.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("discriminator and critic output shapes") {
  const auto spec = test::tiny_spec(5);
  std::mt19937_64 rng(2);
  Discriminator<float> d(spec, "disc");
  d.init(rng);
  const auto o = d.forward(random_tensor({3, 32, 32, 3}, rng, 0.0, 1.0)).output;
  CHECK(o.expr_logits.shape() == Shape{3, spec.num_expressions + 1});
  CHECK(o.id_logits.shape() == Shape{3, 5});
  EmbeddingDiscriminator<float> c(spec, spec.expr_dim, "critic");
  c.init(rng);
  CHECK(c.forward(random_tensor({4, spec.expr_dim}, rng)).logits.shape() == Shape{4, 1});
}

TEST_CASE("the gradient reversal layer is the identity forward and flips gradients exactly") {
  std::mt19937_64 rng(3);
  for (double scale : {1.0, 0.5, 2.0, 0.1}) {
    GradientReversal grl(scale);
    const auto x = random_tensor({4, 7}, rng);
    const auto& y = grl.forward(x);
    CHECK(y == x);
    CHECK(&y == &x);
    const auto g = random_tensor({4, 7}, rng);
    const auto back = grl.backward(g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(back[i] == static_cast<float>(-scale) * g[i]);
  }
}

TEST_CASE("gradient reversal backward against finite differences of the composed function") {
  // f(x) = sum(c * grl(x)^2). Without reversal df/dx = 2 c x; the layer must
  // report exactly -scale times that.
  std::mt19937_64 rng(4);
  const double scale = 0.7;
  GradientReversal grl(scale);
  auto x = random_tensor<double>({3, 5}, rng);
  const auto c = random_tensor<double>({3, 5}, rng);
  auto f = [&](const BasicTensor<double>& in) {
    const auto& y = grl.forward(in);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += c[i] * y[i] * y[i];
    return s;
  };
  BasicTensor<double> upstream(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) upstream[i] = 2 * c[i] * x[i];
  const auto analytic = grl.backward(upstream);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-6, orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double fd = (fp - fm) / (2 * h);
    CHECK(analytic[i] == doctest::Approx(-scale * fd).epsilon(1e-6));
  }
}

TEST_CASE("encoder eval forward is deterministic and batch-independent") {
  const auto spec = test::tiny_spec();
  std::mt19937_64 rng(5);
  Encoder<float> enc(spec, spec.expr_dim, "e");
  enc.init(rng);
  const auto x = random_tensor({3, 32, 32, 3}, rng, 0.0, 1.0);
  const auto a = enc.forward(x, Mode::eval).embedding;
  CHECK(a == enc.forward(x, Mode::eval).embedding);
  const auto single = enc.forward(x.rows(1, 2), Mode::eval).embedding;
  CHECK(test::max_abs_diff(single, a.rows(1, 2)) < 1e-6);
}

TEST_CASE("batch norm absorbs batch statistics into running estimates") {
  BatchNorm<float> bn("bn", 2);
  Tensor x({4, 1, 1, 2}, std::vector<float>{1, 10, 3, 10, 5, 10, 7, 10});
  BatchNormCache<float> cache;
  bn.forward(x, Mode::train, cache);
  CHECK(bn.running_mean[0] == 0.0f);
  bn.absorb(cache);
  CHECK(bn.running_mean[0] == doctest::Approx(0.1 * 4.0));
  CHECK(bn.running_mean[1] == doctest::Approx(0.1 * 10.0));
  // Unbiased variance of {1,3,5,7} is 20/3.
  CHECK(bn.running_var[0] == doctest::Approx(0.9 + 0.1 * 20.0 / 3.0));
}

TEST_CASE("copying encoder weights keeps parameter names") {
  const auto spec = test::tiny_spec();
  std::mt19937_64 rng(6);
  Encoder<float> a(spec, spec.expr_dim, "live"), b(spec, spec.expr_dim, "copy");
  a.init(rng);
  b.copy_weights_from(a);
  auto ra = a.refs(), rb = b.refs();
  REQUIRE(ra.params.size() == rb.params.size());
  for (std::size_t i = 0; i < ra.params.size(); ++i) {
    CHECK(ra.params[i]->value == rb.params[i]->value);
    CHECK(rb.params[i]->name.rfind("copy", 0) == 0);
  }
  Encoder<float> other(test::tiny_spec(), 7, "wrong");
  CHECK_THROWS_AS(b.copy_weights_from(other), ValidationError);
}

TEST_CASE("image batches are validated") {
  Tensor ok({1, 32, 32, 3}, 0.5f);
  CHECK_NOTHROW(validate_image_batch(ok, 32));
  CHECK_THROWS_AS(validate_image_batch(ok, 64), ValidationError);
  ok[0] = 1.5f;
  CHECK_THROWS_AS(validate_image_batch(ok, 32), ValidationError);
}

TEST_CASE("network specs are validated") {
  NetworkSpec s;
  s.image_size = 48;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = NetworkSpec{};
  s.decoder_channels.back() = 4;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_NOTHROW(NetworkSpec{}.scaled(8).validate());
  CHECK(NetworkSpec{}.scaled(8).encoder_channels == std::array<std::size_t, 5>{8, 16, 32, 64, 128});
}
