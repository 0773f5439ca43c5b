#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "tergan/checkpoint.hpp"
#include "tergan/errors.hpp"
#include "tergan/trainer.hpp"

using namespace tergan;
namespace fs = std::filesystem;

namespace {

std::vector<Tensor> values(const std::vector<Parameter<float>*>& params) {
  std::vector<Tensor> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

std::vector<Tensor> values(const ParameterRefs<float>& refs) { return values(refs.params); }

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tergan-trainer-" + name);
  fs::remove_all(p);
  return p;
}

/// State that has finished both pretraining stages, plus a batch.
struct AdversarialFixture {
  RunConfig config = test::tiny_config(scratch("fixture").string());
  TrainingData data{resolve_dataset(config.data, config.network.image_size), config.network.image_size, 0};
  TrainState state = initial_state(config);
  PairBatch<float> batch;

  AdversarialFixture() {
    finish_stage(state, config.optimizer.adam);
    finish_stage(state, config.optimizer.adam);
    batch = sample_pair_batch(state, data, 4, 1.0);
  }
};

}  // namespace

TEST_CASE("zero step budgets leave the initial parameters untouched") {
  auto cfg = test::tiny_config(scratch("zero").string());
  cfg.stages = {0, 0, 0};
  auto fresh = initial_state(cfg);
  auto result = train(cfg);
  CHECK(result.state.global_step == 0);
  CHECK(result.state.stage == Stage::adversarial);
  CHECK(!result.state.trained());
  CHECK(values(result.state.model.generator_refs()) == values(fresh.model.generator_refs()));
  CHECK(values(result.state.model.frozen_expr_encoder.refs()) == values(fresh.model.expr_encoder.refs()));
  CHECK(fs::exists(checkpoint_path(cfg)));
}

TEST_CASE("stage-one encoders are frozen once pretraining ends") {
  auto cfg = test::tiny_config(scratch("freeze").string());
  TrainingData data(resolve_dataset(cfg.data, cfg.network.image_size), cfg.network.image_size, 0);
  auto state = initial_state(cfg);
  pretrain_expression_encoder(state, data, cfg, 3);
  CHECK(state.stage == Stage::pretrain_id);
  CHECK(!state.model.expr_head.has_value());
  CHECK(values(state.model.frozen_expr_encoder.refs()) == values(state.model.expr_encoder.refs()));
  pretrain_identity_encoder(state, data, cfg, 3);
  CHECK(state.stage == Stage::adversarial);
  CHECK(!state.model.id_head.has_value());

  const auto frozen_e = values(state.model.frozen_expr_encoder.refs());
  const auto frozen_i = values(state.model.frozen_id_encoder.refs());
  const auto live_e = values(state.model.expr_encoder.refs());
  for (int i = 0; i < 3; ++i)
    adversarial_step(state, sample_pair_batch(state, data, 4, 1.0), cfg.weights, cfg.grl_scale);
  CHECK(values(state.model.frozen_expr_encoder.refs()) == frozen_e);
  CHECK(values(state.model.frozen_id_encoder.refs()) == frozen_i);
  CHECK_FALSE(values(state.model.expr_encoder.refs()) == live_e);
}

TEST_CASE("pretraining updates only its own encoder") {
  auto cfg = test::tiny_config(scratch("pretrain").string());
  TrainingData data(resolve_dataset(cfg.data, cfg.network.image_size), cfg.network.image_size, 0);
  auto state = initial_state(cfg);
  const auto id_before = values(state.model.id_encoder.refs());
  const auto expr_before = values(state.model.expr_encoder.refs());
  const auto batch = sample_classifier_batch(state, data, 4, Stage::pretrain_expr);
  const auto stats = pretrain_step(state, Stage::pretrain_expr, batch);
  CHECK(std::isfinite(stats.loss));
  CHECK(stats.accuracy >= 0.0);
  CHECK(values(state.model.id_encoder.refs()) == id_before);
  CHECK_FALSE(values(state.model.expr_encoder.refs()) == expr_before);
  // Held-out identities never reach the classifier batches.
  for (int i = 0; i < 20; ++i) {
    const auto b = sample_classifier_batch(state, data, 4, Stage::pretrain_id);
    for (int id : b.labels) CHECK(data.manifest().folds[id] != 0);
  }
}

TEST_CASE("updates are skipped for networks whose loss weights are zero") {
  AdversarialFixture f;
  auto& m = f.state.model;
  const auto disc = values(discriminator_params(m));
  const auto ec = values(m.expr_critic.refs()), ic = values(m.id_critic.refs());
  LossWeights w = f.config.weights;
  w.lambda[LossWeights::kAdversarial] = 0;
  w.lambda[LossWeights::kExprConsistency] = 0;
  w.lambda[LossWeights::kIdConsistency] = 0;
  const auto gen = values(generator_params(m));
  adversarial_step(f.state, f.batch, w, 1.0);
  CHECK(values(discriminator_params(m)) == disc);
  CHECK(values(m.expr_critic.refs()) == ec);
  CHECK(values(m.id_critic.refs()) == ic);
  CHECK_FALSE(values(generator_params(m)) == gen);

  LossWeights none = f.config.weights;
  none.lambda = {0, 0, 0, 0, 0, 0, 0};
  const auto all = values(m.all_refs());
  const auto report = adversarial_step(f.state, f.batch, none, 1.0);
  CHECK(values(m.all_refs()) == all);
  CHECK(report.total == 0.0);
}

TEST_CASE("critics are untouched when both consistency weights are zero") {
  AdversarialFixture f;
  LossWeights w = f.config.weights;
  w.lambda[LossWeights::kExprConsistency] = 0;
  w.lambda[LossWeights::kIdConsistency] = 0;
  const auto ec = values(f.state.model.expr_critic.refs()), ic = values(f.state.model.id_critic.refs());
  for (int i = 0; i < 2; ++i) adversarial_step(f.state, f.batch, w, 1.0);
  CHECK(values(f.state.model.expr_critic.refs()) == ec);
  CHECK(values(f.state.model.id_critic.refs()) == ic);
}

TEST_CASE("the consistency pass treats the generated image as a constant") {
  AdversarialFixture f;
  auto& m = f.state.model;
  LossWeights w = f.config.weights;
  const auto generated = reconstruction_pass(m, f.batch, w).generated;
  for (auto* p : m.all_refs().params) p->zero_grad();
  consistency_pass(m, f.batch, generated, w, GradientReversal(1.0));
  for (auto* p : m.decoder.refs().params) CHECK(std::all_of(p->grad.data().begin(), p->grad.data().end(),
                                                             [](float g) { return g == 0.0f; }));
  // Perturbing the decoder afterwards cannot change the encoder gradients,
  // since the pass never reads the decoder.
  const auto enc_grads = [&] {
    std::vector<Tensor> g;
    for (auto* p : m.expr_encoder.refs().params) g.push_back(p->grad);
    return g;
  };
  const auto before = enc_grads();
  for (auto* p : m.decoder.refs().params)
    for (auto& v : p->value.data()) v += 0.25f;
  for (auto* p : m.all_refs().params) p->zero_grad();
  consistency_pass(m, f.batch, generated, w, GradientReversal(1.0));
  CHECK(enc_grads() == before);
}

TEST_CASE("a non-finite loss aborts the step before any update") {
  AdversarialFixture f;
  auto bad = f.batch;
  bad.source[0] = std::nanf("");
  const auto all = values(f.state.model.all_refs());
  try {
    adversarial_step(f.state, bad, f.config.weights, 1.0);
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(!e.term.empty());
    CHECK(std::string(e.what()).find(e.term) != std::string::npos);
  }
  CHECK(values(f.state.model.all_refs()) == all);
}

TEST_CASE("fixed-seed runs write identical metrics logs") {
  auto a = test::tiny_config(scratch("det-a").string());
  auto b = test::tiny_config(scratch("det-b").string());
  train(a);
  train(b);
  const auto la = read_file(metrics_path(a)), lb = read_file(metrics_path(b));
  CHECK(!la.empty());
  CHECK(la == lb);
  // One line per step: 3 + 3 + 4.
  CHECK(std::count(la.begin(), la.end(), '\n') == 10);
  CHECK(la.find("\"classifier_accuracy\"") != std::string::npos);
  CHECK(la.find("\"expr_consist\"") != std::string::npos);
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run") {
  auto full = test::tiny_config(scratch("resume-full").string());
  auto straight = train(full);

  auto part = test::tiny_config(scratch("resume-part").string());
  part.stages.adversarial = 2;
  train(part);
  auto rest = part;
  rest.stages.adversarial = full.stages.adversarial;
  TrainOptions opts;
  opts.resume = checkpoint_path(part);
  auto resumed = train(rest, opts);

  CHECK(resumed.state.global_step == straight.state.global_step);
  CHECK(values(resumed.state.model.all_refs()) == values(straight.state.model.all_refs()));
  CHECK(read_file(metrics_path(rest)) == read_file(metrics_path(full)));
}

TEST_CASE("resuming from an older checkpoint truncates later metrics") {
  auto cfg = test::tiny_config(scratch("truncate").string());
  train(cfg);
  const auto full_log = read_file(metrics_path(cfg));
  TrainOptions opts;
  opts.resume = fs::path(cfg.output_dir) / "checkpoint-pretrain_id.bin";
  train(cfg, opts);
  CHECK(read_file(metrics_path(cfg)) == full_log);
}
