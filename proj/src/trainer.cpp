#include "tergan/trainer.hpp"

#include <exception>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tergan/checkpoint.hpp"
#include "tergan/errors.hpp"

namespace tergan {
namespace {

using json = nlohmann::ordered_json;

std::vector<Parameter<float>*> join(ParameterRefs<float> a, const ParameterRefs<float>& b) {
  a.params.insert(a.params.end(), b.params.begin(), b.params.end());
  return a.params;
}

ParameterRefs<float> head_refs(std::optional<Linear<float>>& head, const char* which) {
  if (!head) throw ValidationError(std::string(which) + " classifier head was already discarded");
  ParameterRefs<float> r;
  head->collect(r);
  return r;
}

void log_line(const TrainOptions& opt, const std::string& s) {
  if (opt.log) opt.log(s);
}

std::uint64_t budget(const StageBudgets& b, Stage s) {
  switch (s) {
    case Stage::pretrain_expr: return b.pretrain_expr;
    case Stage::pretrain_id: return b.pretrain_id;
    case Stage::adversarial: return b.adversarial;
  }
  return 0;
}

/// Keeps the metrics lines whose step precedes `step`.
void truncate_metrics(const std::filesystem::path& path, std::uint64_t step) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) break;
    if (j["step"].get<std::uint64_t>() >= step) break;
    kept += line + "\n";
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept;
  if (!out) throw IoError("cannot rewrite metrics log " + path.string());
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::pretrain_expr: return "pretrain_expr";
    case Stage::pretrain_id: return "pretrain_id";
    case Stage::adversarial: return "adversarial";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (auto st : {Stage::pretrain_expr, Stage::pretrain_id, Stage::adversarial})
    if (s == to_string(st)) return st;
  throw ValidationError("unknown stage '" + s + "'");
}

OptimizerSet::OptimizerSet(const AdamConfig& cfg)
    : generator(cfg),
      discriminator(cfg),
      expr_consistency(cfg),
      id_consistency(cfg),
      pretrain_expr(cfg),
      pretrain_id(cfg) {}

std::vector<std::pair<std::string, Adam<float>*>> OptimizerSet::named() {
  return {{"generator", &generator},         {"discriminator", &discriminator},
          {"expr_consistency", &expr_consistency}, {"id_consistency", &id_consistency},
          {"pretrain_expr", &pretrain_expr}, {"pretrain_id", &pretrain_id}};
}

std::vector<Parameter<float>*> generator_params(Model<float>& m) { return m.generator_refs().params; }
std::vector<Parameter<float>*> discriminator_params(Model<float>& m) { return m.discriminator.refs().params; }
std::vector<Parameter<float>*> expr_consistency_params(Model<float>& m) {
  return join(m.expr_encoder.refs(), m.expr_critic.refs());
}
std::vector<Parameter<float>*> id_consistency_params(Model<float>& m) {
  return join(m.id_encoder.refs(), m.id_critic.refs());
}
std::vector<Parameter<float>*> pretrain_expr_params(Model<float>& m) {
  return join(m.expr_encoder.refs(), head_refs(m.expr_head, "expression"));
}
std::vector<Parameter<float>*> pretrain_id_params(Model<float>& m) {
  return join(m.id_encoder.refs(), head_refs(m.id_head, "identity"));
}

TrainState initial_state(const RunConfig& config) {
  config.validate();
  TrainState s;
  s.model = Model<float>(config.network);
  s.optimizers = OptimizerSet(config.optimizer.adam);
  s.rng.seed(config.seed);
  s.model.init(s.rng);
  s.augmentation = config.augmentation;
  return s;
}

// ---------------------------------------------------------------------------

TrainingData::TrainingData(DatasetManifest manifest, std::size_t image_size, std::optional<int> held_out_fold)
    : manifest_(std::move(manifest)), image_size_(image_size) {
  manifest_.validate();
  images_ = load_images(manifest_, image_size_);
  sampler_ = std::make_unique<PairSampler>(manifest_, held_out_fold);
}

Tensor TrainingData::assemble(std::span<const std::size_t> records, std::span<const std::size_t> variants,
                              const AugmentationConfig& aug) const {
  const std::size_t n = records.size(), s = image_size_, per = s * s * 3;
  Tensor out({n, s, s, 3});
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(n); ++b) {
    try {
      const Tensor& src = images_.at(records[b]);
      const Tensor img = aug.enabled ? augment_variant(src, aug, variants[b], s) : src;
      std::copy(img.ptr(), img.ptr() + per, out.ptr() + b * per);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

namespace {

std::size_t draw_variant(std::mt19937_64& rng, const AugmentationConfig& aug) {
  if (!aug.enabled) return 0;
  std::uniform_int_distribution<std::size_t> pick(0, aug.variant_count() - 1);
  return pick(rng);
}

}  // namespace

ClassifierBatch sample_classifier_batch(TrainState& state, const TrainingData& data, std::size_t batch_size,
                                        Stage stage) {
  std::vector<std::size_t> records(batch_size), variants(batch_size);
  ClassifierBatch b;
  b.labels.resize(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    records[i] = data.sampler().sample_record(state.rng);
    variants[i] = draw_variant(state.rng, state.augmentation);
    const auto& rec = data.manifest().records[records[i]];
    b.labels[i] = stage == Stage::pretrain_id ? rec.identity : rec.expression;
  }
  b.images = data.assemble(records, variants, state.augmentation);
  return b;
}

PairBatch<float> sample_pair_batch(TrainState& state, const TrainingData& data, std::size_t batch_size,
                                   double same_identity_prob) {
  std::vector<std::size_t> src(batch_size), tgt(batch_size), vs(batch_size), vt(batch_size);
  PairBatch<float> b;
  b.source_expressions.resize(batch_size);
  b.target_identities.resize(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const PairSample p = data.sampler().sample(state.rng, same_identity_prob);
    src[i] = p.source;
    tgt[i] = p.target;
    vs[i] = draw_variant(state.rng, state.augmentation);
    vt[i] = draw_variant(state.rng, state.augmentation);
    b.source_expressions[i] = data.manifest().records[p.source].expression;
    b.target_identities[i] = data.manifest().records[p.target].identity;
  }
  b.source = data.assemble(src, vs, state.augmentation);
  b.target = data.assemble(tgt, vt, state.augmentation);
  return b;
}

// ---------------------------------------------------------------------------

ClassifierStats pretrain_step(TrainState& state, Stage stage, const ClassifierBatch& batch) {
  if (stage == Stage::adversarial) throw ValidationError("pretrain_step called for the adversarial stage");
  Model<float>& m = state.model;
  const bool expr = stage == Stage::pretrain_expr;
  auto params = expr ? pretrain_expr_params(m) : pretrain_id_params(m);
  Encoder<float>& encoder = expr ? m.expr_encoder : m.id_encoder;
  Linear<float>& head = expr ? *m.expr_head : *m.id_head;

  zero_grads(params);
  auto r = classifier_pass(encoder, head, batch.images, batch.labels);
  require_finite(expr ? "expression classifier" : "identity classifier", r.loss);
  (expr ? state.optimizers.pretrain_expr : state.optimizers.pretrain_id).step(params);
  encoder.absorb(r.trace);
  return {r.loss, r.accuracy};
}

LossReport adversarial_step(TrainState& state, const PairBatch<float>& batch, const LossWeights& w,
                            double grl_scale) {
  using W = LossWeights;
  Model<float>& m = state.model;
  auto g_params = generator_params(m);
  auto d_params = discriminator_params(m);
  auto ec_params = expr_consistency_params(m);
  auto ic_params = id_consistency_params(m);

  // Step 1: reconstruction, feature matching and image-level adversarial terms.
  zero_grads(g_params);
  zero_grads(d_params);
  auto rp = reconstruction_pass(m, batch, w);
  total_loss(rp.report, w);  // divergence guard before any update
  const bool generator_active = w[W::kIdFeature] != 0 || w[W::kExprFeature] != 0 || w[W::kIdRecon] != 0 ||
                                w[W::kExprRecon] != 0 || w[W::kAdversarial] != 0;
  if (generator_active) {
    state.optimizers.generator.step(g_params);
    m.expr_encoder.absorb(rp.expr_trace);
    m.id_encoder.absorb(rp.id_trace);
    m.decoder.absorb(rp.decoder_trace);
  }
  if (w[W::kAdversarial] != 0) state.optimizers.discriminator.step(d_params);

  // Step 2: embedding consistency through gradient reversal; x̄ is a constant.
  zero_grads(ec_params);
  zero_grads(ic_params);
  auto cp = consistency_pass(m, batch, rp.generated, w, GradientReversal(grl_scale));
  LossReport report = rp.report;
  report.expr_consist = cp.expr_consist;
  report.id_consist = cp.id_consist;
  report.total = total_loss(report, w);
  if (w[W::kExprConsistency] != 0) state.optimizers.expr_consistency.step(ec_params);
  if (w[W::kIdConsistency] != 0) state.optimizers.id_consistency.step(ic_params);
  return report;
}

void finish_stage(TrainState& state, const AdamConfig& adam) {
  Model<float>& m = state.model;
  switch (state.stage) {
    case Stage::pretrain_expr:
      m.frozen_expr_encoder.copy_weights_from(m.expr_encoder);
      m.expr_head.reset();
      state.optimizers.pretrain_expr = Adam<float>(adam);
      state.stage = Stage::pretrain_id;
      break;
    case Stage::pretrain_id:
      m.frozen_id_encoder.copy_weights_from(m.id_encoder);
      m.id_head.reset();
      state.optimizers.pretrain_id = Adam<float>(adam);
      state.stage = Stage::adversarial;
      break;
    case Stage::adversarial: throw ValidationError("the adversarial stage is the last stage");
  }
  state.stage_step = 0;
}

namespace {

StageReport run_pretrain(TrainState& state, const TrainingData& data, const RunConfig& config, Stage stage,
                         std::uint64_t steps) {
  if (state.stage != stage)
    throw ValidationError(std::string("state is in stage ") + to_string(state.stage) + ", expected " +
                          to_string(stage));
  StageReport rep;
  rep.stage = stage;
  for (std::uint64_t i = 0; i < steps; ++i) {
    auto batch = sample_classifier_batch(state, data, config.optimizer.batch_size, stage);
    auto stats = pretrain_step(state, stage, batch);
    rep.classifier_accuracy = stats.accuracy;
    ++state.global_step;
    ++state.stage_step;
    ++rep.steps;
  }
  finish_stage(state, config.optimizer.adam);
  return rep;
}

}  // namespace

StageReport pretrain_expression_encoder(TrainState& state, const TrainingData& data, const RunConfig& config,
                                        std::uint64_t steps) {
  return run_pretrain(state, data, config, Stage::pretrain_expr, steps);
}

StageReport pretrain_identity_encoder(TrainState& state, const TrainingData& data, const RunConfig& config,
                                      std::uint64_t steps) {
  return run_pretrain(state, data, config, Stage::pretrain_id, steps);
}

// ---------------------------------------------------------------------------

std::filesystem::path metrics_path(const RunConfig& config) {
  return std::filesystem::path(config.output_dir) / "metrics.jsonl";
}

std::filesystem::path checkpoint_path(const RunConfig& config) {
  return std::filesystem::path(config.output_dir) / "checkpoint.bin";
}

std::string metrics_line(std::uint64_t step, Stage stage, const LossReport& report,
                         std::optional<ClassifierStats> classifier) {
  json j;
  j["step"] = step;
  j["stage"] = to_string(stage);
  for (const auto& [name, value] : report.parts()) j[name] = value;
  j["total"] = report.total;
  if (classifier) {
    j["classifier_loss"] = classifier->loss;
    j["classifier_accuracy"] = classifier->accuracy;
  }
  return j.dump();
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  auto manifest = resolve_dataset(config.data, config.network.image_size);
  if (manifest.num_expressions != config.network.num_expressions ||
      manifest.num_identities != config.network.num_identities)
    throw ConfigError("dataset has " + std::to_string(manifest.num_expressions) + " expressions and " +
                      std::to_string(manifest.num_identities) + " identities; network expects " +
                      std::to_string(config.network.num_expressions) + " and " +
                      std::to_string(config.network.num_identities));
  std::optional<int> held_out;
  if (config.data.held_out_fold >= 0) held_out = config.data.held_out_fold;
  TrainingData data(std::move(manifest), config.network.image_size, held_out);
  return train(config, data, options);
}

TrainResult train(const RunConfig& config, const TrainingData& data, const TrainOptions& options) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);
  const auto metrics_file = metrics_path(config);

  TrainResult result;
  TrainState& state = result.state;
  if (options.resume) {
    state = load_checkpoint(*options.resume, config.network);
    truncate_metrics(metrics_file, state.global_step);
    log_line(options, "resumed at step " + std::to_string(state.global_step) + " (" + to_string(state.stage) + ")");
  } else {
    state = initial_state(config);
    std::ofstream(metrics_file, std::ios::trunc);
  }
  std::ofstream metrics(metrics_file, std::ios::app);
  if (!metrics) throw IoError("cannot open metrics log " + metrics_file.string());

  const auto save = [&](const std::filesystem::path& p) { save_checkpoint(state, p); };
  StageReport current;
  current.stage = state.stage;

  while (true) {
    if (state.stage_step >= budget(config.stages, state.stage)) {
      result.reports.push_back(current);
      if (state.stage == Stage::adversarial) break;
      const Stage ended = state.stage;
      finish_stage(state, config.optimizer.adam);
      save(std::filesystem::path(config.output_dir) / (std::string("checkpoint-") + to_string(ended) + ".bin"));
      log_line(options, std::string("stage ") + to_string(ended) + " complete; entering " + to_string(state.stage));
      current = StageReport{};
      current.stage = state.stage;
      continue;
    }

    const std::uint64_t step = state.global_step;
    std::string line;
    if (state.stage == Stage::adversarial) {
      auto batch = sample_pair_batch(state, data, config.optimizer.batch_size, config.same_identity_prob);
      current.final_report = adversarial_step(state, batch, config.weights, config.grl_scale);
      line = metrics_line(step, state.stage, current.final_report, std::nullopt);
    } else {
      auto batch = sample_classifier_batch(state, data, config.optimizer.batch_size, state.stage);
      auto stats = pretrain_step(state, state.stage, batch);
      current.classifier_accuracy = stats.accuracy;
      line = metrics_line(step, state.stage, LossReport{}, stats);
    }
    ++state.global_step;
    ++state.stage_step;
    ++current.steps;
    metrics << line << '\n';
    metrics.flush();
    if (!metrics) throw IoError("failed writing metrics log " + metrics_file.string());
    if (config.checkpoint_every > 0 && state.global_step % config.checkpoint_every == 0) save(checkpoint_path(config));
  }
  save(checkpoint_path(config));
  return result;
}

}  // namespace tergan
