#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tergan/config.hpp"
#include "tergan/data.hpp"
#include "tergan/model.hpp"
#include "tergan/optimizer.hpp"

namespace tergan {

enum class Stage { pretrain_expr, pretrain_id, adversarial };
const char* to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct OptimizerSet {
  Adam<float> generator;         // both encoders + decoder, reconstruction pass
  Adam<float> discriminator;
  Adam<float> expr_consistency;  // expression encoder + its critic
  Adam<float> id_consistency;    // identity encoder + its critic
  Adam<float> pretrain_expr;     // expression encoder + classifier head
  Adam<float> pretrain_id;       // identity encoder + classifier head

  explicit OptimizerSet(const AdamConfig& cfg = {});

  /// (name, optimizer) pairs in a fixed order.
  std::vector<std::pair<std::string, Adam<float>*>> named();
};

/// Ordered parameter lists each optimizer is bound to.
std::vector<Parameter<float>*> generator_params(Model<float>& m);
std::vector<Parameter<float>*> discriminator_params(Model<float>& m);
std::vector<Parameter<float>*> expr_consistency_params(Model<float>& m);
std::vector<Parameter<float>*> id_consistency_params(Model<float>& m);
std::vector<Parameter<float>*> pretrain_expr_params(Model<float>& m);
std::vector<Parameter<float>*> pretrain_id_params(Model<float>& m);

struct TrainState {
  Model<float> model;
  OptimizerSet optimizers;
  Stage stage = Stage::pretrain_expr;
  std::uint64_t global_step = 0;
  std::uint64_t stage_step = 0;
  std::mt19937_64 rng;
  AugmentationConfig augmentation;

  /// True once at least one adversarial step has run.
  bool trained() const { return stage == Stage::adversarial && stage_step > 0; }
};

/// Fresh state: parameters drawn from `config.seed`, stage pretrain_expr.
TrainState initial_state(const RunConfig& config);

/// Images and sampler for one training run. Not copyable: the sampler points
/// into the manifest.
class TrainingData {
 public:
  TrainingData(DatasetManifest manifest, std::size_t image_size, std::optional<int> held_out_fold);
  TrainingData(const TrainingData&) = delete;
  TrainingData& operator=(const TrainingData&) = delete;

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<Tensor>& images() const { return images_; }
  const PairSampler& sampler() const { return *sampler_; }
  std::size_t image_size() const { return image_size_; }

  /// Augmented batch of the given records; variant indices are chosen by the caller.
  Tensor assemble(std::span<const std::size_t> records, std::span<const std::size_t> variants,
                  const AugmentationConfig& aug) const;

 private:
  DatasetManifest manifest_;
  std::size_t image_size_;
  std::vector<Tensor> images_;
  std::unique_ptr<PairSampler> sampler_;
};

struct ClassifierBatch {
  Tensor images;
  std::vector<int> labels;
};

/// Draws the batch serially from `state.rng`, then assembles it in parallel.
ClassifierBatch sample_classifier_batch(TrainState& state, const TrainingData& data, std::size_t batch_size,
                                        Stage stage);
PairBatch<float> sample_pair_batch(TrainState& state, const TrainingData& data, std::size_t batch_size,
                                   double same_identity_prob);

struct ClassifierStats {
  double loss = 0;
  double accuracy = 0;
};

/// One supervised update of the encoder named by `stage` and its head.
ClassifierStats pretrain_step(TrainState& state, Stage stage, const ClassifierBatch& batch);

/// The two-step adversarial update. Updates are skipped for any network whose
/// loss weights are all zero. Throws DivergenceError before applying an update
/// computed from a non-finite term.
LossReport adversarial_step(TrainState& state, const PairBatch<float>& batch, const LossWeights& weights,
                            double grl_scale);

/// Ends the current pretraining stage: freezes a copy of the encoder and
/// discards the classifier head.
void finish_stage(TrainState& state, const AdamConfig& adam);

struct StageReport {
  Stage stage = Stage::pretrain_expr;
  std::uint64_t steps = 0;
  LossReport final_report;
  double classifier_accuracy = 0;  // pretraining stages only
};

/// Runs `steps` updates of the expression-pretraining stage and freezes the encoder.
StageReport pretrain_expression_encoder(TrainState& state, const TrainingData& data, const RunConfig& config,
                                        std::uint64_t steps);
StageReport pretrain_identity_encoder(TrainState& state, const TrainingData& data, const RunConfig& config,
                                      std::uint64_t steps);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::function<void(const std::string&)> log;  // progress lines
};

struct TrainResult {
  TrainState state;
  std::vector<StageReport> reports;
};

/// Full curriculum under `config.output_dir`: metrics.jsonl, checkpoint.bin
/// (periodic and final) and checkpoint-<stage>.bin at each stage boundary.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// Same, over already-loaded data.
TrainResult train(const RunConfig& config, const TrainingData& data, const TrainOptions& options = {});

std::filesystem::path metrics_path(const RunConfig& config);
std::filesystem::path checkpoint_path(const RunConfig& config);

/// Serialises one metrics line (no trailing newline).
std::string metrics_line(std::uint64_t step, Stage stage, const LossReport& report,
                         std::optional<ClassifierStats> classifier);

}  // namespace tergan
