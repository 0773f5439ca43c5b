#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tergan/analysis.hpp"
#include "tergan/data.hpp"
#include "tergan/trainer.hpp"

namespace tergan {

/// Brings an arbitrary [H, W, 3] image to the model's input distribution
/// (resize, then the deterministic evaluation crop).
Tensor prepare_input(const TrainState& state, const Tensor& image);

/// decode(concat(expression code of `source`, identity code of `target`)).
/// Throws ValidationError when the state has not been through adversarial training.
Tensor transfer(const TrainState& state, const Tensor& source, const Tensor& target);

/// Same computation as transfer: the exemplar donates the expression, the
/// target keeps its identity.
Tensor edit(const TrainState& state, const Tensor& target, const Tensor& expression_exemplar);

/// Expression codes [N, expr_dim] of prepared images, eval mode. With
/// `baseline` the frozen stage-one encoder is used instead of the live one.
Tensor expression_embeddings(const TrainState& state, const std::vector<Tensor>& images, bool baseline = false);

std::vector<int> recognize(const TrainState& state, const std::vector<Tensor>& images,
                           const ExpressionClassifier& classifier);

struct FoldResult {
  double accuracy = 0.0;
  std::size_t test_records = 0;
  std::size_t test_identities = 0;
};

struct FERResult {
  std::vector<double> per_fold;
  double mean = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<FoldResult> folds;
};

/// Fits a probe on the records outside `fold` and scores the records inside
/// it. `embeddings` has one row per manifest record. Accumulates into
/// `confusion` when given. Throws std::logic_error on identity leakage.
FoldResult evaluate_fold(const DatasetManifest& manifest, int fold, const Tensor& embeddings,
                         const ProbeConfig& probe = {},
                         std::vector<std::vector<std::size_t>>* confusion = nullptr);

/// k-fold identity-independent evaluation over precomputed per-record
/// embeddings. Throws ValidationError when k differs from the manifest's folds.
FERResult evaluate_fer(const DatasetManifest& manifest, std::size_t k, const Tensor& embeddings,
                       const ProbeConfig& probe = {});

/// As above with embeddings from the live expression encoder of `state`.
FERResult evaluate_fer(const TrainState& state, const DatasetManifest& manifest, std::size_t k,
                       const ProbeConfig& probe = {});

std::string fer_result_json(const FERResult& result);

struct EmbeddingDump {
  std::vector<int> expressions;
  std::vector<int> identities;
  Tensor features;               // [N, expr_dim]
  std::optional<Tensor> coords;  // [N, 2]
};

struct EmbeddingDiagnostics {
  double silhouette = 0.0;
  double identity_probe = 0.0;
};

struct EmbeddingReport {
  EmbeddingDump trained;
  EmbeddingDump baseline;  // frozen stage-one expression encoder
  EmbeddingDiagnostics trained_diagnostics;
  EmbeddingDiagnostics baseline_diagnostics;
};

EmbeddingReport dump_embeddings(const TrainState& state, const DatasetManifest& manifest, bool project,
                                std::uint64_t seed = 0);

EmbeddingDiagnostics embedding_diagnostics(const EmbeddingDump& dump);

/// CSV: expression,identity,f0..f{D-1}[,x,y].
std::string embedding_csv(const EmbeddingDump& dump);
std::string embedding_diagnostics_json(const EmbeddingReport& report);

/// Grid with the column headers (sources) along the top strip, row headers
/// (targets) along the left strip, and cells[r][c] in the body.
Tensor image_grid(const std::vector<Tensor>& column_headers, const std::vector<Tensor>& row_headers,
                  const std::vector<std::vector<Tensor>>& cells);

/// Transfer grid: cell (r, c) carries the expression of sources[c] on targets[r].
Tensor transfer_grid(const TrainState& state, const std::vector<Tensor>& sources, const std::vector<Tensor>& targets);

}  // namespace tergan
