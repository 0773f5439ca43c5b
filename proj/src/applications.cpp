#include "tergan/applications.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tergan/errors.hpp"
#include "tergan/image.hpp"

namespace tergan {
namespace {

constexpr std::size_t kChunk = 64;

void require_trained(const TrainState& state) {
  if (!state.trained())
    throw ValidationError(std::string("the model is untrained (stage ") + to_string(state.stage) + ", step " +
                          std::to_string(state.stage_step) + "); load a checkpoint from adversarial training");
}

Tensor batch_of(const TrainState& state, const std::vector<Tensor>& images, std::size_t begin, std::size_t end) {
  std::vector<Tensor> prepared(end - begin);
  for (std::size_t i = begin; i < end; ++i) prepared[i - begin] = prepare_input(state, images[i]);
  std::vector<const Tensor*> ptrs;
  for (const auto& p : prepared) ptrs.push_back(&p);
  return image::stack(ptrs);
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  const std::size_t d = x.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(x.ptr() + rows[r] * d, d, out.ptr() + r * d);
  return out;
}

Tensor record_embeddings(const TrainState& state, const DatasetManifest& m, bool baseline) {
  return expression_embeddings(state, load_images(m, state.model.spec.image_size), baseline);
}

EmbeddingDump make_dump(const DatasetManifest& m, Tensor features, bool project, std::uint64_t seed) {
  EmbeddingDump d;
  for (const auto& r : m.records) {
    d.expressions.push_back(r.expression);
    d.identities.push_back(r.identity);
  }
  d.features = std::move(features);
  if (project) {
    TsneConfig cfg;
    cfg.seed = seed;
    d.coords = tsne(d.features, cfg);
  }
  return d;
}

}  // namespace

Tensor prepare_input(const TrainState& state, const Tensor& img) {
  if (img.rank() != 3 || img.dim(2) != 3) throw ValidationError("expected an [H, W, 3] image, got " + shape_string(img.shape()));
  return evaluation_view(img, state.augmentation, state.model.spec.image_size);
}

Tensor transfer(const TrainState& state, const Tensor& source, const Tensor& target) {
  require_trained(state);
  const auto& m = state.model;
  const Tensor ps = prepare_input(state, source), pt = prepare_input(state, target);
  const Tensor xs = image::stack({&ps}), xt = image::stack({&pt});
  const auto e = m.expr_encoder.forward(xs, Mode::eval);
  const auto i = m.id_encoder.forward(xt, Mode::eval);
  const auto out = m.decoder.forward(concat_embeddings(e.embedding, i.embedding), Mode::eval);
  return image::unstack(out.output, 0);
}

Tensor edit(const TrainState& state, const Tensor& target, const Tensor& expression_exemplar) {
  return transfer(state, expression_exemplar, target);
}

Tensor expression_embeddings(const TrainState& state, const std::vector<Tensor>& images, bool baseline) {
  const auto& enc = baseline ? state.model.frozen_expr_encoder : state.model.expr_encoder;
  const std::size_t d = enc.embedding_dim();
  Tensor out({images.size(), d});
  for (std::size_t b = 0; b < images.size(); b += kChunk) {
    const std::size_t e = std::min(images.size(), b + kChunk);
    const auto trace = enc.forward(batch_of(state, images, b, e), Mode::eval);
    std::copy_n(trace.embedding.ptr(), (e - b) * d, out.ptr() + b * d);
  }
  return out;
}

std::vector<int> recognize(const TrainState& state, const std::vector<Tensor>& images,
                           const ExpressionClassifier& classifier) {
  if (!classifier.fitted()) throw ValidationError("the expression classifier has not been fitted");
  return classifier.predict(expression_embeddings(state, images));
}

FoldResult evaluate_fold(const DatasetManifest& m, int fold, const Tensor& embeddings, const ProbeConfig& probe_cfg,
                         std::vector<std::vector<std::size_t>>* confusion) {
  if (!m.has_folds()) throw ValidationError("the manifest has no folds");
  if (fold < 0 || static_cast<std::size_t>(fold) >= m.num_folds)
    throw ValidationError("fold " + std::to_string(fold) + " is out of range for " + std::to_string(m.num_folds) +
                          " folds");
  if (embeddings.rank() != 2 || embeddings.dim(0) != m.records.size())
    throw ValidationError("expected one embedding row per record (" + std::to_string(m.records.size()) + "), got " +
                          shape_string(embeddings.shape()));
  const auto test = records_in_fold(m, fold);
  const auto train = records_outside_fold(m, fold);
  std::set<int> train_ids, test_ids;
  for (auto r : train) train_ids.insert(m.records[r].identity);
  for (auto r : test) test_ids.insert(m.records[r].identity);
  for (int id : test_ids)
    if (train_ids.count(id))
      throw std::logic_error("identity " + std::to_string(id) + " appears in both the training and test side of fold " +
                             std::to_string(fold));
  if (train.empty() || test.empty()) throw ValidationError("fold " + std::to_string(fold) + " has an empty split");

  std::vector<int> ytrain, ytest;
  for (auto r : train) ytrain.push_back(m.records[r].expression);
  for (auto r : test) ytest.push_back(m.records[r].expression);
  LogisticProbe probe(probe_cfg);
  probe.fit(select_rows(embeddings, train), ytrain, m.num_expressions);
  const auto pred = probe.predict(select_rows(embeddings, test));
  if (confusion)
    for (std::size_t i = 0; i < pred.size(); ++i) ++(*confusion)[ytest[i]][pred[i]];
  return {accuracy(pred, ytest), test.size(), test_ids.size()};
}

FERResult evaluate_fer(const DatasetManifest& m, std::size_t k, const Tensor& embeddings, const ProbeConfig& probe) {
  if (!m.has_folds()) throw ValidationError("the manifest has no folds; assign them with make_folds or synth --folds");
  if (m.num_folds != k)
    throw ValidationError("requested k=" + std::to_string(k) + " but the manifest has " + std::to_string(m.num_folds) +
                          " folds");
  FERResult r;
  r.folds.resize(k);
  std::vector<std::vector<std::vector<std::size_t>>> conf(
      k, std::vector<std::vector<std::size_t>>(m.num_expressions, std::vector<std::size_t>(m.num_expressions, 0)));
  std::vector<std::exception_ptr> errors(k);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(k); ++f) {
    try {
      r.folds[f] = evaluate_fold(m, static_cast<int>(f), embeddings, probe, &conf[f]);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  r.confusion = conf[0];
  for (std::size_t f = 1; f < k; ++f)
    for (std::size_t i = 0; i < m.num_expressions; ++i)
      for (std::size_t j = 0; j < m.num_expressions; ++j) r.confusion[i][j] += conf[f][i][j];
  for (const auto& f : r.folds) r.per_fold.push_back(f.accuracy);
  double sum = 0;
  for (double a : r.per_fold) sum += a;
  r.mean = sum / static_cast<double>(k);
  return r;
}

FERResult evaluate_fer(const TrainState& state, const DatasetManifest& m, std::size_t k, const ProbeConfig& probe) {
  if (m.has_folds() && m.num_folds != k)
    throw ValidationError("requested k=" + std::to_string(k) + " but the manifest has " + std::to_string(m.num_folds) +
                          " folds");
  return evaluate_fer(m, k, record_embeddings(state, m, false), probe);
}

std::string fer_result_json(const FERResult& r) {
  nlohmann::ordered_json j;
  j["per_fold"] = r.per_fold;
  j["mean"] = r.mean;
  j["confusion"] = r.confusion;
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"accuracy", f.accuracy}, {"test_records", f.test_records}, {"test_identities", f.test_identities}});
  j["folds"] = folds;
  return j.dump(2) + "\n";
}

EmbeddingDiagnostics embedding_diagnostics(const EmbeddingDump& d) {
  EmbeddingDiagnostics out;
  out.silhouette = silhouette_score(d.features, d.expressions);
  out.identity_probe = identity_probe_accuracy(d.features, d.expressions, d.identities);
  return out;
}

EmbeddingReport dump_embeddings(const TrainState& state, const DatasetManifest& m, bool project, std::uint64_t seed) {
  const auto images = load_images(m, state.model.spec.image_size);
  EmbeddingReport r;
  r.trained = make_dump(m, expression_embeddings(state, images, false), project, seed);
  r.baseline = make_dump(m, expression_embeddings(state, images, true), project, seed);
  r.trained_diagnostics = embedding_diagnostics(r.trained);
  r.baseline_diagnostics = embedding_diagnostics(r.baseline);
  return r;
}

std::string embedding_csv(const EmbeddingDump& d) {
  const std::size_t n = d.features.dim(0), dim = d.features.dim(1);
  std::string out = "expression,identity";
  for (std::size_t k = 0; k < dim; ++k) out += ",f" + std::to_string(k);
  if (d.coords) out += ",x,y";
  out += "\n";
  char buf[32];
  auto num = [&](float v) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    out += ',';
    out += buf;
  };
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(d.expressions[i]) + "," + std::to_string(d.identities[i]);
    for (std::size_t k = 0; k < dim; ++k) num(d.features[i * dim + k]);
    if (d.coords) {
      num((*d.coords)[i * 2]);
      num((*d.coords)[i * 2 + 1]);
    }
    out += "\n";
  }
  return out;
}

std::string embedding_diagnostics_json(const EmbeddingReport& r) {
  nlohmann::ordered_json j;
  j["trained"] = {{"silhouette", r.trained_diagnostics.silhouette},
                  {"identity_probe", r.trained_diagnostics.identity_probe}};
  j["baseline"] = {{"silhouette", r.baseline_diagnostics.silhouette},
                   {"identity_probe", r.baseline_diagnostics.identity_probe}};
  return j.dump(2) + "\n";
}

Tensor image_grid(const std::vector<Tensor>& cols, const std::vector<Tensor>& rows,
                  const std::vector<std::vector<Tensor>>& cells) {
  if (cols.empty() || rows.empty()) throw ValidationError("an image grid needs at least one row and one column");
  if (cells.size() != rows.size()) throw ValidationError("image grid: cell rows do not match row headers");
  const std::size_t h = cols[0].dim(0), w = cols[0].dim(1), gap = std::max<std::size_t>(2, h / 16);
  auto check = [&](const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != h || t.dim(1) != w || t.dim(2) != 3)
      throw ValidationError("image grid: every tile must be " + std::to_string(h) + "x" + std::to_string(w) + "x3");
  };
  for (const auto& t : cols) check(t);
  for (const auto& t : rows) check(t);
  for (const auto& r : cells) {
    if (r.size() != cols.size()) throw ValidationError("image grid: cell columns do not match column headers");
    for (const auto& t : r) check(t);
  }
  // One header strip above and one to the left, separated by a wider gap.
  const std::size_t H = (rows.size() + 1) * h + rows.size() * gap + 2 * gap;
  const std::size_t W = (cols.size() + 1) * w + cols.size() * gap + 2 * gap;
  Tensor g({H, W, 3});
  std::fill(g.data().begin(), g.data().end(), 1.0f);
  auto place = [&](const Tensor& t, std::size_t top, std::size_t left) {
    for (std::size_t y = 0; y < h; ++y) std::copy_n(t.ptr() + y * w * 3, w * 3, g.ptr() + ((top + y) * W + left) * 3);
  };
  auto col_left = [&](std::size_t c) { return w + 2 * gap + c * (w + gap); };
  auto row_top = [&](std::size_t r) { return h + 2 * gap + r * (h + gap); };
  for (std::size_t c = 0; c < cols.size(); ++c) place(cols[c], 0, col_left(c));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    place(rows[r], row_top(r), 0);
    for (std::size_t c = 0; c < cols.size(); ++c) place(cells[r][c], row_top(r), col_left(c));
  }
  return g;
}

Tensor transfer_grid(const TrainState& state, const std::vector<Tensor>& sources, const std::vector<Tensor>& targets) {
  require_trained(state);
  std::vector<Tensor> cols, rows;
  for (const auto& s : sources) cols.push_back(prepare_input(state, s));
  for (const auto& t : targets) rows.push_back(prepare_input(state, t));
  std::vector<std::vector<Tensor>> cells(targets.size());
  for (std::size_t r = 0; r < targets.size(); ++r)
    for (std::size_t c = 0; c < sources.size(); ++c) cells[r].push_back(transfer(state, sources[c], targets[r]));
  return image_grid(cols, rows, cells);
}

}  // namespace tergan
