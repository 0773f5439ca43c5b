#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tergan/applications.hpp"
#include "tergan/checkpoint.hpp"
#include "tergan/config.hpp"
#include "tergan/errors.hpp"
#include "tergan/image.hpp"

namespace fs = std::filesystem;
using namespace tergan;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation:
    case ErrorKind::configuration: return 1;
    case ErrorKind::divergence: return 2;
    case ErrorKind::io:
    case ErrorKind::integrity: return 3;
  }
  return 2;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

/// Checkpoint plus an optional config whose network must match it.
TrainState load_state(const fs::path& checkpoint, const std::string& config_path) {
  std::optional<NetworkSpec> expected;
  if (!config_path.empty()) expected = load_config(config_path).network;
  return load_checkpoint(checkpoint, expected);
}

DatasetManifest load_matching_manifest(const fs::path& path, const TrainState& state) {
  auto m = load_manifest(path);
  if (m.num_expressions != state.model.spec.num_expressions)
    throw ConfigError("manifest has " + std::to_string(m.num_expressions) + " expressions but the checkpoint expects " +
                      std::to_string(state.model.spec.num_expressions));
  return m;
}

std::vector<Tensor> load_pngs(const std::vector<std::string>& paths) {
  std::vector<Tensor> out;
  for (const auto& p : paths) out.push_back(image::load_png(p));
  return out;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  auto out = path.parent_path() / path.stem();
  out += suffix;
  return out;
}

struct Options {
  // synth / ingest
  std::size_t identities = 20, expressions = 6, folds = 0, image_size = 64;
  std::uint64_t seed = 7;
  std::string out, root;
  // train
  std::string config, stages, resume, output_dir;
  // applications
  std::string checkpoint, manifest;
  std::vector<std::string> sources, targets, images;
  bool grid = false, project = false, baseline = false, desk = false;
  std::size_t k = 8;
  int fold = -1;
};

void cmd_synth(const Options& o) {
  auto m = synth_generate(o.identities, o.expressions, o.image_size, o.seed);
  if (o.folds > 0) m = make_folds(m, o.folds, o.seed);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  const auto images = load_images(m, o.image_size);
  for (std::size_t r = 0; r < m.records.size(); ++r) {
    const auto& rec = m.records[r];
    fs::create_directories(dir / m.identity_names[rec.identity]);
    image::save_png(dir / m.identity_names[rec.identity] / (m.expression_names[rec.expression] + ".png"), images[r]);
  }
  save_manifest(m, dir / "manifest.json");
  std::cout << "wrote " << m.records.size() << " images and " << (dir / "manifest.json").string() << "\n";
}

void cmd_ingest(const Options& o) {
  auto result = ingest_folder(o.root);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  auto m = result.manifest;
  if (o.folds > 0) m = make_folds(m, o.folds, o.seed);
  save_manifest(m, o.out);
  std::cout << "ingested " << m.records.size() << " images (" << m.num_identities << " identities, "
            << result.skipped_files << " skipped) into " << o.out << "\n";
}

void cmd_init_config(const Options& o) {
  save_config(o.desk ? desk_config() : published_config(), o.out);
  std::cout << "wrote " << o.out << "\n";
}

void cmd_train(const Options& o) {
  RunConfig cfg = load_config(o.config);
  if (!o.stages.empty()) {
    std::vector<std::uint64_t> v;
    std::stringstream ss(o.stages);
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        std::size_t used = 0;
        const auto n = std::stoull(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
        v.push_back(n);
      } catch (const std::logic_error&) {
        throw ValidationError("--stages expects three non-negative integers, got '" + o.stages + "'");
      }
    }
    if (v.size() != 3) throw ValidationError("--stages expects three comma-separated budgets, got '" + o.stages + "'");
    cfg.stages = {v[0], v[1], v[2]};
  }
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  cfg.validate();
  TrainOptions opts;
  if (!o.resume.empty()) opts.resume = o.resume;
  opts.log = [](const std::string& line) { std::cout << line << std::endl; };
  const auto result = train(cfg, opts);
  std::cout << "done at step " << result.state.global_step << "; checkpoint " << checkpoint_path(cfg).string() << "\n";
}

void cmd_transfer(const Options& o, bool editing) {
  const auto state = load_state(o.checkpoint, o.config);
  const auto sources = load_pngs(o.sources), targets = load_pngs(o.targets);
  if (o.grid) {
    image::save_png(o.out, transfer_grid(state, sources, targets));
  } else {
    if (sources.size() != 1 || targets.size() != 1)
      throw ValidationError(std::string("give exactly one ") + (editing ? "--exemplar" : "--source") +
                            " and one --target, or use --grid");
    image::save_png(o.out, editing ? edit(state, targets[0], sources[0]) : transfer(state, sources[0], targets[0]));
  }
  std::cout << "wrote " << o.out << "\n";
}

void cmd_recognize(const Options& o) {
  const auto state = load_state(o.checkpoint, o.config);
  const auto m = load_matching_manifest(o.manifest, state);
  // The probe is fitted on the manifest records, minus a held-out fold if given.
  std::vector<std::size_t> rows;
  if (o.fold >= 0) {
    if (!m.has_folds() || static_cast<std::size_t>(o.fold) >= m.num_folds)
      throw ValidationError("--fold " + std::to_string(o.fold) + " is not a fold of the manifest");
    rows = records_outside_fold(m, o.fold);
  } else {
    for (std::size_t r = 0; r < m.records.size(); ++r) rows.push_back(r);
  }
  const auto all = load_images(m, state.model.spec.image_size);
  std::vector<Tensor> train_images;
  std::vector<int> labels;
  for (auto r : rows) {
    train_images.push_back(all[r]);
    labels.push_back(m.records[r].expression);
  }
  LogisticProbe probe;
  probe.fit(expression_embeddings(state, train_images), labels, m.num_expressions);
  const auto pred = recognize(state, load_pngs(o.images), probe);
  for (std::size_t i = 0; i < pred.size(); ++i) std::cout << o.images[i] << "\t" << m.expression_names[pred[i]] << "\n";
}

void cmd_eval_fer(const Options& o) {
  const auto state = load_state(o.checkpoint, o.config);
  const auto m = load_matching_manifest(o.manifest, state);
  if (m.has_folds() && m.num_folds != o.k)
    throw ValidationError("requested k=" + std::to_string(o.k) + " but the manifest has " +
                          std::to_string(m.num_folds) + " folds");
  const auto embeddings = expression_embeddings(state, load_images(m, state.model.spec.image_size), o.baseline);
  const auto result = evaluate_fer(m, o.k, embeddings);
  const auto text = fer_result_json(result);
  if (o.out.empty())
    std::cout << text;
  else
    write_text(o.out, text);
  std::fprintf(stderr, "mean accuracy %.4f over %zu folds\n", result.mean, result.per_fold.size());
}

void cmd_dump_embeddings(const Options& o) {
  const auto state = load_state(o.checkpoint, o.config);
  const auto m = load_matching_manifest(o.manifest, state);
  const auto report = dump_embeddings(state, m, o.project, o.seed);
  const fs::path out = o.out;
  write_text(out, embedding_csv(report.trained));
  write_text(with_suffix(out, ".baseline.csv"), embedding_csv(report.baseline));
  write_text(with_suffix(out, ".diagnostics.json"), embedding_diagnostics_json(report));
  std::cout << "wrote " << out.string() << ", " << with_suffix(out, ".baseline.csv").string() << " and "
            << with_suffix(out, ".diagnostics.json").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-encoder expression transfer GAN: data, training, transfer, editing and recognition"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Render a synthetic two-factor face dataset");
  synth->add_option("--identities", o.identities, "Number of identities")->capture_default_str();
  synth->add_option("--expressions", o.expressions, "Number of expressions (2-6)")->capture_default_str();
  synth->add_option("--folds", o.folds, "Identity-independent folds (0 = none)")->capture_default_str();
  synth->add_option("--seed", o.seed, "Seed for identities and folds")->capture_default_str();
  synth->add_option("--image-size", o.image_size, "Rendered side length")->capture_default_str();
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* ingest = app.add_subcommand("ingest", "Index <root>/<identity>/<expression>/*.png into a manifest");
  ingest->add_option("--root", o.root, "Dataset root")->required();
  ingest->add_option("--out", o.out, "Manifest path")->required();
  ingest->add_option("--folds", o.folds, "Identity-independent folds (0 = none)")->capture_default_str();
  ingest->add_option("--seed", o.seed, "Fold assignment seed")->capture_default_str();

  auto* init = app.add_subcommand("init-config", "Write a default run configuration");
  init->add_option("--out", o.out, "Config path")->required();
  init->add_flag("--desk", o.desk, "Reduced width, 32-pixel images, short budgets");

  auto* trainc = app.add_subcommand("train", "Run the training curriculum");
  trainc->add_option("--config", o.config, "Run configuration (JSON)")->required();
  trainc->add_option("--stages", o.stages, "Override step budgets: pretrain_expr,pretrain_id,adversarial");
  trainc->add_option("--resume", o.resume, "Checkpoint to continue from");
  trainc->add_option("--output-dir", o.output_dir, "Override the configured output directory");

  auto add_model = [&](CLI::App* c) {
    c->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
    c->add_option("--config", o.config, "Config whose network the checkpoint must match");
  };
  auto* transferc = app.add_subcommand("transfer", "Put the source's expression on the target's identity");
  add_model(transferc);
  transferc->add_option("--source", o.sources, "Expression donor PNG(s)")->required();
  transferc->add_option("--target", o.targets, "Identity donor PNG(s)")->required();
  transferc->add_option("--out", o.out, "Output PNG")->required();
  transferc->add_flag("--grid", o.grid, "Write a sources x targets grid");

  auto* editc = app.add_subcommand("edit", "Change the target's expression to the exemplar's");
  add_model(editc);
  editc->add_option("--target", o.targets, "Face to edit")->required();
  editc->add_option("--exemplar", o.sources, "Expression exemplar PNG(s)")->required();
  editc->add_option("--out", o.out, "Output PNG")->required();
  editc->add_flag("--grid", o.grid, "Write an exemplars x targets grid");

  auto* recog = app.add_subcommand("recognize", "Classify expressions from the detached expression encoder");
  add_model(recog);
  recog->add_option("--manifest", o.manifest, "Labelled records to fit the classifier on")->required();
  recog->add_option("--fold", o.fold, "Exclude this fold from classifier fitting");
  recog->add_option("--images", o.images, "PNG(s) to classify")->required();

  auto* fer = app.add_subcommand("eval-fer", "Identity-independent k-fold expression recognition");
  add_model(fer);
  fer->add_option("--manifest", o.manifest, "Manifest with folds")->required();
  fer->add_option("--k", o.k, "Number of folds")->capture_default_str();
  fer->add_option("--out", o.out, "Result JSON (stdout if omitted)");
  fer->add_flag("--baseline", o.baseline, "Use the frozen stage-one encoder");

  auto* dump = app.add_subcommand("dump-embeddings", "Write expression embeddings, baseline and diagnostics");
  add_model(dump);
  dump->add_option("--manifest", o.manifest, "Records to embed")->required();
  dump->add_option("--out", o.out, "CSV path")->required();
  dump->add_flag("--project", o.project, "Append 2-D t-SNE coordinates");
  dump->add_option("--seed", o.seed, "Projection seed")->default_val(0);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[usage]: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) cmd_synth(o);
    else if (ingest->parsed()) cmd_ingest(o);
    else if (init->parsed()) cmd_init_config(o);
    else if (trainc->parsed()) cmd_train(o);
    else if (transferc->parsed()) cmd_transfer(o, false);
    else if (editc->parsed()) cmd_transfer(o, true);
    else if (recog->parsed()) cmd_recognize(o);
    else if (fer->parsed()) cmd_eval_fer(o);
    else if (dump->parsed()) cmd_dump_embeddings(o);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error[runtime]: " << e.what() << "\n";
    return 2;
  }
}
