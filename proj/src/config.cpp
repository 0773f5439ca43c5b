#include "tergan/config.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tergan/errors.hpp"

namespace tergan {
namespace {

using json = nlohmann::ordered_json;

std::size_t line_of(const std::string& text, std::size_t offset) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Line of the first `"key":` occurrence, or 0 when absent.
std::size_t find_key_line(const std::string& text, const std::string& key) {
  const std::regex re("\"" + std::regex_replace(key, std::regex(R"([.^$|()\[\]{}*+?\\])"), R"(\$&)") + "\"\\s*:");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return 0;
  return line_of(text, static_cast<std::size_t>(m.position(0)));
}

class Reader {
 public:
  Reader(const json& j, std::string path, std::string key, const std::string& text)
      : j_(j), path_(std::move(path)), key_(std::move(key)), text_(text) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) {
      const std::size_t line = key_.empty() ? 1 : std::max<std::size_t>(1, find_key_line(text_, key_));
      throw ConfigError("missing key '" + qualified(key) + "' (line " + std::to_string(line) + ")");
    }
    return *it;
  }

  Reader child(const std::string& key) { return Reader(at(key), qualified(key), key, text_); }

  double number(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "expected a finite number");
    return d;
  }

  std::uint64_t unsigned_integer(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  int integer(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<int>();
  }

  bool boolean(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  const json& array(const std::string& key, std::optional<std::size_t> size = std::nullopt) {
    const auto& v = at(key);
    if (!v.is_array()) fail(key, "expected an array");
    if (size && v.size() != *size) fail(key, "expected " + std::to_string(*size) + " elements");
    return v;
  }

  template <std::size_t N>
  std::array<std::size_t, N> size_array(const std::string& key) {
    const auto& v = array(key, N);
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number_unsigned()) fail(key, "expected non-negative integers");
      out[i] = v[i].get<std::size_t>();
    }
    return out;
  }

  template <std::size_t N>
  std::array<double, N> double_array(const std::string& key) {
    const auto& v = array(key, N);
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!v[i].is_number()) fail(key, "expected numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key())) continue;
      const std::size_t line = find_key_line(text_, it.key());
      throw ConfigError("unknown key '" + qualified(it.key()) + "'" +
                        (line ? " (line " + std::to_string(line) + ")" : std::string()));
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::size_t line = find_key_line(text_, key);
    throw ConfigError("key '" + qualified(key) + "'" + (line ? " (line " + std::to_string(line) + ")" : std::string()) +
                      ": " + what);
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_, key_;
  const std::string& text_;
  std::set<std::string> seen_;
};

DataSource data_source_from_string(const std::string& s) {
  for (auto d : {DataSource::synth, DataSource::folder, DataSource::manifest})
    if (s == to_string(d)) return d;
  throw ConfigError("data.source must be one of synth, folder, manifest (got '" + s + "')");
}

json network_json(const NetworkSpec& n) {
  return json{{"image_size", n.image_size},
              {"expr_dim", n.expr_dim},
              {"id_dim", n.id_dim},
              {"num_expressions", n.num_expressions},
              {"num_identities", n.num_identities},
              {"encoder_channels", n.encoder_channels},
              {"decoder_channels", n.decoder_channels},
              {"disc_trunk_channels", n.disc_trunk_channels},
              {"disc_trunk_fc", n.disc_trunk_fc},
              {"disc_branch_fc", n.disc_branch_fc},
              {"embed_disc_channels", n.embed_disc_channels}};
}

json augmentation_json(const AugmentationConfig& a) {
  json crops = json::array();
  for (auto p : a.crop_positions) crops.push_back(to_string(p));
  return json{{"enabled", a.enabled},
              {"crop_size", a.crop_size},
              {"crop_positions", crops},
              {"rotation_angles_deg", a.rotation_angles_deg},
              {"horizontal_flip", a.horizontal_flip}};
}

NetworkSpec read_network(Reader& r) {
  NetworkSpec n;
  n.image_size = r.unsigned_integer("image_size");
  n.expr_dim = r.unsigned_integer("expr_dim");
  n.id_dim = r.unsigned_integer("id_dim");
  n.num_expressions = r.unsigned_integer("num_expressions");
  n.num_identities = r.unsigned_integer("num_identities");
  n.encoder_channels = r.size_array<kEncoderBlocks>("encoder_channels");
  n.decoder_channels = r.size_array<kDecoderBlocks>("decoder_channels");
  n.disc_trunk_channels = r.size_array<kTrunkBlocks>("disc_trunk_channels");
  n.disc_trunk_fc = r.unsigned_integer("disc_trunk_fc");
  n.disc_branch_fc = r.size_array<2>("disc_branch_fc");
  n.embed_disc_channels = r.size_array<3>("embed_disc_channels");
  r.finish();
  return n;
}

AugmentationConfig read_augmentation(Reader& r) {
  AugmentationConfig a;
  a.enabled = r.boolean("enabled");
  a.crop_size = r.unsigned_integer("crop_size");
  a.crop_positions.clear();
  for (const auto& p : r.array("crop_positions")) {
    if (!p.is_string()) r.fail("crop_positions", "expected strings");
    try {
      a.crop_positions.push_back(crop_position_from_string(p.get<std::string>()));
    } catch (const Error& e) {
      r.fail("crop_positions", e.what());
    }
  }
  a.rotation_angles_deg.clear();
  for (const auto& v : r.array("rotation_angles_deg")) {
    if (!v.is_number()) r.fail("rotation_angles_deg", "expected numbers");
    a.rotation_angles_deg.push_back(v.get<double>());
  }
  a.horizontal_flip = r.boolean("horizontal_flip");
  r.finish();
  return a;
}

}  // namespace

const char* to_string(DataSource s) {
  switch (s) {
    case DataSource::synth: return "synth";
    case DataSource::folder: return "folder";
    case DataSource::manifest: return "manifest";
  }
  return "synth";
}

void OptimizerConfig::validate() const {
  if (!(adam.learning_rate > 0)) throw ConfigError("optimizer.learning_rate must be > 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
    throw ConfigError("optimizer betas must lie in [0, 1)");
  if (!(adam.epsilon > 0)) throw ConfigError("optimizer.epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("optimizer.batch_size must be >= 1");
}

void RunConfig::validate() const {
  network.validate();
  optimizer.validate();
  weights.validate();
  augmentation.validate(network.image_size);
  if (!(same_identity_prob >= 0 && same_identity_prob <= 1))
    throw ConfigError("pairing.same_identity_prob must lie in [0, 1]");
  if (!(grl_scale > 0)) throw ConfigError("grl_scale must be > 0");
  if (data.source != DataSource::synth && data.path.empty())
    throw ConfigError(std::string("data.path is required for source '") + to_string(data.source) + "'");
  if (data.source == DataSource::synth &&
      (data.synth_identities != network.num_identities || data.synth_expressions != network.num_expressions))
    throw ConfigError("data.synth_identities/expressions must match network.num_identities/num_expressions");
  if (data.held_out_fold < -1) throw ConfigError("data.held_out_fold must be -1 or a fold index");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

RunConfig published_config() { return RunConfig{}; }

RunConfig desk_config() {
  RunConfig c;
  c.network = NetworkSpec{}.scaled(8);
  c.network.image_size = 32;
  c.network.num_identities = 20;
  c.data.synth_identities = 20;
  c.data.folds = 5;
  c.data.held_out_fold = 0;
  c.optimizer.batch_size = 16;
  c.augmentation.crop_size = 28;
  c.stages = {300, 300, 1500};
  c.checkpoint_every = 250;
  return c;
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["network"] = network_json(c.network);
  j["optimizer"] = {{"learning_rate", c.optimizer.adam.learning_rate},
                    {"beta1", c.optimizer.adam.beta1},
                    {"beta2", c.optimizer.adam.beta2},
                    {"epsilon", c.optimizer.adam.epsilon},
                    {"batch_size", c.optimizer.batch_size}};
  j["weights"] = {{"lambda", c.weights.lambda}, {"omega1", c.weights.omega1}, {"omega2", c.weights.omega2}};
  j["data"] = {{"source", to_string(c.data.source)},
               {"path", c.data.path},
               {"synth_identities", c.data.synth_identities},
               {"synth_expressions", c.data.synth_expressions},
               {"synth_seed", c.data.synth_seed},
               {"folds", c.data.folds},
               {"fold_seed", c.data.fold_seed},
               {"held_out_fold", c.data.held_out_fold}};
  j["augmentation"] = augmentation_json(c.augmentation);
  j["pairing"] = {{"same_identity_prob", c.same_identity_prob}};
  j["stages"] = {{"pretrain_expr", c.stages.pretrain_expr},
                 {"pretrain_id", c.stages.pretrain_id},
                 {"adversarial", c.stages.adversarial}};
  j["grl_scale"] = c.grl_scale;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["checkpoint_every"] = c.checkpoint_every;
  return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = line_of(text, std::min(e.byte > 0 ? e.byte - 1 : 0, text.size()));
    throw ConfigError("malformed config JSON (line " + std::to_string(line) + ")");
  }
  RunConfig c;
  Reader root(j, "", "", text);

  {
    auto r = root.child("network");
    c.network = read_network(r);
  }
  {
    auto r = root.child("optimizer");
    c.optimizer.adam.learning_rate = r.number("learning_rate");
    c.optimizer.adam.beta1 = r.number("beta1");
    c.optimizer.adam.beta2 = r.number("beta2");
    c.optimizer.adam.epsilon = r.number("epsilon");
    c.optimizer.batch_size = r.unsigned_integer("batch_size");
    r.finish();
  }
  {
    auto r = root.child("weights");
    c.weights.lambda = r.double_array<7>("lambda");
    c.weights.omega1 = r.double_array<5>("omega1");
    c.weights.omega2 = r.double_array<5>("omega2");
    r.finish();
  }
  {
    auto r = root.child("data");
    c.data.source = data_source_from_string(r.string("source"));
    c.data.path = r.string("path");
    c.data.synth_identities = r.unsigned_integer("synth_identities");
    c.data.synth_expressions = r.unsigned_integer("synth_expressions");
    c.data.synth_seed = r.unsigned_integer("synth_seed");
    c.data.folds = r.unsigned_integer("folds");
    c.data.fold_seed = r.unsigned_integer("fold_seed");
    c.data.held_out_fold = r.integer("held_out_fold");
    r.finish();
  }
  {
    auto r = root.child("augmentation");
    c.augmentation = read_augmentation(r);
  }
  {
    auto r = root.child("pairing");
    c.same_identity_prob = r.number("same_identity_prob");
    r.finish();
  }
  {
    auto r = root.child("stages");
    c.stages.pretrain_expr = r.unsigned_integer("pretrain_expr");
    c.stages.pretrain_id = r.unsigned_integer("pretrain_id");
    c.stages.adversarial = r.unsigned_integer("adversarial");
    r.finish();
  }
  c.grl_scale = root.number("grl_scale");
  c.seed = root.unsigned_integer("seed");
  c.output_dir = root.string("output_dir");
  c.checkpoint_every = root.unsigned_integer("checkpoint_every");
  root.finish();

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path.string());
  out << serialize_config(config);
  if (!out) throw IoError("failed writing config " + path.string());
}

DatasetManifest resolve_dataset(const DataConfig& data, std::size_t image_size) {
  DatasetManifest m;
  switch (data.source) {
    case DataSource::synth:
      m = synth_generate(data.synth_identities, data.synth_expressions, image_size, data.synth_seed);
      break;
    case DataSource::folder: m = ingest_folder(data.path).manifest; break;
    case DataSource::manifest: m = load_manifest(data.path); break;
  }
  if (data.folds > 0) m = make_folds(m, data.folds, data.fold_seed);
  if (data.held_out_fold >= 0 && (!m.has_folds() || data.held_out_fold >= static_cast<int>(m.num_folds)))
    throw ConfigError("data.held_out_fold " + std::to_string(data.held_out_fold) + " does not name a fold");
  return m;
}

std::string serialize_network(const NetworkSpec& spec) { return network_json(spec).dump(); }

NetworkSpec parse_network(const std::string& text) {
  const auto j = json::parse(text);
  Reader r(j, "network", "network", text);
  auto n = read_network(r);
  n.validate();
  return n;
}

std::string serialize_augmentation(const AugmentationConfig& aug) { return augmentation_json(aug).dump(); }

AugmentationConfig parse_augmentation(const std::string& text) {
  const auto j = json::parse(text);
  Reader r(j, "augmentation", "augmentation", text);
  return read_augmentation(r);
}

}  // namespace tergan
