#include "tergan/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tergan/image.hpp"

namespace tergan {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Manifest

void DatasetManifest::validate() const {
  if (num_expressions == 0 || num_identities == 0) throw ValidationError("manifest has no classes");
  for (const auto& r : records) {
    if (r.expression < 0 || static_cast<std::size_t>(r.expression) >= num_expressions)
      throw ValidationError("manifest record '" + r.source + "' has expression label out of range");
    if (r.identity < 0 || static_cast<std::size_t>(r.identity) >= num_identities)
      throw ValidationError("manifest record '" + r.source + "' has identity label out of range");
  }
  if (num_folds > 0) {
    if (folds.size() != num_identities) throw ValidationError("manifest fold table must list every identity once");
    for (int f : folds)
      if (f < 0 || static_cast<std::size_t>(f) >= num_folds) throw ValidationError("manifest fold index out of range");
  } else if (!folds.empty()) {
    throw ValidationError("manifest lists folds but num_folds is 0");
  }
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format"] = "tergan-manifest";
  j["version"] = 1;
  j["num_expressions"] = m.num_expressions;
  j["num_identities"] = m.num_identities;
  j["expression_names"] = m.expression_names;
  j["identity_names"] = m.identity_names;
  j["num_folds"] = m.num_folds;
  j["folds"] = m.folds;
  if (m.generator) {
    j["generator"] = {{"kind", "synth"}, {"seed", m.generator->seed}, {"image_size", m.generator->image_size}};
  } else {
    j["generator"] = nullptr;
  }
  json recs = json::array();
  for (const auto& r : m.records)
    recs.push_back({{"source", r.source}, {"expression", r.expression}, {"identity", r.identity}});
  j["records"] = std::move(recs);
  return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const fs::path& base_dir) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "tergan-manifest") throw ValidationError("not a tergan manifest");
    if (j.at("version").get<int>() != 1)
      throw ValidationError("unsupported manifest version " + std::to_string(j.at("version").get<int>()));
    m.num_expressions = j.at("num_expressions").get<std::size_t>();
    m.num_identities = j.at("num_identities").get<std::size_t>();
    m.expression_names = j.at("expression_names").get<std::vector<std::string>>();
    m.identity_names = j.at("identity_names").get<std::vector<std::string>>();
    m.num_folds = j.at("num_folds").get<std::size_t>();
    m.folds = j.at("folds").get<std::vector<int>>();
    if (!j.at("generator").is_null()) {
      const auto& g = j.at("generator");
      m.generator = SynthParams{g.at("seed").get<std::uint64_t>(), g.at("image_size").get<std::size_t>()};
    }
    for (const auto& r : j.at("records"))
      m.records.push_back({r.at("source").get<std::string>(), r.at("expression").get<int>(), r.at("identity").get<int>()});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  m.base_dir = base_dir;
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_json(m);
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Augmentation

const char* to_string(CropPosition p) {
  switch (p) {
    case CropPosition::center: return "center";
    case CropPosition::top_left: return "top_left";
    case CropPosition::top_right: return "top_right";
    case CropPosition::bottom_left: return "bottom_left";
    case CropPosition::bottom_right: return "bottom_right";
  }
  return "center";
}

CropPosition crop_position_from_string(const std::string& s) {
  for (auto p : {CropPosition::center, CropPosition::top_left, CropPosition::top_right, CropPosition::bottom_left,
                 CropPosition::bottom_right})
    if (s == to_string(p)) return p;
  throw ConfigError("unknown crop position '" + s + "'");
}

std::size_t AugmentationConfig::variant_count() const {
  return crop_positions.size() * (1 + rotation_angles_deg.size()) * (horizontal_flip ? 2 : 1);
}

void AugmentationConfig::validate(std::size_t image_size) const {
  if (crop_size == 0 || crop_size > image_size)
    throw ConfigError("augmentation.crop_size must be in [1, image_size=" + std::to_string(image_size) + "]");
  if (crop_positions.empty()) throw ConfigError("augmentation.crop_positions must not be empty");
  for (double a : rotation_angles_deg)
    if (!std::isfinite(a)) throw ConfigError("augmentation.rotation_angles_deg must be finite");
}

namespace {

Tensor crop_at(const Tensor& img, CropPosition p, std::size_t size) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  if (size > h || size > w)
    throw ValidationError("image " + shape_string(img.shape()) + " is smaller than crop size " + std::to_string(size));
  std::size_t top = 0, left = 0;
  switch (p) {
    case CropPosition::center: top = (h - size) / 2; left = (w - size) / 2; break;
    case CropPosition::top_left: break;
    case CropPosition::top_right: left = w - size; break;
    case CropPosition::bottom_left: top = h - size; break;
    case CropPosition::bottom_right: top = h - size; left = w - size; break;
  }
  return image::crop(img, top, left, size, size);
}

}  // namespace

Tensor augment_variant(const Tensor& img, const AugmentationConfig& cfg, std::size_t index, std::size_t image_size) {
  if (index >= cfg.variant_count()) throw ValidationError("augmentation variant index out of range");
  const std::size_t flips = cfg.horizontal_flip ? 2 : 1;
  const std::size_t rotations = 1 + cfg.rotation_angles_deg.size();
  const std::size_t flip = index % flips;
  const std::size_t rot = (index / flips) % rotations;
  const std::size_t crop = index / (flips * rotations);

  Tensor out = crop_at(img, cfg.crop_positions[crop], cfg.crop_size);
  if (rot > 0) out = image::rotate(out, cfg.rotation_angles_deg[rot - 1]);
  if (flip) out = image::flip_horizontal(out);
  return image::resize(out, image_size, image_size);
}

std::vector<LabeledImage> augment(const LabeledImage& input, const AugmentationConfig& cfg, std::size_t image_size) {
  if (input.image.rank() != 3 || input.image.dim(0) < cfg.crop_size || input.image.dim(1) < cfg.crop_size)
    throw ValidationError("image " + shape_string(input.image.shape()) + " is smaller than crop size " +
                          std::to_string(cfg.crop_size));
  std::vector<LabeledImage> out;
  out.reserve(cfg.variant_count());
  for (std::size_t i = 0; i < cfg.variant_count(); ++i)
    out.push_back({augment_variant(input.image, cfg, i, image_size), input.expression, input.identity});
  return out;
}

Tensor evaluation_view(const Tensor& img, const AugmentationConfig& cfg, std::size_t image_size) {
  Tensor base = image::resize(img, image_size, image_size);
  if (!cfg.enabled) return base;
  return image::resize(crop_at(base, CropPosition::center, cfg.crop_size), image_size, image_size);
}

// ---------------------------------------------------------------------------
// Sampling and splits

PairSampler::PairSampler(const DatasetManifest& manifest, std::optional<int> held_out_fold) : manifest_(&manifest) {
  if (held_out_fold && !manifest.has_folds())
    throw ValidationError("a held-out fold was requested but the manifest has no folds");
  allowed_.assign(manifest.num_identities, 1);
  if (held_out_fold)
    for (std::size_t i = 0; i < manifest.num_identities; ++i)
      allowed_[i] = manifest.folds[i] != *held_out_fold;
  by_identity_.resize(manifest.num_identities);
  for (std::size_t r = 0; r < manifest.records.size(); ++r) {
    const int id = manifest.records[r].identity;
    if (!allowed_[id]) continue;
    records_.push_back(r);
    by_identity_[id].push_back(r);
  }
  for (std::size_t i = 0; i < by_identity_.size(); ++i) {
    if (by_identity_[i].empty()) continue;
    identities_.push_back(static_cast<int>(i));
    if (by_identity_[i].size() >= 2) any_pairable_ = true;
  }
  if (records_.empty()) throw ValidationError("no training records outside the held-out fold");
}

bool PairSampler::allows_identity(int identity) const { return allowed_.at(identity) != 0; }

std::size_t PairSampler::sample_record(std::mt19937_64& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, records_.size() - 1);
  return records_[pick(rng)];
}

PairSample PairSampler::sample(std::mt19937_64& rng, double same_identity_prob) const {
  if (!(same_identity_prob >= 0.0 && same_identity_prob <= 1.0))
    throw ValidationError("same_identity_prob must lie in [0,1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  PairSample p;
  p.source = sample_record(rng);
  p.same_identity = coin(rng) < same_identity_prob;
  if (p.same_identity) {
    if (!any_pairable_) throw ValidationError("no identity has two or more records for same-identity pairing");
    while (by_identity_[manifest_->records[p.source].identity].size() < 2) p.source = sample_record(rng);
    const auto& pool = by_identity_[manifest_->records[p.source].identity];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 2);
    std::size_t k = pick(rng);
    if (pool[k] == p.source) k = pool.size() - 1;  // skip the source itself
    p.target = pool[k];
  } else {
    std::uniform_int_distribution<std::size_t> pick_id(0, identities_.size() - 1);
    const auto& pool = by_identity_[identities_[pick_id(rng)]];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    p.target = pool[pick(rng)];
  }
  return p;
}

PairSample sample_pair(const PairSampler& sampler, std::mt19937_64& rng, double same_identity_prob) {
  return sampler.sample(rng, same_identity_prob);
}

DatasetManifest make_folds(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > manifest.num_identities)
    throw ValidationError("cannot split " + std::to_string(manifest.num_identities) + " identities into " +
                          std::to_string(k) + " folds");
  std::vector<int> order(manifest.num_identities);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetManifest out = manifest;
  out.num_folds = k;
  out.folds.assign(manifest.num_identities, 0);
  for (std::size_t i = 0; i < order.size(); ++i) out.folds[order[i]] = static_cast<int>(i % k);
  return out;
}

std::vector<std::size_t> records_in_fold(const DatasetManifest& m, int fold) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < m.records.size(); ++r)
    if (m.folds.at(m.records[r].identity) == fold) out.push_back(r);
  return out;
}

std::vector<std::size_t> records_outside_fold(const DatasetManifest& m, int fold) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < m.records.size(); ++r)
    if (m.folds.at(m.records[r].identity) != fold) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic faces

namespace {

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh);
  const double f = hh - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double ellipse_radius(double u, double v, double cu, double cv, double ru, double rv) {
  const double a = (u - cu) / ru, b = (v - cv) / rv;
  return std::sqrt(a * a + b * b);
}

double segment_distance(double u, double v, double u0, double v0, double u1, double v1) {
  const double du = u1 - u0, dv = v1 - v0;
  const double t = std::clamp(((u - u0) * du + (v - v0) * dv) / (du * du + dv * dv), 0.0, 1.0);
  const double pu = u0 + t * du - u, pv = v0 + t * dv - v;
  return std::sqrt(pu * pu + pv * pv);
}

// Geometry in normalised coordinates: u, v in [-1, 1], v pointing down.
constexpr double kFaceCenterV = 0.08;
constexpr double kFaceRadiusV = 0.72;
constexpr double kFaceRadiusU = 0.62;
constexpr double kOutline = 0.06;
constexpr double kEyeV = -0.08;
constexpr double kBrowV = -0.27;
constexpr double kMouthV = 0.36;
constexpr double kMouthHalfWidth = 0.20;
constexpr double kStroke = 0.09;
constexpr double kMouthBend = 0.14;
constexpr double kEyeHeight = 0.12;

Rgb shade(const SynthIdentity& id, const SynthExpression& ex, double u, double v) {
  const Rgb background{0.55, 0.60, 0.66};
  const Rgb hair = hsv(id.hue, 0.65, 0.55);
  const Rgb outline = hsv(id.hue, 0.7, 0.3);
  const Rgb skin{0.93, 0.79, 0.66};
  const Rgb dark{0.12, 0.10, 0.12};
  const Rgb lips{0.62, 0.16, 0.18};

  const double ru = kFaceRadiusU * id.face_aspect;
  const double face = ellipse_radius(u, v, 0.0, kFaceCenterV, ru, kFaceRadiusV);
  if (face > 1.0) {
    const double hair_r = ellipse_radius(u, v, 0.0, -0.1, ru + 0.12, 0.82);
    return (hair_r <= 1.0 && v < 0.35) ? hair : background;
  }
  if (face > 1.0 - kOutline) return outline;

  const double half = id.eye_spacing / 2.0;
  for (int side : {-1, 1}) {
    const double cu = side * half;
    // Eye: white sclera with a dark iris, height set by openness.
    const double eye = ellipse_radius(u, v, cu, kEyeV, 0.11, kEyeHeight * ex.eye_openness);
    if (eye <= 1.0) {
      const double iris = std::hypot(u - cu, v - kEyeV);
      return iris < 0.055 ? dark : Rgb{0.97, 0.97, 0.97};
    }
    // Brow: its inner end is raised or lowered by the brow angle.
    const double a = ex.brow_angle_deg * std::numbers::pi / 180.0;
    const double len = 0.11;
    const double du = len * std::cos(a), dv = len * std::sin(a);
    const double u_in = cu - side * du, v_in = kBrowV + dv;
    const double u_out = cu + side * du, v_out = kBrowV - dv;
    if (segment_distance(u, v, u_in, v_in, u_out, v_out) < kStroke / 2) return dark;
  }

  if (std::abs(u) <= kMouthHalfWidth) {
    // Parabolic mouth: corners at kMouthV, centre displaced by the curvature.
    const double x = u / kMouthHalfWidth;
    const double mouth_v = kMouthV + kMouthBend * ex.mouth_curvature * (1.0 - x * x);
    if (std::abs(v - mouth_v) < kStroke / 2) return lips;
  }
  return skin;
}

}  // namespace

SynthIdentity synth_identity(std::uint64_t seed, int identity) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(identity), 0x5eedu};
  std::mt19937_64 rng(seq);
  SynthIdentity id;
  id.face_aspect = 0.80 + 0.20 * unit_draw(rng);
  id.hue = unit_draw(rng);
  id.eye_spacing = 0.40 + 0.16 * unit_draw(rng);
  return id;
}

SynthExpression synth_expression(int expression) {
  // anger, disgust, fear, happiness, sadness, surprise
  static constexpr std::array<SynthExpression, 6> table{{
      {-0.35, 22.0, 0.55},
      {-0.65, 10.0, 0.35},
      {-0.15, -18.0, 1.00},
      {0.90, 0.0, 0.70},
      {-0.90, -24.0, 0.60},
      {0.15, -30.0, 1.05},
  }};
  if (expression < 0 || expression >= static_cast<int>(table.size()))
    throw ValidationError("synthetic expressions are limited to 6 classes");
  return table[expression];
}

Tensor render_synth_face(const SynthIdentity& id, const SynthExpression& ex, std::size_t image_size) {
  constexpr int kSuper = 4;
  Tensor img({image_size, image_size, 3});
  const double px = 2.0 / static_cast<double>(image_size);
  for (std::size_t y = 0; y < image_size; ++y)
    for (std::size_t x = 0; x < image_size; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double u = -1.0 + (x + (sx + 0.5) / kSuper) * px;
          const double v = -1.0 + (y + (sy + 0.5) / kSuper) * px;
          const Rgb c = shade(id, ex, u, v);
          acc[0] += c.r;
          acc[1] += c.g;
          acc[2] += c.b;
        }
      for (int c = 0; c < 3; ++c)
        img[(y * image_size + x) * 3 + c] = static_cast<float>(acc[c] / (kSuper * kSuper));
    }
  return img;
}

std::array<std::size_t, 4> synth_mouth_region(std::size_t image_size) {
  auto to_px = [image_size](double t) { return static_cast<std::size_t>(std::floor((t + 1.0) / 2.0 * image_size)); };
  const std::size_t top = to_px(kMouthV - kMouthBend - kStroke / 2), bottom = to_px(kMouthV + kMouthBend + kStroke / 2) + 1;
  const std::size_t left = to_px(-kMouthHalfWidth - kStroke / 2), right = to_px(kMouthHalfWidth + kStroke / 2) + 1;
  return {top, left, bottom - top, right - left};
}

DatasetManifest synth_generate(std::size_t n_identities, std::size_t n_expressions, std::size_t image_size,
                               std::uint64_t seed) {
  if (n_identities < 2) throw ValidationError("synthetic data needs at least 2 identities");
  if (n_expressions < 2 || n_expressions > 6) throw ValidationError("synthetic data supports 2 to 6 expressions");
  DatasetManifest m;
  m.num_expressions = n_expressions;
  m.num_identities = n_identities;
  m.expression_names.assign(basic_expression_names().begin(), basic_expression_names().begin() + n_expressions);
  for (std::size_t i = 0; i < n_identities; ++i) {
    std::ostringstream name;
    name << "id" << std::setw(3) << std::setfill('0') << i;
    m.identity_names.push_back(name.str());
    for (std::size_t e = 0; e < n_expressions; ++e)
      m.records.push_back({"synth:" + std::to_string(i) + ":" + std::to_string(e), static_cast<int>(e),
                           static_cast<int>(i)});
  }
  m.generator = SynthParams{seed, image_size};
  return m;
}

// ---------------------------------------------------------------------------
// Folder ingestion

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

IngestResult ingest_folder(const fs::path& root, const IngestOptions& options) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
  std::map<std::string, int> expr_index;
  for (std::size_t i = 0; i < options.expression_names.size(); ++i)
    expr_index[lower(options.expression_names[i])] = static_cast<int>(i);

  IngestResult result;
  DatasetManifest& m = result.manifest;
  m.num_expressions = options.expression_names.size();
  m.expression_names = options.expression_names;
  m.base_dir = root;

  std::set<std::string> unknown;
  for (const auto& id_dir : sorted_entries(root, true)) {
    const int identity = static_cast<int>(m.identity_names.size());
    bool any = false;
    for (const auto& ex_dir : sorted_entries(id_dir, true)) {
      auto it = expr_index.find(lower(ex_dir.filename().string()));
      if (it == expr_index.end()) {
        unknown.insert(fs::relative(ex_dir, root).string());
        continue;
      }
      for (const auto& file : sorted_entries(ex_dir, false)) {
        try {
          (void)image::load_png(file);
        } catch (const IoError& e) {
          ++result.skipped_files;
          result.warnings.push_back(e.what());
          continue;
        }
        m.records.push_back({fs::relative(file, root).generic_string(), it->second, identity});
        any = true;
      }
    }
    if (any) m.identity_names.push_back(id_dir.filename().string());
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw ValidationError("unknown expression directories: " + list);
  }
  if (m.identity_names.empty()) throw ValidationError("no identities found under " + root.string());
  m.num_identities = m.identity_names.size();
  m.validate();
  return result;
}

std::vector<Tensor> load_images(const DatasetManifest& m, std::size_t image_size) {
  std::vector<Tensor> out(m.records.size());
  if (m.generator) {
    const auto n = static_cast<std::ptrdiff_t>(m.records.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      const auto& rec = m.records[r];
      Tensor img = render_synth_face(synth_identity(m.generator->seed, rec.identity),
                                     synth_expression(rec.expression), m.generator->image_size);
      out[r] = image::resize(img, image_size, image_size);
    }
    return out;
  }
  for (std::size_t r = 0; r < m.records.size(); ++r)
    out[r] = image::resize(image::load_png(m.base_dir / m.records[r].source), image_size, image_size);
  return out;
}

}  // namespace tergan
