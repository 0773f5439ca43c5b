#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tergan/tensor.hpp"

namespace tergan {

inline const std::vector<std::string>& basic_expression_names() {
  static const std::vector<std::string> names{"anger", "disgust", "fear", "happiness", "sadness", "surprise"};
  return names;
}

struct ManifestRecord {
  std::string source;  // image path relative to the manifest, or a generator key
  int expression = 0;
  int identity = 0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Parameters that let the synthetic renderer reproduce a manifest's images.
struct SynthParams {
  std::uint64_t seed = 0;
  std::size_t image_size = 64;

  friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

struct DatasetManifest {
  std::size_t num_expressions = 0;
  std::size_t num_identities = 0;
  std::vector<std::string> expression_names;
  std::vector<std::string> identity_names;
  std::vector<ManifestRecord> records;
  std::size_t num_folds = 0;
  std::vector<int> folds;  // fold index per identity; empty until make_folds
  std::optional<SynthParams> generator;
  std::filesystem::path base_dir;  // resolves relative record paths; not serialised

  /// Throws ValidationError on out-of-range labels or an inconsistent fold table.
  void validate() const;

  bool has_folds() const { return num_folds > 0; }
  int fold_of_identity(int identity) const { return folds.at(identity); }

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.num_expressions == b.num_expressions && a.num_identities == b.num_identities &&
           a.expression_names == b.expression_names && a.identity_names == b.identity_names &&
           a.records == b.records && a.num_folds == b.num_folds && a.folds == b.folds &&
           a.generator == b.generator;
  }
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& base_dir);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Augmentation

enum class CropPosition { center, top_left, top_right, bottom_left, bottom_right };

const char* to_string(CropPosition p);
CropPosition crop_position_from_string(const std::string& s);

struct AugmentationConfig {
  bool enabled = true;
  std::size_t crop_size = 56;
  std::vector<CropPosition> crop_positions{CropPosition::center, CropPosition::top_left, CropPosition::top_right,
                                           CropPosition::bottom_left, CropPosition::bottom_right};
  std::vector<double> rotation_angles_deg{-6.0, -3.0, 3.0, 6.0};
  bool horizontal_flip = true;

  /// |crops| * (1 + |angles|) * (1 + flip).
  std::size_t variant_count() const;
  void validate(std::size_t image_size) const;

  friend bool operator==(const AugmentationConfig&, const AugmentationConfig&) = default;
};

struct LabeledImage {
  Tensor image;  // [H, W, 3]
  int expression = 0;
  int identity = 0;
};

/// Variant `index` of the enumeration crop-major, then rotation (0 = none),
/// then flip. The result is resized to image_size x image_size.
Tensor augment_variant(const Tensor& image, const AugmentationConfig& cfg, std::size_t index,
                       std::size_t image_size);

/// Every variant of `image`, labels copied unchanged.
std::vector<LabeledImage> augment(const LabeledImage& image, const AugmentationConfig& cfg, std::size_t image_size);

/// Deterministic view used outside training: the centre crop when augmentation
/// is enabled, otherwise the image itself (both at image_size).
Tensor evaluation_view(const Tensor& image, const AugmentationConfig& cfg, std::size_t image_size);

// ---------------------------------------------------------------------------
// Sampling and splits

struct PairSample {
  std::size_t source = 0;  // record indices
  std::size_t target = 0;
  bool same_identity = false;
};

/// Draws (source, target) record pairs from the identities outside the held-out fold.
class PairSampler {
 public:
  PairSampler(const DatasetManifest& manifest, std::optional<int> held_out_fold);

  PairSample sample(std::mt19937_64& rng, double same_identity_prob) const;

  /// Uniform draw over the usable records.
  std::size_t sample_record(std::mt19937_64& rng) const;

  const std::vector<std::size_t>& usable_records() const { return records_; }
  bool allows_identity(int identity) const;

 private:
  const DatasetManifest* manifest_;
  std::vector<std::size_t> records_;
  std::vector<int> identities_;
  std::vector<std::vector<std::size_t>> by_identity_;  // indexed by identity label
  std::vector<char> allowed_;
  bool any_pairable_ = false;
};

PairSample sample_pair(const PairSampler& sampler, std::mt19937_64& rng, double same_identity_prob);

/// Shuffles identities with `seed` and deals them round-robin into k folds.
DatasetManifest make_folds(const DatasetManifest& manifest, std::size_t k, std::uint64_t seed);

/// Records whose identity lies in / outside `fold`.
std::vector<std::size_t> records_in_fold(const DatasetManifest& m, int fold);
std::vector<std::size_t> records_outside_fold(const DatasetManifest& m, int fold);

// ---------------------------------------------------------------------------
// Sources

/// Per-identity appearance factors of a synthetic face.
struct SynthIdentity {
  double face_aspect;   // horizontal/vertical radius ratio
  double hue;           // hair and outline hue in [0,1)
  double eye_spacing;   // in normalised face units
};

/// Per-expression factors; disjoint from the identity factors.
struct SynthExpression {
  double mouth_curvature;
  double brow_angle_deg;
  double eye_openness;
};

SynthIdentity synth_identity(std::uint64_t seed, int identity);
SynthExpression synth_expression(int expression);
Tensor render_synth_face(const SynthIdentity& id, const SynthExpression& ex, std::size_t image_size);

/// One record per (identity, expression); images are re-rendered on load.
DatasetManifest synth_generate(std::size_t n_identities, std::size_t n_expressions, std::size_t image_size,
                               std::uint64_t seed);

/// Pixel box (top, left, height, width) that contains the mouth and nothing
/// identity-dependent.
std::array<std::size_t, 4> synth_mouth_region(std::size_t image_size);

struct IngestOptions {
  std::vector<std::string> expression_names = basic_expression_names();
};

struct IngestResult {
  DatasetManifest manifest;
  std::size_t skipped_files = 0;
  std::vector<std::string> warnings;
};

/// Reads <root>/<identity>/<expression>/<images>. Unknown expression
/// directories are reported together in one ValidationError.
IngestResult ingest_folder(const std::filesystem::path& root, const IngestOptions& options = {});

/// Loads (or renders) every record image at image_size x image_size.
std::vector<Tensor> load_images(const DatasetManifest& m, std::size_t image_size);

}  // namespace tergan
