#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "support.hpp"
#include "tergan/data.hpp"
#include "tergan/errors.hpp"
#include "tergan/image.hpp"

using namespace tergan;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tergan-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

AugmentationConfig random_augmentation(std::mt19937_64& rng) {
  AugmentationConfig c;
  const std::vector<CropPosition> all{CropPosition::center, CropPosition::top_left, CropPosition::top_right,
                                      CropPosition::bottom_left, CropPosition::bottom_right};
  c.crop_positions.clear();
  for (const auto p : all)
    if (rng() % 2) c.crop_positions.push_back(p);
  if (c.crop_positions.empty()) c.crop_positions.push_back(CropPosition::center);
  c.rotation_angles_deg.clear();
  const std::size_t n_angles = test::random_size(rng, 0, 6);
  for (std::size_t i = 0; i < n_angles; ++i)
    c.rotation_angles_deg.push_back(std::uniform_real_distribution<double>(-10, 10)(rng));
  c.horizontal_flip = rng() % 2;
  c.crop_size = test::random_size(rng, 8, 16);
  return c;
}

}  // namespace

TEST_CASE("the default augmentation emits fifty variants per image") {
  const AugmentationConfig cfg;
  CHECK(cfg.variant_count() == 50);
  CHECK(cfg.crop_positions.size() == 5);
  CHECK(cfg.rotation_angles_deg == std::vector<double>{-6, -3, 3, 6});
  const LabeledImage img{Tensor({64, 64, 3}, 0.5f), 2, 7};
  const auto out = augment(img, cfg, 64);
  CHECK(out.size() == 50);
  for (const auto& v : out) {
    CHECK(v.image.shape() == Shape{64, 64, 3});
    CHECK(v.expression == 2);
    CHECK(v.identity == 7);
  }
}

TEST_CASE("variant count follows crops x (1 + angles) x (1 + flip) over random configs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto cfg = random_augmentation(rng);
    const std::size_t expected =
        cfg.crop_positions.size() * (1 + cfg.rotation_angles_deg.size()) * (cfg.horizontal_flip ? 2 : 1);
    CHECK(cfg.variant_count() == expected);
    const LabeledImage img{test::random_tensor({16, 16, 3}, rng, 0, 1), 1, 1};
    CHECK(augment(img, cfg, 16).size() == expected);
  }
}

TEST_CASE("augmentation variants are ordered crop, rotation, flip") {
  std::mt19937_64 rng(32);
  const auto img = test::random_tensor({32, 32, 3}, rng, 0, 1);
  AugmentationConfig cfg;
  cfg.crop_size = 24;
  // Index 1 is the flipped unrotated centre crop.
  CHECK(augment_variant(img, cfg, 1, 32) == image::flip_horizontal(augment_variant(img, cfg, 0, 32)));
  CHECK_THROWS_AS(augment_variant(img, cfg, 50, 32), ValidationError);
  cfg.crop_size = 40;
  CHECK_THROWS_AS(cfg.validate(32), Error);
}

TEST_CASE("evaluation view is the centre crop when augmentation is on") {
  std::mt19937_64 rng(33);
  const auto img = test::random_tensor({32, 32, 3}, rng, 0, 1);
  AugmentationConfig cfg;
  cfg.crop_size = 24;
  CHECK(evaluation_view(img, cfg, 32) == augment_variant(img, cfg, 0, 32));
  cfg.enabled = false;
  CHECK(evaluation_view(img, cfg, 32) == img);
}

TEST_CASE("folds partition identities evenly and deterministically") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t ids = test::random_size(rng, 2, 40);
    const std::size_t k = test::random_size(rng, 1, ids);
    const auto m = make_folds(synth_generate(ids, 3, 16, 1), k, rng());
    std::vector<std::size_t> per_fold(k, 0);
    for (int f : m.folds) ++per_fold.at(f);
    const auto [lo, hi] = std::minmax_element(per_fold.begin(), per_fold.end());
    CHECK(*hi - *lo <= 1);
    for (std::size_t f = 0; f < k; ++f) {
      const auto in = records_in_fold(m, static_cast<int>(f));
      const auto out = records_outside_fold(m, static_cast<int>(f));
      CHECK(in.size() + out.size() == m.records.size());
      std::set<int> in_ids;
      for (auto r : in) in_ids.insert(m.records[r].identity);
      for (auto r : out) CHECK(in_ids.count(m.records[r].identity) == 0);
    }
  }
  const auto m80 = make_folds(synth_generate(80, 6, 16, 1), 8, 0);
  for (int f = 0; f < 8; ++f) {
    std::set<int> ids;
    for (auto r : records_in_fold(m80, f)) ids.insert(m80.records[r].identity);
    CHECK(ids.size() == 10);
  }
  CHECK(make_folds(m80, 8, 5) == make_folds(m80, 8, 5));
  CHECK_THROWS_AS(make_folds(synth_generate(20, 6, 16, 1), 21, 0), ValidationError);
}

TEST_CASE("pair sampling respects held-out folds and same-identity pairing") {
  const auto m = make_folds(synth_generate(10, 6, 16, 1), 5, 3);
  PairSampler sampler(m, 2);
  std::mt19937_64 rng(35);
  for (int i = 0; i < 500; ++i) {
    const auto p = sampler.sample(rng, 1.0);
    CHECK(p.same_identity);
    CHECK(p.source != p.target);
    CHECK(m.records[p.source].identity == m.records[p.target].identity);
    CHECK(m.folds[m.records[p.source].identity] != 2);
    const auto q = sampler.sample(rng, 0.0);
    CHECK(!q.same_identity);
    CHECK(m.folds[m.records[q.target].identity] != 2);
  }
  CHECK_THROWS_AS(sampler.sample(rng, 1.5), ValidationError);
  CHECK_THROWS_AS(PairSampler(synth_generate(4, 2, 16, 1), 0), ValidationError);
}

TEST_CASE("synthetic identity and expression factors are disjoint") {
  const std::size_t size = 48;
  const auto box = synth_mouth_region(size);
  // The mouth region depends on the expression only.
  const auto a = render_synth_face(synth_identity(7, 0), synth_expression(3), size);
  const auto b = render_synth_face(synth_identity(7, 5), synth_expression(3), size);
  const auto c = render_synth_face(synth_identity(7, 0), synth_expression(1), size);
  CHECK(image::crop(a, box[0], box[1], box[2], box[3]) == image::crop(b, box[0], box[1], box[2], box[3]));
  CHECK_FALSE(image::crop(a, box[0], box[1], box[2], box[3]) == image::crop(c, box[0], box[1], box[2], box[3]));
  CHECK_FALSE(a == b);
  for (float v : a.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("synthetic manifests are complete and reproducible") {
  const auto m = synth_generate(20, 6, 32, 7);
  CHECK(m.records.size() == 120);
  CHECK(m.num_identities == 20);
  CHECK(m == synth_generate(20, 6, 32, 7));
  const auto imgs = load_images(m, 32);
  CHECK(imgs.size() == 120);
  CHECK(imgs[0] == load_images(m, 32)[0]);
  CHECK_THROWS_AS(synth_generate(1, 6, 32, 7), ValidationError);
  CHECK_THROWS_AS(synth_generate(5, 7, 32, 7), ValidationError);
}

TEST_CASE("manifests round-trip through JSON") {
  const auto m = make_folds(synth_generate(6, 4, 16, 9), 3, 2);
  const auto dir = scratch_dir("manifest");
  save_manifest(m, dir / "m.json");
  CHECK(load_manifest(dir / "m.json") == m);
  CHECK(manifest_to_json(load_manifest(dir / "m.json")) == manifest_to_json(m));
  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), IoError);
  DatasetManifest bad = m;
  bad.records[0].expression = 9;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("folder ingestion indexes identities and expressions") {
  const auto root = scratch_dir("ingest");
  std::mt19937_64 rng(36);
  for (const std::string id : {"alice", "bob"})
    for (const std::string ex : {"happiness", "Sadness"}) {
      fs::create_directories(root / id / ex);
      image::save_png(root / id / ex / "0.png", test::random_tensor({20, 20, 3}, rng, 0, 1));
    }
  std::ofstream(root / "bob" / "happiness" / "notes.png") << "not an image";
  const auto r = ingest_folder(root);
  CHECK(r.manifest.num_identities == 2);
  CHECK(r.manifest.records.size() == 4);
  CHECK(r.skipped_files == 1);
  CHECK(r.warnings.size() == 1);
  CHECK(r.manifest.identity_names == std::vector<std::string>{"alice", "bob"});
  const auto imgs = load_images(r.manifest, 32);
  CHECK(imgs[0].shape() == Shape{32, 32, 3});

  fs::create_directories(root / "alice" / "smirk");
  fs::create_directories(root / "bob" / "contempt");
  try {
    ingest_folder(root);
    FAIL("expected unknown directories to be rejected");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("smirk") != std::string::npos);
    CHECK(msg.find("contempt") != std::string::npos);
  }
  CHECK_THROWS_AS(ingest_folder(root / "nope"), IoError);
}

TEST_CASE("png files round-trip at eight bits") {
  const auto dir = scratch_dir("png");
  std::mt19937_64 rng(37);
  const auto img = test::random_tensor({9, 7, 3}, rng, 0, 1);
  image::save_png(dir / "x.png", img);
  const auto back = image::load_png(dir / "x.png");
  CHECK(back.shape() == img.shape());
  CHECK(test::max_abs_diff(back, img) <= 0.5 / 255 + 1e-6);
}
