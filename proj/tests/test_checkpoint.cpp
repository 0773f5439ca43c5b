#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "tergan/checkpoint.hpp"
#include "tergan/errors.hpp"

using namespace tergan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tergan-ckpt-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// A state mid-way through adversarial training, with non-trivial moments.
TrainState trained_state(const RunConfig& cfg) {
  auto c = cfg;
  c.stages = {2, 2, 2};
  return train(c).state;
}

}  // namespace

TEST_CASE("checkpoints restore every tensor, counter and the rng") {
  const auto dir = scratch("roundtrip");
  const auto cfg = test::tiny_config((dir / "run").string());
  auto state = trained_state(cfg);
  save_checkpoint(state, dir / "a.bin");
  auto back = load_checkpoint(dir / "a.bin", cfg.network);

  CHECK(back.stage == state.stage);
  CHECK(back.global_step == state.global_step);
  CHECK(back.stage_step == state.stage_step);
  CHECK(back.rng == state.rng);
  CHECK(back.augmentation == state.augmentation);
  auto a = state.model.all_refs(), b = back.model.all_refs();
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i]->name == b.params[i]->name);
    CHECK(a.params[i]->value == b.params[i]->value);
  }

  // Saving the restored state reproduces the file byte for byte.
  save_checkpoint(back, dir / "b.bin");
  CHECK(read_bytes(dir / "a.bin") == read_bytes(dir / "b.bin"));

  // A further step from either state lands on identical weights, which needs
  // the optimizer moments and buffers to have survived.
  TrainingData data(resolve_dataset(cfg.data, cfg.network.image_size), cfg.network.image_size, 0);
  const auto batch = sample_pair_batch(state, data, 4, 1.0);
  adversarial_step(state, batch, cfg.weights, 1.0);
  adversarial_step(back, batch, cfg.weights, 1.0);
  a = state.model.all_refs();
  b = back.model.all_refs();
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i]->value == b.params[i]->value);
}

TEST_CASE("damaged checkpoints are rejected as integrity errors") {
  const auto dir = scratch("damage");
  const auto cfg = test::tiny_config((dir / "run").string());
  save_checkpoint(initial_state(cfg), dir / "good.bin");
  const auto bytes = read_bytes(dir / "good.bin");

  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 12; ++trial) {
    auto flipped = bytes;
    // Skip magic and version, which have their own errors.
    const std::size_t at = test::random_size(rng, 12, bytes.size() - 1);
    flipped[at] = static_cast<char>(flipped[at] ^ (1 << (rng() % 8)));
    write_bytes(dir / "bad.bin", flipped);
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.bin"), IntegrityError);

    auto truncated = bytes;
    truncated.resize(test::random_size(rng, 0, bytes.size() - 1));
    write_bytes(dir / "short.bin", truncated);
    CHECK_THROWS_AS(load_checkpoint(dir / "short.bin"), IntegrityError);
  }
  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(dir / "magic.bin", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.bin"), IntegrityError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), IoError);
}

TEST_CASE("version and network mismatches are configuration errors") {
  const auto dir = scratch("mismatch");
  const auto cfg = test::tiny_config((dir / "run").string());
  save_checkpoint(initial_state(cfg), dir / "good.bin");
  auto bytes = read_bytes(dir / "good.bin");
  bytes[8] = static_cast<char>(kCheckpointFormatVersion + 1);
  write_bytes(dir / "future.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "future.bin"), ConfigError);

  auto other = cfg.network;
  other.expr_dim += 1;
  try {
    load_checkpoint(dir / "good.bin", other);
    FAIL("expected a network mismatch");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("does not match") != std::string::npos);
  }
  CHECK_NOTHROW(load_checkpoint(dir / "good.bin", cfg.network));
}
