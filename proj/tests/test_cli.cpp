#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"
#include "tergan/config.hpp"

using namespace tergan;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "tergan-cli";

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Runs the CLI with stdout and stderr captured; returns the exit status.
int run(const std::string& args, std::string* err = nullptr) {
  const auto out = kRoot / "stdout.txt", errf = kRoot / "stderr.txt";
  const std::string cmd =
      std::string(TERGAN_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + errf.string();
  const int status = std::system(cmd.c_str());
  if (err) *err = slurp(errf);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh(const std::string& name) {
  fs::create_directories(kRoot);
  auto p = kRoot / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Tiny run config written to disk, output under `dir`.
fs::path tiny_config_file(const fs::path& dir) {
  const auto cfg = test::tiny_config((dir / "run").string());
  save_config(cfg, dir / "config.json");
  return dir / "config.json";
}

}  // namespace

TEST_CASE("synth output is reproducible and fold counts are checked") {
  const auto a = fresh("synth-a"), b = fresh("synth-b");
  CHECK(run("synth --identities 4 --expressions 6 --folds 2 --image-size 32 --out " + a.string()) == 0);
  CHECK(run("synth --identities 4 --expressions 6 --folds 2 --image-size 32 --out " + b.string()) == 0);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  std::size_t pngs = 0;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.path().extension() == ".png") {
      ++pngs;
      CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
    }
  CHECK(pngs == 24);

  std::string err;
  CHECK(run("synth --identities 20 --folds 21 --out " + fresh("synth-bad").string(), &err) == 1);
  CHECK(err.find("error[") != std::string::npos);
  CHECK(run("synth --bogus", &err) == 1);
  CHECK(err.find("error[usage]") != std::string::npos);
}

TEST_CASE("init-config writes a parseable configuration") {
  const auto dir = fresh("init");
  CHECK(run("init-config --desk --out " + (dir / "c.json").string()) == 0);
  CHECK(load_config(dir / "c.json") == desk_config());
  CHECK(run("init-config --out " + (dir / "p.json").string()) == 0);
  CHECK(load_config(dir / "p.json") == published_config());
}

TEST_CASE("train with zero budgets writes an initial checkpoint") {
  const auto dir = fresh("zero");
  const auto cfg = tiny_config_file(dir);
  CHECK(run("train --config " + cfg.string() + " --stages 0,0,0") == 0);
  CHECK(fs::exists(dir / "run" / "checkpoint.bin"));
  std::string err;
  CHECK(run("transfer --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --config " + cfg.string() +
                " --source x.png --target y.png --out z.png",
            &err) != 0);
}

TEST_CASE("a config with a missing key names it and exits with 1") {
  const auto dir = fresh("missing");
  auto text = slurp(tiny_config_file(dir));
  text = std::regex_replace(text, std::regex("\\s*\"grl_scale\": [^,\\n]*,"), "");
  std::ofstream(dir / "broken.json") << text;
  std::string err;
  CHECK(run("train --config " + (dir / "broken.json").string(), &err) == 1);
  CHECK(err.find("error[config]") != std::string::npos);
  CHECK(err.find("grl_scale") != std::string::npos);
  CHECK(err.find("line") != std::string::npos);
}

TEST_CASE("resumed training continues the metrics of an uninterrupted run") {
  const auto dir = fresh("resume");
  const auto cfg = tiny_config_file(dir);
  const auto full = dir / "full", part = dir / "part";
  REQUIRE(run("train --config " + cfg.string() + " --stages 2,2,4 --output-dir " + full.string()) == 0);
  REQUIRE(run("train --config " + cfg.string() + " --stages 2,2,2 --output-dir " + part.string()) == 0);
  REQUIRE(run("train --config " + cfg.string() + " --stages 2,2,4 --output-dir " + part.string() + " --resume " +
              (part / "checkpoint.bin").string()) == 0);
  const auto a = slurp(full / "metrics.jsonl");
  CHECK(!a.empty());
  CHECK(a == slurp(part / "metrics.jsonl"));
  CHECK(slurp(full / "checkpoint.bin") == slurp(part / "checkpoint.bin"));
}

TEST_CASE("evaluation and embedding commands on a trained checkpoint") {
  const auto dir = fresh("apps");
  const auto cfg = tiny_config_file(dir);
  REQUIRE(run("train --config " + cfg.string() + " --stages 2,2,2") == 0);
  const std::string ckpt = "--checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --config " + cfg.string();
  const auto data = dir / "data";
  REQUIRE(run("synth --identities 16 --folds 8 --image-size 32 --out " + data.string()) == 0);
  const auto manifest = (data / "manifest.json").string();

  CHECK(run("eval-fer " + ckpt + " --manifest " + manifest + " --k 8 --out " + (dir / "fer.json").string()) == 0);
  const auto fer = nlohmann::json::parse(slurp(dir / "fer.json"));
  CHECK(fer.at("per_fold").size() == 8);
  const double mean = fer.at("mean").get<double>();
  CHECK((mean >= 0.0 && mean <= 1.0));
  std::string err;
  CHECK(run("eval-fer " + ckpt + " --manifest " + manifest + " --k 5", &err) == 1);

  const auto csv = dir / "emb.csv", csv2 = dir / "emb2.csv";
  CHECK(run("dump-embeddings " + ckpt + " --manifest " + manifest + " --project --seed 3 --out " + csv.string()) == 0);
  CHECK(run("dump-embeddings " + ckpt + " --manifest " + manifest + " --project --seed 3 --out " + csv2.string()) == 0);
  const auto text = slurp(csv);
  CHECK(text == slurp(csv2));
  CHECK(std::count(text.begin(), text.end(), '\n') == 16 * 6 + 1);
  CHECK(fs::exists(dir / "emb.baseline.csv"));
  CHECK(fs::exists(dir / "emb.diagnostics.json"));

  const auto face = (data / "id000" / "happiness.png");
  const auto other = (data / "id001" / "sadness.png");
  REQUIRE(fs::exists(face));
  CHECK(run("transfer " + ckpt + " --source " + face.string() + " --target " + other.string() + " --out " +
            (dir / "t.png").string()) == 0);
  CHECK(fs::exists(dir / "t.png"));
  CHECK(run("edit " + ckpt + " --target " + other.string() + " --exemplar " + face.string() + " --out " +
            (dir / "e.png").string()) == 0);
  CHECK(slurp(dir / "t.png") == slurp(dir / "e.png"));
  CHECK(run("recognize " + ckpt + " --manifest " + manifest + " --fold 0 --images " + face.string()) == 0);
  CHECK(run("transfer " + ckpt + " --source missing.png --target " + other.string() + " --out x.png", &err) == 3);
}
