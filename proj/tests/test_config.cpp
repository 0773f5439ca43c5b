#include <doctest.h>

#include <regex>

#include "support.hpp"
#include "tergan/config.hpp"
#include "tergan/errors.hpp"

using namespace tergan;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

/// 1-based line of the first occurrence of `needle`.
std::size_t line_containing(const std::string& text, const std::string& needle) {
  const auto at = text.find(needle);
  REQUIRE(at != std::string::npos);
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + at, '\n'));
}

RunConfig random_config(std::mt19937_64& rng) {
  RunConfig c = rng() % 2 ? published_config() : desk_config();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  c.optimizer.adam.learning_rate = 1e-5 + u(rng) * 1e-3;
  c.optimizer.batch_size = test::random_size(rng, 1, 128);
  for (auto& l : c.weights.lambda) l = u(rng);
  c.same_identity_prob = u(rng);
  c.grl_scale = 0.1 + u(rng);
  c.seed = rng();
  c.stages.adversarial = rng() % 5000;
  c.augmentation.enabled = rng() % 2;
  c.augmentation.horizontal_flip = rng() % 2;
  c.output_dir = "runs/r" + std::to_string(rng() % 1000);
  return c;
}

}  // namespace

TEST_CASE("configs round-trip and serialization is a fixed point") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_config(rng);
    const auto text = serialize_config(c);
    const auto back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
  }
  CHECK(parse_config(serialize_config(published_config())) == published_config());
}

TEST_CASE("a missing key is reported with its name and line") {
  const auto text = serialize_config(desk_config());
  const std::regex drop("\\s*\"grl_scale\": [^,\\n]*,");
  const auto broken = std::regex_replace(text, drop, "");
  REQUIRE(broken != text);
  const auto msg = config_error(broken);
  CHECK(msg.find("grl_scale") != std::string::npos);
  CHECK(msg.find("line") != std::string::npos);

  const std::regex drop_nested("\\s*\"beta1\": [^,\\n]*,");
  const auto nested = std::regex_replace(text, drop_nested, "");
  REQUIRE(nested != text);
  const auto nmsg = config_error(nested);
  CHECK(nmsg.find("beta1") != std::string::npos);
  CHECK(nmsg.find("line " + std::to_string(line_containing(nested, "\"optimizer\""))) != std::string::npos);
}

TEST_CASE("an unknown key is reported with its name and line") {
  auto text = serialize_config(desk_config());
  const auto at = text.find("\"seed\"");
  REQUIRE(at != std::string::npos);
  text.insert(at, "\"sede\": 3,\n  ");
  const auto msg = config_error(text);
  CHECK(msg.find("sede") != std::string::npos);
  CHECK(msg.find("line " + std::to_string(line_containing(text, "\"sede\""))) != std::string::npos);
}

TEST_CASE("invalid values are configuration errors") {
  auto c = desk_config();
  c.optimizer.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = desk_config();
  c.same_identity_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
  auto text = serialize_config(desk_config());
  const auto at = text.find("\"seed\": ");
  text.replace(at, 9, "\"seed\": -5");
  CHECK(config_error(text).find("seed") != std::string::npos);
}

TEST_CASE("the desk preset holds out the first fold") {
  const auto c = desk_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.data.held_out_fold == 0);
  CHECK(c.network.image_size == 32);
  CHECK(published_config().network == NetworkSpec{});
}
