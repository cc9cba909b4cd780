#include "doctest.h"
#include "kslab/config.hpp"
#include "kslab/error.hpp"

using namespace kslab;

namespace {

// Returns the ConfigError raised by parsing `text`.
ConfigError parse_error(const std::string& text) {
  try {
    Config::parse(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a config error");
  return ConfigError("", 0, "");
}

}  // namespace

TEST_CASE("config scalars, arrays and comments") {
  const Config cfg = Config::parse(
      "# leading comment\n"
      "[grid]\n"
      "nx = 64   ; trailing comment\n"
      "lx = 1.5e-1\n"
      "\n"
      "[model]\n"
      "preset = example_a\n"
      "label = \"with # inside\"\n"
      "haptotaxis = true\n"
      "scales = [1, 2, 4]\n"
      "empty = []\n"
      "mixed = [1, \"a\", false]\n");
  const ConfigSection grid = cfg.section("grid");
  CHECK(grid.integer("nx") == 64);
  CHECK(grid.number("lx") == doctest::Approx(0.15));
  const ConfigSection m = cfg.section("model");
  CHECK(m.string("preset") == "example_a");
  CHECK(m.string("label") == "with # inside");
  CHECK(m.boolean_or("haptotaxis", false));
  CHECK(m.numbers("scales") == std::vector<double>{1, 2, 4});
  CHECK(m.numbers("empty").empty());
  CHECK_THROWS_AS(m.numbers("mixed"), ConfigError);
  CHECK(m.find("scales")->line == 10);
  CHECK(m.keys().front() == "preset");
  CHECK(cfg.sections().size() == 2);
  CHECK_FALSE(cfg.has("solver"));
  CHECK(cfg.section("solver").number_or("t_end", 3.0) == 3.0);
}

TEST_CASE("config errors carry line and key") {
  auto e = parse_error("[grid]\nnx = 64\nnx = 32\n");
  CHECK(e.line() == 3);
  CHECK(e.key() == "grid.nx");

  e = parse_error("[grid]\nnx = 6x4\n");
  CHECK(e.line() == 2);
  CHECK(std::string(e.what()).find("malformed number") != std::string::npos);

  e = parse_error("nx = 1\n");
  CHECK(std::string(e.what()).find("outside of any section") != std::string::npos);

  CHECK(parse_error("[grid\n").line() == 1);
  CHECK(parse_error("[a]\n[a]\n").line() == 2);
  CHECK(parse_error("[a]\nx = \"open\n").key() == "a.x");
  CHECK(parse_error("[a]\nx = [1, [2]]\n").line() == 2);
  CHECK(parse_error("[a]\njust words\n").line() == 2);
  CHECK(std::string(parse_error("[a]\nx = nan\n").what()).find("non-finite") != std::string::npos);
  CHECK(parse_error("[a]\nx = two words\n").key() == "a.x");
}

TEST_CASE("typed access errors") {
  const Config cfg = Config::parse("[solver]\ndt = 0.5\nname = fast\n");
  const ConfigSection s = cfg.section("solver");
  try {
    s.number("t_end");
    FAIL("missing key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "solver.t_end");
    CHECK(std::string(e.what()).find("missing required key") != std::string::npos);
  }
  CHECK_THROWS_AS(s.integer("dt"), ConfigError);
  CHECK_THROWS_AS(s.number("name"), ConfigError);
  CHECK_THROWS_AS(s.boolean_or("dt", true), ConfigError);
  CHECK_THROWS_AS(s.restrict_keys({"dt"}), ConfigError);
  CHECK_NOTHROW(s.restrict_keys({"dt", "name"}));
  // missing sections keep their name for messages
  try {
    cfg.section("grid").integer("nx");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "grid.nx");
  }
}

TEST_CASE("scenario sections and overrides") {
  Config cfg = Config::parse(
      "[initial]\nmean = 0.04\n"
      "[scenario.low]\ninitial.mean = 0.01\n"
      "[scenario.high]\ninitial.mean = 0.2\nmodel.sigma = 0.3\n"
      "[scenarios]\n");
  const auto s = cfg.sections_with_prefix("scenario");
  REQUIRE(s.size() == 2);
  CHECK(s[0]->name() == "scenario.low");
  CHECK(s[1]->keys() == std::vector<std::string>{"initial.mean", "model.sigma"});

  cfg.apply_override("initial.mean", parse_config_value("0.5", 9, "initial.mean"));
  CHECK(cfg.section("initial").number("mean") == 0.5);
  cfg.apply_override("model.sigma", *s[1]->find("model.sigma"));
  CHECK(cfg.section("model").number("sigma") == 0.3);
  CHECK_THROWS_AS(cfg.apply_override("nodot", parse_config_value("1", 1, "nodot")), ConfigError);
}
