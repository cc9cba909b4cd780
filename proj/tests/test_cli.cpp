#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "kslab/cli.hpp"
#include "kslab/error.hpp"
#include "test_support.hpp"

using namespace kslab;
using testing::read_file;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

const char* kExampleA =
    "[grid]\nnx = 12\nny = 12\n"
    "[model]\npreset = example_a\nsigma = 0.5\n"
    "[initial]\nkind = perturbed\nbase = 0.04\namplitude = 0.01\nseed = 3\n"
    "[solver]\ndt = 0.01\nt_end = 0.5\nsnapshot_interval = 0.25\n";

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::string& command, const fs::path& config, const fs::path& out,
               int jobs = 1, std::optional<std::uint64_t> seed = {}) {
  CliOptions opt;
  opt.config = config;
  opt.out = out;
  opt.jobs = jobs;
  opt.seed = seed;
  std::ostringstream o, e;
  const int code = run_command(command, opt, o, e);
  return {code, o.str(), e.str()};
}

// Every file under dir with its content, manifest excluded.
std::map<std::string, std::string> contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST_CASE("model and initial data from config") {
  const Config cfg = Config::parse(
      "[domain]\ndim = 2\nlx = 2.0\n[grid]\nnx = 8\nny = 4\n"
      "[model]\npreset = example_b\nmu = 2.0\nsensitivity = prototype\nbeta = 1.5\n"
      "[initial]\nkind = cosine\ncenter = [0.2, 0.3]\nmean = 0.5\n");
  const ModelSpec m = model_from_config(cfg);
  CHECK(m.name == "example_b");
  CHECK(m.domain.measure() == doctest::Approx(2.0));
  CHECK(m.source.mu == 2.0);
  CHECK(m.source.r == 1.0);  // kept from the preset
  CHECK(m.sensitivity.form == SensitivityForm::prototype);
  CHECK(m.sensitivity.beta == 1.5);
  const InitialSpec init = initial_from_config(cfg);
  CHECK(init.kind == InitialKind::cosine);
  CHECK(init.center[1] == 0.3);
  CHECK(*init.mean == 0.5);

  CHECK(seed_from_config(Config::parse("[initial]\nseed = 9\n"), std::nullopt) == 9);
  CHECK(seed_from_config(Config::parse("[initial]\nseed = 9\n"), 4) == 4);
  CHECK(seed_from_config(Config::parse(""), std::nullopt) == 0);

  CHECK_THROWS_AS(model_from_config(Config::parse("[grid]\nnx = 8\n[model]\npreset = nope\n")),
                  ConfigError);
  CHECK_THROWS_AS(model_from_config(Config::parse("[grid]\nnx = 8\n[model]\npreset = example_a\n"
                                                  "source = quadratic\n")),
                  ConfigError);
  CHECK_THROWS_AS(model_from_config(Config::parse("[grid]\nnx = 8\n[model]\npreset = example_a\n"
                                                  "sigmaa = 0.5\n")),
                  ConfigError);
}

TEST_CASE("scenario overrides") {
  const Config cfg = Config::parse(std::string(kExampleA) +
                                   "[scenario.a]\ninitial.mean = 0.1\n"
                                   "[scenario.b]\nmodel.sigma = 0.25\nsolver.t_end = 0.1\n");
  const auto s = scenarios_from_config(cfg, std::nullopt);
  REQUIRE(s.size() == 2);
  CHECK(s[0].id == "a");
  CHECK(*s[0].initial.mean == 0.1);
  CHECK(s[0].model.production.sigma == 0.5);
  CHECK(s[1].model.production.sigma == 0.25);
  CHECK(s[1].solver.t_end == 0.1);
  CHECK(s[1].seed == 3);
}

TEST_CASE("run command outputs and exit codes") {
  TempDir tmp("cli_run");
  const auto cfg = tmp.write("a.cfg", kExampleA);

  SUBCASE("valid example A run") {
    const auto r = invoke("run", cfg, tmp.path() / "out");
    CHECK(r.code == kExitOk);
    for (const char* f : {"series.csv", "summary.json", "manifest.json", "snapshots/snapshots.idx"})
      CHECK(fs::exists(tmp.path() / "out" / f));
    const auto summary = nlohmann::json::parse(read_file(tmp.path() / "out/summary.json"));
    CHECK(summary["model"] == "example_a");
  }
  SUBCASE("missing required key") {
    const auto bad = tmp.write("bad.cfg", "[grid]\nnx = 8\n[model]\npreset = example_a\n");
    const auto r = invoke("run", bad, tmp.path() / "out");
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("solver.t_end") != std::string::npos);
  }
  SUBCASE("parse error") {
    const auto bad = tmp.write("bad.cfg", "[grid]\nnx = 8\nnx = 9\n");
    const auto r = invoke("run", bad, tmp.path() / "out");
    CHECK(r.code == kExitConfig);
    CHECK(r.err.find("line 3") != std::string::npos);
  }
  SUBCASE("unreadable config") {
    CHECK(invoke("run", tmp.path() / "absent.cfg", tmp.path() / "out").code == kExitConfig);
  }
  SUBCASE("blow-up") {
    const auto blow = tmp.write("blow.cfg",
                                "[grid]\nnx = 6\nny = 6\n[model]\npreset = example_a\n"
                                "source = logistic\nr = 10.0\nmu = 0.0\n"
                                "[solver]\ndt = 0.01\nt_end = 10.0\nsnapshot_interval = 1.0\n"
                                "blowup_ceiling = 1e6\n");
    const auto r = invoke("run", blow, tmp.path() / "out");
    CHECK(r.code == kExitBlowup);
    CHECK(r.err.find("finite-time-blow-up suspected") != std::string::npos);
    const auto summary = nlohmann::json::parse(read_file(tmp.path() / "out/summary.json"));
    CHECK(summary["status"] == "finite-time-blow-up suspected");
  }
  SUBCASE("check failures map to the precondition code") {
    const auto bad = tmp.write("chk.cfg", "[grid]\nnx = 8\n[model]\npreset = example_a\n"
                                          "source = logistic\nr = 1.0\nmu = 0.0\n");
    const auto r = invoke("check", bad, tmp.path() / "out");
    CHECK(r.code == kExitPrecondition);
    CHECK(fs::exists(tmp.path() / "out/check.json"));
  }
}

TEST_CASE("manifest lists every output with its hash") {
  TempDir tmp("cli_manifest");
  const auto cfg = tmp.write("a.cfg", kExampleA);
  REQUIRE(invoke("run", cfg, tmp.path() / "out").code == 0);
  const auto m = nlohmann::json::parse(read_file(tmp.path() / "out/manifest.json"));
  const auto files = contents(tmp.path() / "out");
  REQUIRE(m["files"].size() == files.size());
  for (const auto& f : m["files"]) {
    const std::string path = f["path"];
    REQUIRE(files.count(path) == 1);
    CHECK(f["sha256"] == sha256_file(tmp.path() / "out" / path));
    CHECK(f["bytes"].get<std::size_t>() == files.at(path).size());
  }
  CHECK(m["config"] == kExampleA);
  CHECK(m["seed"] == 3);
  CHECK(m["rng"] == "mt19937_64");
  CHECK(m["versions"]["kslab"] == kVersion);
}

TEST_CASE("sha256 of known inputs") {
  TempDir tmp("sha");
  CHECK(sha256_file(tmp.write("e", "")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_file(tmp.write("abc", "abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("identical config and seed give identical outputs") {
  TempDir tmp("cli_det");
  const auto cfg = tmp.write("s.cfg", std::string(kExampleA) +
                                          "[scenario.a]\ninitial.seed = 1\n"
                                          "[scenario.b]\ninitial.seed = 2\n"
                                          "[scenario.c]\ninitial.mean = 0.1\n");
  REQUIRE(invoke("sweep", cfg, tmp.path() / "one", 1).code == 0);
  REQUIRE(invoke("sweep", cfg, tmp.path() / "two", 3).code == 0);
  const auto one = contents(tmp.path() / "one");
  CHECK(one.count("sweep.csv") == 1);
  CHECK(one.count("b/series.csv") == 1);
  CHECK(one == contents(tmp.path() / "two"));
  CHECK(one.at("a/series.csv") != one.at("b/series.csv"));

  // --seed overrides every scenario seed
  REQUIRE(invoke("sweep", cfg, tmp.path() / "three", 2, 1).code == 0);
  const auto three = contents(tmp.path() / "three");
  CHECK(three.at("a/series.csv") == three.at("b/series.csv"));
}

TEST_CASE("diagnose and certify commands") {
  TempDir tmp("cli_diag");
  const std::string base =
      "[grid]\nnx = 12\nny = 12\n[model]\npreset = example_a\n"
      "[initial]\nkind = bump\nbase = 0.2\namplitude = 40.0\nwidth = 0.12\n"
      "[solver]\ndt = 0.002\nt_end = 0.05\nsnapshot_interval = 0.0025\n";
  const auto d = tmp.write("d.cfg", base + "[diagnostics]\nt_hat = 0.04\ndepth = 3\n");
  REQUIRE(invoke("diagnose", d, tmp.path() / "d").code == 0);
  const auto diag = nlohmann::json::parse(read_file(tmp.path() / "d/diagnostics.json"));
  CHECK(diag["levels"].size() == 4);

  const auto one = tmp.write("c1.cfg", base + "[scenario.only]\ninitial.amplitude = 30.0\n");
  const auto r = invoke("certify", one, tmp.path() / "c1");
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("at least 2") != std::string::npos);

  const auto many = tmp.write("c.cfg", base +
                                           "[certify]\nt_hat = 0.04\nholdout_fraction = 0.25\n"
                                           "[scenario.a]\ninitial.amplitude = 30.0\n"
                                           "[scenario.b]\ninitial.amplitude = 40.0\n"
                                           "[scenario.c]\ninitial.amplitude = 50.0\n"
                                           "[scenario.d]\ninitial.amplitude = 60.0\n");
  REQUIRE(invoke("certify", many, tmp.path() / "c", 2).code == 0);
  const auto cert = nlohmann::json::parse(read_file(tmp.path() / "c/certificate.json"));
  CHECK(cert["holdout"].size() == 1);
  CHECK(cert["calibration"].size() == 3);
  CHECK(fs::exists(tmp.path() / "c/certificate.csv"));
}
