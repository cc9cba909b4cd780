#pragma once

// Configuration-driven commands behind the kslab executable.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kslab/config.hpp"
#include "kslab/model.hpp"
#include "kslab/solver.hpp"

namespace kslab {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitBlowup = 3,
  kExitPrecondition = 4,
};

struct CliOptions {
  std::filesystem::path config;
  std::filesystem::path out;  // empty: [outputs] dir, else "kslab_out"
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

/// Everything needed to start one simulation.
struct Scenario {
  std::string id;
  Config config;
  ModelSpec model;
  InitialSpec initial;
  SolverConfig solver;
  std::uint64_t seed = 0;
};

ModelSpec model_from_config(const Config& cfg);
InitialSpec initial_from_config(const Config& cfg);
SolverConfig solver_from_config(const Config& cfg);
/// --seed wins over [initial] seed; the default is 0.
std::uint64_t seed_from_config(const Config& cfg, std::optional<std::uint64_t> cli_seed);
Scenario scenario_from_config(const std::string& id, const Config& cfg,
                              std::optional<std::uint64_t> cli_seed);
/// One scenario per [scenario.<id>] section, each applying its
/// "section.key = value" overrides to the base configuration.
std::vector<Scenario> scenarios_from_config(const Config& cfg,
                                            std::optional<std::uint64_t> cli_seed);

/// Lowercase hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

/// Manifest listing every regular file under `dir` (except the manifest
/// itself) with size and hash, the config echo, seed, versions and wall time.
nlohmann::json make_manifest(const std::string& command, const std::filesystem::path& dir,
                             const Config& cfg, const std::filesystem::path& config_path,
                             std::uint64_t seed, double wall_time, const std::string& status);

/// Executes a subcommand (run, sweep, diagnose, certify, stability, check)
/// and maps failures to exit codes: 2 config error, 3 blow-up,
/// 4 precondition failure, 1 anything else.
int run_command(const std::string& command, const CliOptions& options, std::ostream& out,
                std::ostream& err);

}  // namespace kslab
