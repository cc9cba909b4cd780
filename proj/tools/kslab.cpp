#include <iostream>

#include "CLI11.hpp"
#include "kslab/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for chemotaxis systems and level-set iterations"};
  app.set_version_flag("--version", kslab::kVersion);
  app.require_subcommand(1);

  kslab::CliOptions opt;
  std::uint64_t seed = 0;
  const char* commands[][2] = {
      {"run", "simulate one configuration"},
      {"sweep", "simulate every [scenario.<id>] section"},
      {"diagnose", "level-set ladder diagnostics for one trajectory"},
      {"certify", "calibrate the bound constant and check it on held-out scenarios"},
      {"stability", "mass, equilibrium decay, Lyapunov descent and regularity reports"},
      {"check", "verify the structural hypotheses of the configured model"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "configuration file")->required();
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "random seed, overrides [initial] seed");
    sub->add_flag("--quiet", opt.quiet, "suppress progress output");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kslab::kExitConfig;
  }
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) opt.seed = seed;
  return kslab::run_command(sub->get_name(), opt, std::cout, std::cerr);
}
