#include "kslab/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "kslab/bounds.hpp"
#include "kslab/degiorgi.hpp"
#include "kslab/error.hpp"
#include "kslab/stability.hpp"

namespace kslab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename Enum>
Enum pick(const ConfigSection& s, const std::string& key, Enum fallback,
          const std::vector<std::pair<std::string, Enum>>& names) {
  if (!s.has(key)) return fallback;
  const std::string v = s.string(key);
  for (const auto& [n, e] : names)
    if (n == v) return e;
  std::string allowed;
  for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
  throw ConfigError(s.name() + "." + key, s.find(key)->line,
                    "unknown value '" + v + "' (expected one of: " + allowed + ")");
}

bool any_of_keys(const ConfigSection& s, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (s.has(k)) return true;
  return false;
}

// Config values that violate an operation precondition are reported as
// config errors against the section that produced them.
template <typename Fn>
auto as_config_error(const ConfigSection& s, Fn&& fn) {
  try {
    return fn();
  } catch (const PreconditionError& e) {
    throw ConfigError(s.name(), s.line(), e.what());
  }
}

}  // namespace

ModelSpec model_from_config(const Config& cfg) {
  const ConfigSection& dom = cfg.section("domain");
  const ConfigSection& grid = cfg.section("grid");
  const ConfigSection& m = cfg.section("model");
  dom.restrict_keys({"dim", "lx", "ly"});
  grid.restrict_keys({"nx", "ny"});
  m.restrict_keys({"preset", "diffusion", "a0", "alpha", "p", "sensitivity", "b0", "beta", "chi",
                   "source", "r", "mu", "gamma", "w_coupling", "production", "sigma", "tau",
                   "advection", "advection_amplitude", "haptotaxis", "xi"});

  const long long dim = dom.integer_or("dim", 2);
  if (dim != 1 && dim != 2) throw ConfigError("domain.dim", dom.find("dim")->line, "dim must be 1 or 2");
  const int nx = static_cast<int>(grid.integer("nx"));
  const double lx = dom.number_or("lx", 1.0);
  StructuredGrid g = as_config_error(grid, [&] {
    return dim == 1 ? StructuredGrid(lx, nx)
                    : StructuredGrid(lx, dom.number_or("ly", 1.0), nx,
                                     static_cast<int>(grid.integer_or("ny", nx)));
  });

  const std::string name = m.string("preset");
  ModelSpec model = as_config_error(m, [&] { return preset(name, g); });

  if (any_of_keys(m, {"diffusion", "a0", "alpha", "p"})) {
    const DiffusionKind kind = pick(m, "diffusion", model.diffusion.kind,
                                    {{"power", DiffusionKind::power},
                                     {"p_laplacian", DiffusionKind::p_laplacian},
                                     {"product", DiffusionKind::product}});
    const double a0 = m.number_or("a0", model.diffusion.a0);
    const double alpha = m.number_or("alpha", model.diffusion.alpha);
    const double p = m.number_or("p", model.diffusion.p);
    if (kind == DiffusionKind::power) model.diffusion = DiffusionSpec::power(a0, alpha);
    if (kind == DiffusionKind::p_laplacian) model.diffusion = DiffusionSpec::p_laplacian(p);
    if (kind == DiffusionKind::product) model.diffusion = DiffusionSpec::product(a0, alpha, p);
  }
  if (any_of_keys(m, {"sensitivity", "b0", "beta", "chi"})) {
    const SensitivityForm form = pick(m, "sensitivity", model.sensitivity.form,
                                      {{"prototype", SensitivityForm::prototype},
                                       {"linear", SensitivityForm::linear},
                                       {"none", SensitivityForm::zero}});
    if (form == SensitivityForm::prototype)
      model.sensitivity = SensitivitySpec::prototype(m.number_or("b0", model.sensitivity.b0),
                                                     m.number_or("beta", model.sensitivity.beta));
    if (form == SensitivityForm::linear)
      model.sensitivity = SensitivitySpec::linear(m.number_or("chi", model.sensitivity.chi));
    if (form == SensitivityForm::zero) model.sensitivity = SensitivitySpec::none();
  }
  if (any_of_keys(m, {"source", "r", "mu", "gamma", "w_coupling"})) {
    const SourceForm form = pick(m, "source", model.source.form,
                                 {{"logistic", SourceForm::logistic}, {"zero", SourceForm::zero}});
    if (form == SourceForm::zero) {
      model.source = SourceSpec::zero();
    } else {
      const double w = m.number_or("w_coupling", model.source.w_coupling);
      model.source = SourceSpec::logistic(m.number_or("r", model.source.r),
                                          m.number_or("mu", model.source.mu),
                                          m.number_or("gamma", model.source.gamma_exp));
      model.source.w_coupling = w;
    }
  }
  if (any_of_keys(m, {"production", "sigma"})) {
    const ProductionForm form = pick(m, "production", model.production.form,
                                     {{"power", ProductionForm::power},
                                      {"linear", ProductionForm::linear},
                                      {"consumption", ProductionForm::consumption},
                                      {"none", ProductionForm::none}});
    if (form == ProductionForm::power)
      model.production = ProductionSpec::power(m.number_or("sigma", model.production.sigma));
    if (form == ProductionForm::linear) model.production = ProductionSpec::linear();
    if (form == ProductionForm::consumption) model.production = ProductionSpec::consumption();
    if (form == ProductionForm::none) model.production = ProductionSpec::none();
  }
  if (m.has("tau")) model.tau = static_cast<int>(m.integer("tau"));
  model.advection.kind = pick(m, "advection", model.advection.kind,
                              {{"none", AdvectionKind::none},
                               {"zero", AdvectionKind::zero},
                               {"cosine_vortex", AdvectionKind::cosine_vortex}});
  model.advection.amplitude = m.number_or("advection_amplitude", model.advection.amplitude);
  model.haptotaxis.enabled = m.boolean_or("haptotaxis", model.haptotaxis.enabled);
  model.haptotaxis.xi = m.number_or("xi", model.haptotaxis.xi);
  as_config_error(m, [&] {
    model.validate();
    return 0;
  });
  return model;
}

InitialSpec initial_from_config(const Config& cfg) {
  const ConfigSection& s = cfg.section("initial");
  s.restrict_keys({"kind", "base", "amplitude", "width", "center", "mean", "modes", "signal",
                   "c_value", "w_value", "seed"});
  InitialSpec init;
  init.kind = pick(s, "kind", init.kind,
                   {{"constant", InitialKind::constant},
                    {"bump", InitialKind::bump},
                    {"cosine", InitialKind::cosine},
                    {"perturbed", InitialKind::perturbed}});
  init.base = s.number_or("base", init.base);
  init.amplitude = s.number_or("amplitude", init.amplitude);
  init.width = s.number_or("width", init.width);
  if (s.has("center")) {
    const auto c = s.numbers("center");
    if (c.size() != 2) throw ConfigError("initial.center", s.find("center")->line, "center needs two entries");
    init.center = {c[0], c[1]};
  }
  init.mean = s.optional_number("mean");
  init.modes = static_cast<int>(s.integer_or("modes", init.modes));
  init.signal = pick(s, "signal", init.signal,
                     {{"equilibrium", InitialSpec::Signal::equilibrium},
                      {"constant", InitialSpec::Signal::constant}});
  init.c_value = s.number_or("c_value", init.c_value);
  init.w_value = s.number_or("w_value", init.w_value);
  return init;
}

SolverConfig solver_from_config(const Config& cfg) {
  const ConfigSection& s = cfg.section("solver");
  s.restrict_keys({"dt", "dt_policy", "cfl_safety", "t_end", "snapshot_interval",
                   "positivity_floor", "implicit_tolerance", "implicit_max_iters", "picard_sweeps",
                   "eps_reg", "blowup_ceiling", "dt_min", "max_rejections", "steady_tolerance"});
  SolverConfig c;
  c.dt_initial = s.number_or("dt", c.dt_initial);
  c.dt_policy = pick(s, "dt_policy", c.dt_policy,
                     {{"fixed", DtPolicy::fixed}, {"cfl_adaptive", DtPolicy::cfl_adaptive}});
  c.cfl_safety = s.number_or("cfl_safety", c.cfl_safety);
  c.t_end = s.number("t_end");
  c.snapshot_interval = s.number_or("snapshot_interval", c.snapshot_interval);
  c.positivity_floor = s.number_or("positivity_floor", c.positivity_floor);
  c.implicit_tolerance = s.number_or("implicit_tolerance", c.implicit_tolerance);
  c.implicit_max_iters = static_cast<int>(s.integer_or("implicit_max_iters", c.implicit_max_iters));
  c.picard_sweeps = static_cast<int>(s.integer_or("picard_sweeps", c.picard_sweeps));
  c.eps_reg = s.number_or("eps_reg", c.eps_reg);
  c.blowup_ceiling = s.number_or("blowup_ceiling", c.blowup_ceiling);
  c.dt_min = s.number_or("dt_min", c.dt_min);
  c.max_rejections = static_cast<int>(s.integer_or("max_rejections", c.max_rejections));
  c.steady_tolerance = s.number_or("steady_tolerance", c.steady_tolerance);
  as_config_error(s, [&] {
    c.validate();
    return 0;
  });
  return c;
}

std::uint64_t seed_from_config(const Config& cfg, std::optional<std::uint64_t> cli_seed) {
  if (cli_seed) return *cli_seed;
  const ConfigSection& s = cfg.section("initial");
  if (!s.has("seed")) return 0;
  const long long v = s.integer("seed");
  if (v < 0) throw ConfigError("initial.seed", s.find("seed")->line, "seed must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

Scenario scenario_from_config(const std::string& id, const Config& cfg,
                              std::optional<std::uint64_t> cli_seed) {
  Scenario s;
  s.id = id;
  s.config = cfg;
  s.model = model_from_config(cfg);
  s.initial = initial_from_config(cfg);
  s.solver = solver_from_config(cfg);
  s.seed = seed_from_config(cfg, cli_seed);
  return s;
}

std::vector<Scenario> scenarios_from_config(const Config& cfg,
                                            std::optional<std::uint64_t> cli_seed) {
  std::vector<Scenario> out;
  for (const ConfigSection* sec : cfg.sections_with_prefix("scenario")) {
    Config local = cfg;
    for (const auto& key : sec->keys()) {
      local.apply_override(key, *sec->find(key));
    }
    out.push_back(scenario_from_config(sec->name().substr(std::string("scenario.").size()), local,
                                       cli_seed));
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
  return hex.str();
}

json make_manifest(const std::string& command, const fs::path& dir, const Config& cfg,
                   const fs::path& config_path, std::uint64_t seed, double wall_time,
                   const std::string& status) {
  json m;
  m["command"] = command;
  m["status"] = status;
  m["config_path"] = config_path.string();
  m["config"] = cfg.text();
  m["seed"] = seed;
  m["rng"] = "mt19937_64";
  m["versions"] = {{"kslab", kVersion},
                   {"compiler", __VERSION__},
                   {"cplusplus", __cplusplus},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  m["wall_time_seconds"] = wall_time;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  m["files"] = json::array();
  for (const auto& f : files)
    m["files"].push_back({{"path", fs::relative(f, dir).generic_string()},
                          {"bytes", fs::file_size(f)},
                          {"sha256", sha256_file(f)}});
  return m;
}

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw PreconditionError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json summary_json(const Scenario& s, const Trajectory& traj) {
  const CheckReport check = structural_check(s.model);
  json j;
  j["scenario"] = s.id;
  j["model"] = s.model.name;
  j["data_tuple"] = to_json(s.model.data_tuple());
  j["status"] = to_string(traj.status);
  j["accepted_steps"] = traj.accepted_steps;
  j["rejected_steps"] = traj.rejected_steps;
  j["final_time"] = traj.series.empty() ? 0.0 : traj.series.back().t;
  j["snapshots"] = traj.states.size();
  j["seed"] = s.seed;
  j["outside_hypotheses"] = s.model.domain.outside_hypotheses();
  j["notes"] = s.model.notes;
  j["warnings"] = check.warnings;
  double sup = 0.0;
  for (const auto& r : traj.series) sup = std::max(sup, r.linf_n);
  j["max_linf_n"] = sup;
  return j;
}

Trajectory simulate(const Scenario& s, const StepObserver& observer = {}) {
  return run(s.model, make_initial_state(s.model, s.initial, s.seed), s.solver, observer);
}

// Writes series, snapshots (unless disabled) and a summary into dir.
json write_run_outputs(const fs::path& dir, const Scenario& s, const Trajectory& traj) {
  fs::create_directories(dir);
  const ConfigSection& outs = s.config.section("outputs");
  if (outs.boolean_or("series", true)) write_series_csv(dir / "series.csv", traj.series);
  if (outs.boolean_or("snapshots", true)) save_snapshots(dir / "snapshots", traj);
  const json summary = summary_json(s, traj);
  write_json(dir / "summary.json", summary);
  return summary;
}

fs::path output_dir(const CliOptions& opt, const Config& cfg) {
  if (!opt.out.empty()) return opt.out;
  const ConfigSection& outs = cfg.section("outputs");
  outs.restrict_keys({"dir", "series", "snapshots"});
  return outs.string_or("dir", "kslab_out");
}

// Runs fn(i) for i in [0, count) on up to `jobs` threads; the first
// exception is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(std::max(jobs, 1), std::max<std::size_t>(count, 1));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct Context {
  const CliOptions& opt;
  std::ostream& out;
  std::ostream& err;
  Config cfg;
  fs::path dir;
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void say(const std::string& line) const {
    if (!opt.quiet) out << line << '\n';
  }
  void finish(const std::string& command, const std::string& status) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json(dir / "manifest.json", make_manifest(command, dir, cfg, opt.config, seed, wall, status));
  }
};

int cmd_run(Context& ctx) {
  const Scenario s = scenario_from_config("run", ctx.cfg, ctx.opt.seed);
  ctx.seed = s.seed;
  const Trajectory traj = simulate(s);
  write_run_outputs(ctx.dir, s, traj);
  const std::string status = to_string(traj.status);
  ctx.finish("run", status);
  ctx.say("run: " + status + ", " + std::to_string(traj.accepted_steps) + " steps, outputs in " +
          ctx.dir.string());
  if (traj.status != RunStatus::blowup_suspected) return kExitOk;
  ctx.err << "run stopped at t = " << traj.series.back().t << ": " << status << '\n';
  return kExitBlowup;
}

int cmd_sweep(Context& ctx) {
  const auto scenarios = scenarios_from_config(ctx.cfg, ctx.opt.seed);
  if (scenarios.empty()) throw ConfigError("scenario", 0, "sweep needs at least one [scenario.<id>] section");
  ctx.seed = seed_from_config(ctx.cfg, ctx.opt.seed);
  std::vector<json> summaries(scenarios.size());
  fs::create_directories(ctx.dir);
  parallel_for(scenarios.size(), ctx.opt.jobs, [&](std::size_t i) {
    const Trajectory traj = simulate(scenarios[i]);
    summaries[i] = write_run_outputs(ctx.dir / scenarios[i].id, scenarios[i], traj);
  });
  std::ofstream table(ctx.dir / "sweep.csv");
  table.precision(17);
  table << "scenario,status,final_time,accepted_steps,max_linf_n\n";
  bool blowup = false;
  for (const auto& s : summaries) {
    table << s["scenario"].get<std::string>() << ',' << s["status"].get<std::string>() << ','
          << s["final_time"].get<double>() << ',' << s["accepted_steps"].get<std::size_t>() << ','
          << s["max_linf_n"].get<double>() << '\n';
    blowup = blowup || s["status"] == to_string(RunStatus::blowup_suspected);
  }
  table.close();
  ctx.finish("sweep", blowup ? "blow-up in at least one scenario" : "completed");
  ctx.say("sweep: " + std::to_string(scenarios.size()) + " scenarios, outputs in " + ctx.dir.string());
  return blowup ? kExitBlowup : kExitOk;
}

int cmd_diagnose(Context& ctx) {
  const ConfigSection& d = ctx.cfg.section("diagnostics");
  d.restrict_keys({"trajectory", "k0", "t0", "t_hat", "sigma", "depth", "tau_hat", "r"});
  const Scenario s = scenario_from_config("diagnose", ctx.cfg, ctx.opt.seed);
  ctx.seed = s.seed;
  fs::create_directories(ctx.dir);
  Trajectory traj;
  if (d.has("trajectory")) {
    fs::path src = d.string("trajectory");
    if (src.is_relative() && !ctx.opt.config.empty()) src = ctx.opt.config.parent_path() / src;
    traj = load_snapshots(src, s.model);
  } else {
    traj = simulate(s);
    write_run_outputs(ctx.dir / "run", s, traj);
  }
  const double kf = compute_kf(s.model.source);
  const double t0 = d.number_or("t0", traj.states.back().time);
  const LevelLadder ladder =
      build_ladder(d.number_or("k0", kf), t0, d.number_or("t_hat", 0.5 * t0),
                   d.number_or("sigma", 0.5), static_cast<int>(d.integer_or("depth", 4)),
                   d.optional_number("tau_hat"), kf);
  json report = diagnostics_json(traj, ladder, d.number_or("r", 2.0),
                                 s.model.diffusion.alpha_minus());
  report["K_f"] = kf;
  write_json(ctx.dir / "diagnostics.json", report);
  ctx.finish("diagnose", "completed");
  ctx.say("diagnose: ladder of depth " + std::to_string(ladder.depth) + ", report in " +
          (ctx.dir / "diagnostics.json").string());
  return kExitOk;
}

int cmd_certify(Context& ctx) {
  const ConfigSection& c = ctx.cfg.section("certify");
  c.restrict_keys({"holdout_fraction", "t0", "t_hat", "r", "seed"});
  const auto scenarios = scenarios_from_config(ctx.cfg, ctx.opt.seed);
  if (scenarios.size() < 2)
    throw ConfigError("scenario", 0, "certify needs at least 2 [scenario.<id>] sections");
  ctx.seed = seed_from_config(ctx.cfg, ctx.opt.seed);
  const double fraction = c.number_or("holdout_fraction", 1.0 / 3.0);
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("certify.holdout_fraction", c.line(), "holdout fraction must lie in (0, 1)");

  const ExponentSet e = exponents(scenarios.front().model);
  const BoundExponents x = e.regime == Regime::theorem2
                               ? theorem2_exponents(e, c.number("r"))
                               : theorem1_exponents(e);

  std::vector<ScenarioMeasurement> measured(scenarios.size());
  fs::create_directories(ctx.dir);
  parallel_for(scenarios.size(), ctx.opt.jobs, [&](std::size_t i) {
    const Scenario& s = scenarios[i];
    const Trajectory traj = simulate(s);
    if (traj.status == RunStatus::blowup_suspected)
      throw PreconditionError("scenario " + s.id + " blew up; no bound can be certified");
    const ConfigSection& sc = s.config.section("certify");
    const double t0 = sc.number_or("t0", traj.states.back().time);
    measured[i] = measure_scenario(s.id, traj, t0, sc.number_or("t_hat", 0.5 * t0), x.r_exp);
  });

  // seeded split: shuffle the indices, the first share is held out
  std::vector<std::size_t> order(scenarios.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::mt19937_64 rng(static_cast<std::uint64_t>(c.integer_or("seed", static_cast<long long>(ctx.seed))));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_hold = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(fraction * scenarios.size())), 1, scenarios.size() - 1);
  std::vector<std::size_t> hold(order.begin(), order.begin() + n_hold);
  std::vector<std::size_t> calib(order.begin() + n_hold, order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(calib.begin(), calib.end());

  std::vector<ScenarioMeasurement> calib_set;
  for (std::size_t k : calib) calib_set.push_back(measured[k]);
  const double C = calibrate_C(x, calib_set);
  std::vector<BoundCertificate> calib_cert, hold_cert;
  for (std::size_t k : calib) calib_cert.push_back(certify_scenario(e, x, measured[k], C));
  for (std::size_t k : hold) hold_cert.push_back(certify_scenario(e, x, measured[k], C));

  json report = certification_json(e, x, C, calib_cert, hold_cert);
  report["data_tuple"] = to_json(scenarios.front().model.data_tuple());
  report["holdout_fraction"] = fraction;
  write_json(ctx.dir / "certificate.json", report);
  write_certificate_csv(ctx.dir / "certificate.csv", calib_cert, hold_cert);
  const bool ok = report.value("holdout_passed", false);
  ctx.finish("certify", ok ? "certified" : "holdout margin negative");
  ctx.say("certify: C = " + std::to_string(C) + ", holdout " + (ok ? "passed" : "FAILED"));
  return kExitOk;
}

int cmd_stability(Context& ctx) {
  const ConfigSection& st = ctx.cfg.section("stability");
  st.restrict_keys({"lyapunov", "holder_space_scales", "holder_time_scales", "holder_t_a",
                    "probe_masses", "probe_cells", "probe_t_end"});
  const Scenario s = scenario_from_config("stability", ctx.cfg, ctx.opt.seed);
  ctx.seed = s.seed;
  fs::create_directories(ctx.dir);

  const SystemState init = make_initial_state(s.model, s.initial, s.seed);
  const double mass = quadrature(init.n) / s.model.domain.measure();
  std::vector<LyapunovSample> lyap;
  StepObserver observer;
  std::optional<double> chi;
  try {
    chi = equilibrium(s.model, mass).chi;
  } catch (const PreconditionError&) {
  }
  if (chi && st.boolean_or("lyapunov", true)) observer = lyapunov_observer(*chi, lyap);
  const Trajectory traj = run(s.model, init, s.solver, observer);
  write_run_outputs(ctx.dir / "run", s, traj);
  const StabilityAnalysis a = analyze_stability(traj, mass, std::move(lyap));
  json report = to_json(a);
  report["status"] = to_string(traj.status);
  if (st.has("holder_space_scales")) {
    auto ints = [&](const std::string& key) {
      std::vector<int> v;
      for (double d : st.numbers(key)) v.push_back(static_cast<int>(d));
      return v;
    };
    const HolderReport h =
        holder_exponent(traj, st.number_or("holder_t_a", 0.0), s.solver.t_end,
                        ints("holder_space_scales"),
                        st.has("holder_time_scales") ? ints("holder_time_scales") : std::vector<int>{1, 2, 4});
    report["holder"] = to_json(h);
  }
  if (st.has("probe_masses")) {
    ProbeSettings ps;
    ps.cells = static_cast<int>(st.integer_or("probe_cells", ps.cells));
    ps.t_end = st.number_or("probe_t_end", ps.t_end);
    ps.jobs = ctx.opt.jobs;
    report["threshold_probe"] =
        to_json(smallness_threshold_probe(s.model.production.sigma, st.numbers("probe_masses"), ps));
  }
  write_json(ctx.dir / "stability.json", report);
  write_stability_csv(ctx.dir / "stability.csv", traj, a);
  ctx.finish("stability", to_string(traj.status));
  ctx.say("stability: report in " + (ctx.dir / "stability.json").string());
  return traj.status == RunStatus::blowup_suspected ? kExitBlowup : kExitOk;
}

int cmd_check(Context& ctx) {
  const ModelSpec model = model_from_config(ctx.cfg);
  const CheckReport rep = structural_check(model);
  json j;
  j["model"] = model.name;
  j["horizon"] = rep.horizon;
  j["outside_hypotheses"] = rep.outside_hypotheses;
  j["warnings"] = rep.warnings;
  j["all_passed"] = rep.all_passed();
  j["checks"] = json::array();
  for (const auto& c : rep.checks) {
    json row = {{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
    if (c.witness) row["witness"] = *c.witness;
    j["checks"].push_back(row);
    ctx.say(std::string(c.passed ? "pass " : "FAIL ") + c.name + (c.detail.empty() ? "" : ": " + c.detail));
  }
  for (const auto& w : rep.warnings) ctx.say("warning: " + w);
  fs::create_directories(ctx.dir);
  write_json(ctx.dir / "check.json", j);
  ctx.finish("check", rep.all_passed() ? "passed" : "failed");
  return rep.all_passed() ? kExitOk : kExitPrecondition;
}

}  // namespace

int run_command(const std::string& command, const CliOptions& options, std::ostream& out,
                std::ostream& err) {
  try {
    if (options.config.empty()) throw ConfigError("", 0, "--config is required");
    if (options.jobs < 1) throw ConfigError("", 0, "--jobs must be at least 1");
    Context ctx{options, out, err, Config::load(options.config), {}, 0, std::chrono::steady_clock::now()};
    ctx.dir = output_dir(options, ctx.cfg);
    if (command == "run") return cmd_run(ctx);
    if (command == "sweep") return cmd_sweep(ctx);
    if (command == "diagnose") return cmd_diagnose(ctx);
    if (command == "certify") return cmd_certify(ctx);
    if (command == "stability") return cmd_stability(ctx);
    if (command == "check") return cmd_check(ctx);
    err << "unknown command '" << command << "'\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const PreconditionError& e) {
    err << "precondition failure: " << e.what() << '\n';
    return kExitPrecondition;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace kslab
