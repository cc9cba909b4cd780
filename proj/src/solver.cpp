#include "kslab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "kslab/error.hpp"
#include "kslab/field_io.hpp"
#include "kslab/linalg.hpp"
#include "kslab/operators.hpp"

namespace kslab {

void SolverConfig::validate() const {
  require(dt_initial > 0.0, "dt_initial must be positive");
  require(t_end > 0.0, "t_end must be positive");
  require(snapshot_interval > 0.0, "snapshot_interval must be positive");
  require(implicit_tolerance > 0.0, "implicit_tolerance must be positive");
  require(implicit_max_iters > 0, "implicit_max_iters must be positive");
  require(picard_sweeps >= 1, "picard_sweeps must be at least 1");
  require(positivity_floor >= 0.0, "positivity_floor must be nonnegative");
  require(cfl_safety > 0.0 && cfl_safety <= 1.0, "cfl_safety must lie in (0, 1]");
  require(eps_reg >= 0.0, "eps_reg must be nonnegative");
  require(blowup_ceiling > 0.0, "blowup_ceiling must be positive");
  require(max_rejections >= 0, "max_rejections must be nonnegative");
}

SystemState::SystemState(double time, ScalarField n, ScalarField c, std::optional<ScalarField> w,
                         VectorField u)
    : time(time), n(std::move(n)), c(std::move(c)), w(std::move(w)), u(std::move(u)) {}

void SystemState::check_invariants(double w_cap) const {
  ScalarField nn = n;
  nn.set_tag(FieldTag::density);
  ScalarField cc = c;
  cc.set_tag(FieldTag::density);
  if (w) {
    w->check_invariants();
    for (double v : w->values())
      require(v >= 0.0 && v <= w_cap, "w left the interval [0, max w0]");
  }
}

SeriesRecord measure(const SystemState& s, double dt, double clamp_mag) {
  SeriesRecord r;
  r.t = s.time;
  r.dt = dt;
  r.mass_n = quadrature(s.n);
  r.linf_n = lq_norm(s.n, kInfinity);
  r.l2_n = lq_norm(s.n, 2.0);
  r.linf_c = lq_norm(s.c, kInfinity);
  r.sup_grad_c = lq_norm(gradient(s.c).magnitude(), kInfinity);
  r.min_n = s.n.min();
  r.min_c = s.c.min();
  r.max_w = s.w ? s.w->max() : 0.0;
  r.clamp_mag = clamp_mag;
  return r;
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::completed: return "completed";
    case RunStatus::converged: return "converged";
    case RunStatus::blowup_suspected: return "finite-time-blow-up suspected";
  }
  return "?";
}

std::vector<const SystemState*> Trajectory::window(double a, double b) const {
  std::vector<const SystemState*> out;
  for (const auto& s : states)
    if (s.time >= a && s.time <= b) out.push_back(&s);
  return out;
}

double integrate_in_time(const Trajectory& traj, double a, double b,
                         const std::function<double(const SystemState&)>& integrand,
                         double* span) {
  const auto snaps = traj.window(a, b);
  double total = 0.0;
  double prev_t = 0.0, prev_v = 0.0;
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    const double v = integrand(*snaps[k]);
    if (k > 0) total += 0.5 * (snaps[k]->time - prev_t) * (v + prev_v);
    prev_t = snaps[k]->time;
    prev_v = v;
  }
  if (span) *span = snaps.size() >= 2 ? snaps.back()->time - snaps.front()->time : 0.0;
  return total;
}

namespace {

struct TrialResult {
  std::optional<SystemState> state;
  std::string reason;
  double clamp_mag = 0.0;
};

// (I - dt div(K grad) + dt diag(sink)) x = rhs, started from x = rhs.
bool implicit_solve(const StructuredGrid& g, const FaceCoefficients& k,
                    std::span<const double> sink, double dt, std::span<double> x,
                    std::span<const double> rhs, const SolverConfig& cfg) {
  std::vector<double> work(g.size());
  auto apply = [&](std::span<const double> in, std::span<double> out) {
    flux_divergence(g, k, in, work);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = in[c] - dt * work[c] + dt * sink[c] * in[c];
  };
  std::copy(rhs.begin(), rhs.end(), x.begin());
  return conjugate_gradient(apply, rhs, x, cfg.implicit_tolerance, cfg.implicit_max_iters)
      .converged;
}

bool all_finite(const ScalarField& f) {
  return std::all_of(f.values().begin(), f.values().end(), [](double v) { return std::isfinite(v); });
}

double transport_rate(const ScalarField& n, const ScalarField& c,
                      const std::optional<ScalarField>& w, const VectorField& u,
                      const ModelSpec& model) {
  ScalarField rate = chemotaxis_outflow_rate(n, c, model.sensitivity);
  if (model.haptotaxis.enabled && w) {
    const ScalarField hr = chemotaxis_outflow_rate(n, *w, SensitivitySpec::linear(model.haptotaxis.xi));
    for (std::size_t k = 0; k < rate.size(); ++k) rate[k] += hr[k];
  }
  if (model.tau == 1) {
    const ScalarField ar = advection_outflow_rate(u);
    for (std::size_t k = 0; k < rate.size(); ++k) rate[k] += ar[k];
  }
  return rate.max();
}

TrialResult trial_step(const SystemState& s, const ModelSpec& model, const SolverConfig& cfg,
                       double dt) {
  TrialResult out;
  const StructuredGrid& g = s.n.grid();
  const std::size_t size = g.size();

  // signal
  std::vector<double> rhs(s.c.values().begin(), s.c.values().end());
  std::vector<double> sink(size, 1.0);
  if (model.tau == 1) {
    const ScalarField adv = advect(s.c, s.u);
    for (std::size_t k = 0; k < size; ++k) rhs[k] -= dt * adv[k];
  }
  if (model.production.form == ProductionForm::consumption) {
    for (std::size_t k = 0; k < size; ++k) sink[k] = s.n[k];
  } else {
    for (std::size_t k = 0; k < size; ++k) rhs[k] += dt * model.production.value(s.n[k]);
  }
  ScalarField c_new(g, 0.0);
  if (!implicit_solve(g, FaceCoefficients::constant(g, 1.0), sink, dt, c_new.values(), rhs, cfg)) {
    out.reason = "signal solve did not converge";
    return out;
  }

  // explicit transport
  const double courant = dt * transport_rate(s.n, c_new, s.w, s.u, model);
  if (!(courant <= 1.0 + 1e-12)) {
    out.reason = "Courant number " + std::to_string(courant) + " exceeds 1";
    return out;
  }
  ScalarField n_star = s.n;
  {
    const ScalarField chem = chemotaxis_div(s.n, c_new, model.sensitivity);
    for (std::size_t k = 0; k < size; ++k) n_star[k] += dt * chem[k];
    if (model.haptotaxis.enabled && s.w) {
      const ScalarField hap =
          chemotaxis_div(s.n, *s.w, SensitivitySpec::linear(model.haptotaxis.xi));
      for (std::size_t k = 0; k < size; ++k) n_star[k] += dt * hap[k];
    }
    if (model.tau == 1) {
      const ScalarField adv = advect(s.n, s.u);
      for (std::size_t k = 0; k < size; ++k) n_star[k] -= dt * adv[k];
    }
  }

  // lagged implicit diffusion
  const std::vector<double> no_sink(size, 0.0);
  ScalarField lag = s.n;
  ScalarField n_new(g, 0.0);
  for (int sweep = 0; sweep < cfg.picard_sweeps; ++sweep) {
    const FaceCoefficients k = diffusion_face_coefficients(lag, model.diffusion, cfg.eps_reg);
    if (!implicit_solve(g, k, no_sink, dt, n_new.values(), n_star.values(), cfg)) {
      out.reason = "diffusion solve did not converge";
      return out;
    }
    lag = n_new;
  }

  // reaction, one Newton step per cell
  if (model.source.form != SourceForm::zero) {
    for (std::size_t k = 0; k < size; ++k) {
      const double wk = s.w ? (*s.w)[k] : 0.0;
      const double v = std::max(n_new[k], 0.0);
      const double denom = 1.0 - dt * model.source.derivative(v, wk);
      if (!(denom > 0.0)) {
        out.reason = "reaction Newton denominator is not positive";
        return out;
      }
      n_new[k] = v + dt * model.source.value(v, wk) / denom;
    }
  }

  std::optional<ScalarField> w_new;
  if (s.w) {
    w_new = *s.w;
    for (std::size_t k = 0; k < size; ++k) (*w_new)[k] *= std::exp(-dt * c_new[k]);
  }

  if (!all_finite(n_new) || !all_finite(c_new)) {
    out.reason = "non-finite values";
    return out;
  }

  double clamp = 0.0;
  for (auto* f : {&n_new, &c_new}) {
    for (double& v : f->values()) {
      if (v < cfg.positivity_floor) {
        clamp += cfg.positivity_floor - v;
        v = cfg.positivity_floor;
      }
    }
  }
  out.clamp_mag = clamp * g.cell_volume();
  n_new.set_tag(FieldTag::density);
  c_new.set_tag(FieldTag::density);
  out.state.emplace(s.time + dt, std::move(n_new), std::move(c_new), std::move(w_new), s.u);
  return out;
}

}  // namespace

StepOutcome step(const SystemState& state, const ModelSpec& model, const SolverConfig& config,
                 double dt) {
  require(dt > 0.0, "step requires dt > 0");
  int rejections = 0;
  for (;;) {
    TrialResult trial = trial_step(state, model, config, dt);
    if (trial.state) return {std::move(*trial.state), dt, rejections, trial.clamp_mag};
    if (++rejections > config.max_rejections)
      throw SolverError("step rejected " + std::to_string(rejections) + " times at t = " +
                        std::to_string(state.time) + ": " + trial.reason);
    dt *= 0.5;
  }
}

double stable_dt(const SystemState& state, const ModelSpec& model, const SolverConfig& config) {
  double dt = config.dt_initial;
  const double rate = transport_rate(state.n, state.c, state.w, state.u, model);
  if (rate > 0.0) dt = std::min(dt, config.cfl_safety / rate);
  if (model.source.form == SourceForm::logistic && model.source.r > 0.0)
    dt = std::min(dt, 0.5 / model.source.r);
  return dt;
}

Trajectory run(const ModelSpec& model, const SystemState& initial, const SolverConfig& config,
               const StepObserver& observer) {
  config.validate();
  model.validate();
  require(initial.n.grid() == model.domain, "initial state does not live on the model domain");
  require(initial.u.solenoidal(), "initial velocity must be tagged solenoidal");
  initial.check_invariants();
  require(initial.n.max() > 0.0 || initial.n.min() == 0.0, "initial density invalid");

  Trajectory traj;
  traj.model = model;
  traj.states.push_back(initial);
  traj.series.push_back(measure(initial, 0.0, 0.0));
  if (observer) observer(initial, traj.series.back());

  SystemState current = initial;
  long snap_index = 1;
  double next_snap = std::min(config.snapshot_interval, config.t_end);
  double last_rate_n = kInfinity, last_rate_c = kInfinity;
  const double t_tol = 1e-12 * config.t_end;

  while (current.time < config.t_end - t_tol) {
    double dt = config.dt_policy == DtPolicy::fixed ? config.dt_initial
                                                    : stable_dt(current, model, config);
    if (config.dt_policy == DtPolicy::cfl_adaptive && dt < config.dt_min) {
      traj.status = RunStatus::blowup_suspected;
      break;
    }
    bool hits_snapshot = false;
    if (current.time + dt >= next_snap - t_tol) {
      dt = next_snap - current.time;
      hits_snapshot = true;
    }
    StepOutcome out = step(current, model, config, dt);
    traj.rejected_steps += out.rejections;
    if (out.dt_used == dt && hits_snapshot) out.state.time = next_snap;
    ++traj.accepted_steps;

    last_rate_n = last_rate_c = 0.0;
    for (std::size_t k = 0; k < current.n.size(); ++k) {
      last_rate_n = std::max(last_rate_n, std::abs(out.state.n[k] - current.n[k]) / out.dt_used);
      last_rate_c = std::max(last_rate_c, std::abs(out.state.c[k] - current.c[k]) / out.dt_used);
    }
    current = std::move(out.state);
    traj.series.push_back(measure(current, out.dt_used, out.clamp_mag));
    if (observer) observer(current, traj.series.back());

    const bool blown = traj.series.back().linf_n > config.blowup_ceiling;
    if (current.time == next_snap || blown) {
      traj.states.push_back(current);
      ++snap_index;
      next_snap = std::min(static_cast<double>(snap_index) * config.snapshot_interval, config.t_end);
    }
    if (blown) {
      traj.status = RunStatus::blowup_suspected;
      break;
    }
  }
  if (traj.status != RunStatus::blowup_suspected && last_rate_n <= config.steady_tolerance &&
      last_rate_c <= config.steady_tolerance)
    traj.status = RunStatus::converged;
  return traj;
}

// Weak residual ---------------------------------------------------------------

TestFunction TestFunction::cosine_bump(double t_begin, double t_end, int kx, int ky, double lx,
                                       double ly) {
  require(t_end > t_begin, "test function support must be a nonempty interval");
  const double pi = std::numbers::pi;
  const double span = t_end - t_begin;
  auto bump = [=](double t) {
    if (t <= t_begin || t >= t_end) return 0.0;
    const double s = std::sin(pi * (t - t_begin) / span);
    return s * s;
  };
  auto dbump = [=](double t) {
    if (t <= t_begin || t >= t_end) return 0.0;
    return pi / span * std::sin(2.0 * pi * (t - t_begin) / span);
  };
  const double wx = kx * pi / lx, wy = ky * pi / ly;
  TestFunction phi;
  phi.t_begin = t_begin;
  phi.t_end = t_end;
  phi.value = [=](double x, double y, double t) {
    return bump(t) * std::cos(wx * x) * std::cos(wy * y);
  };
  phi.time_derivative = [=](double x, double y, double t) {
    return dbump(t) * std::cos(wx * x) * std::cos(wy * y);
  };
  phi.gradient = [=](double x, double y, double t) {
    const double b = bump(t);
    return std::array<double, 2>{-b * wx * std::sin(wx * x) * std::cos(wy * y),
                                 -b * wy * std::cos(wx * x) * std::sin(wy * y)};
  };
  return phi;
}

TestFunction TestFunction::zero(double t_begin, double t_end) {
  TestFunction phi;
  phi.t_begin = t_begin;
  phi.t_end = t_end;
  phi.value = [](double, double, double) { return 0.0; };
  phi.time_derivative = [](double, double, double) { return 0.0; };
  phi.gradient = [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; };
  return phi;
}

double weak_residual(const Trajectory& traj, const TestFunction& phi, double eps_reg) {
  require(traj.states.size() >= 3, "weak_residual needs at least 3 snapshots");
  const double t_first = traj.states.front().time, t_last = traj.states.back().time;
  require(phi.t_begin > t_first && phi.t_end < t_last,
          "test function support touches the time boundary of the trajectory");
  const ModelSpec& model = traj.model;
  const StructuredGrid& g = model.domain;
  const int nx = g.cells(0), ny = g.cells(1);
  const double vol = g.cell_volume();

  // lhs, advection, diffusion, chemotaxis, haptotaxis, source
  std::array<double, 6> total{};
  const std::size_t count = traj.states.size();
  for (std::size_t s = 0; s < count; ++s) {
    const SystemState& st = traj.states[s];
    const double t = st.time;
    double weight = 0.0;
    if (s > 0) weight += 0.5 * (t - traj.states[s - 1].time);
    if (s + 1 < count) weight += 0.5 * (traj.states[s + 1].time - t);
    if (t < phi.t_begin || t > phi.t_end) continue;

    const VectorField gn = gradient(st.n);
    const VectorField gc = gradient(st.c);
    std::optional<VectorField> gw;
    if (st.w) gw = gradient(*st.w);
    std::array<double, 6> at{};
    for (int j = 0; j < ny; ++j) {
      const double y = g.dim() == 2 ? g.center(1, j) : 0.0;
      for (int i = 0; i < nx; ++i) {
        const double x = g.center(0, i);
        const std::size_t k = g.index(i, j);
        const double n = st.n[k];
        const auto dphi = phi.gradient(x, y, t);
        const double dn0 = gn.component(0)[k], dn1 = gn.component(1)[k];
        const double a = model.diffusion.coefficient(n, std::hypot(dn0, dn1), eps_reg);
        at[0] += -n * phi.time_derivative(x, y, t);
        if (model.tau == 1)
          at[1] += n * (st.u.component(0)[k] * dphi[0] + st.u.component(1)[k] * dphi[1]);
        at[2] += -a * (dn0 * dphi[0] + dn1 * dphi[1]);
        at[3] += model.sensitivity.value(n) *
                 (gc.component(0)[k] * dphi[0] + gc.component(1)[k] * dphi[1]);
        if (model.haptotaxis.enabled && gw)
          at[4] += model.haptotaxis.xi * n *
                   (gw->component(0)[k] * dphi[0] + gw->component(1)[k] * dphi[1]);
        at[5] += model.source.value(n, st.w ? (*st.w)[k] : 0.0) * phi.value(x, y, t);
      }
    }
    for (int m = 0; m < 6; ++m) total[m] += weight * vol * at[m];
  }
  const double rhs = total[1] + total[2] + total[3] + total[4] + total[5];
  double scale = 0.0;
  for (double v : total) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  return std::abs(total[0] - rhs) / scale;
}

// Initial data ----------------------------------------------------------------

SystemState make_initial_state(const ModelSpec& model, const InitialSpec& init,
                               std::uint64_t seed) {
  const StructuredGrid& g = model.domain;
  const double pi = std::numbers::pi;
  const double lx = g.extent(0), ly = g.extent(1);
  ScalarField n(g);
  switch (init.kind) {
    case InitialKind::constant:
      n = ScalarField(g, init.base);
      break;
    case InitialKind::bump: {
      const double w2 = 2.0 * init.width * init.width;
      require(init.width > 0.0, "bump width must be positive");
      n = ScalarField::sample(g, [&](double x, double y) {
        double r2 = (x - init.center[0]) * (x - init.center[0]);
        if (g.dim() == 2) r2 += (y - init.center[1]) * (y - init.center[1]);
        return init.base + init.amplitude * std::exp(-r2 / w2);
      });
      break;
    }
    case InitialKind::cosine:
      n = ScalarField::sample(
          g, [&](double x, double) { return init.base + init.amplitude * std::cos(pi * x / lx); });
      break;
    case InitialKind::perturbed: {
      require(init.modes >= 1, "perturbed initial data needs at least one mode");
      std::mt19937_64 rng(seed);
      auto uniform = [&]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
      struct Mode {
        int kx, ky;
        double weight;
      };
      std::vector<Mode> modes;
      for (int m = 0; m < init.modes; ++m) {
        Mode md{static_cast<int>(rng() % 4), g.dim() == 2 ? static_cast<int>(rng() % 4) : 0,
                (2.0 * uniform() - 1.0) / init.modes};
        if (md.kx == 0 && md.ky == 0) md.kx = 1;
        modes.push_back(md);
      }
      n = ScalarField::sample(g, [&](double x, double y) {
        double s = 0.0;
        for (const auto& md : modes)
          s += md.weight * std::cos(md.kx * pi * x / lx) * std::cos(md.ky * pi * y / ly);
        return init.base * (1.0 + init.amplitude * s);
      });
      break;
    }
  }
  if (init.mean) {
    const double current = mean_average(n);
    require(current > 0.0, "cannot rescale a field with zero mean");
    for (double& v : n.values()) v *= *init.mean / current;
  }
  n.set_tag(FieldTag::density);

  ScalarField c(g, init.c_value, FieldTag::plain);
  if (init.signal == InitialSpec::Signal::equilibrium) {
    switch (model.production.form) {
      case ProductionForm::power:
      case ProductionForm::linear:
        for (std::size_t k = 0; k < n.size(); ++k) c[k] = model.production.value(n[k]);
        break;
      case ProductionForm::consumption:
        break;
      case ProductionForm::none:
        c = ScalarField(g, 0.0);
        break;
    }
  }
  c.set_tag(FieldTag::density);

  std::optional<ScalarField> w;
  if (model.haptotaxis.enabled) w = ScalarField(g, init.w_value, FieldTag::density);
  return SystemState(0.0, std::move(n), std::move(c), std::move(w), model.velocity());
}

// Output ----------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string snapshot_name(const char* field, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.txt", field, index);
  return buf;
}

}  // namespace

void write_series_csv(const std::filesystem::path& path, const std::vector<SeriesRecord>& series) {
  std::ofstream os(path);
  if (!os) throw PreconditionError("cannot open '" + path.string() + "' for writing");
  os << "t,dt,mass_n,linf_n,l2_n,linf_c,sup_grad_c,min_n,clamp_mag\n";
  for (const auto& r : series) {
    os << fmt(r.t) << ',' << fmt(r.dt) << ',' << fmt(r.mass_n) << ',' << fmt(r.linf_n) << ','
       << fmt(r.l2_n) << ',' << fmt(r.linf_c) << ',' << fmt(r.sup_grad_c) << ',' << fmt(r.min_n)
       << ',' << fmt(r.clamp_mag) << '\n';
  }
}

std::vector<std::filesystem::path> save_snapshots(const std::filesystem::path& dir,
                                                  const Trajectory& traj) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::ofstream index(dir / "snapshots.idx");
  if (!index) throw PreconditionError("cannot write snapshot index in '" + dir.string() + "'");
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    const SystemState& st = traj.states[s];
    index << s << ' ' << fmt(st.time) << ' ' << (st.w ? 1 : 0) << '\n';
    auto put = [&](const char* name, const ScalarField& f) {
      const auto path = dir / snapshot_name(name, s);
      write_field(path, f, st.time);
      written.push_back(path);
    };
    put("n", st.n);
    put("c", st.c);
    if (st.w) put("w", *st.w);
  }
  written.push_back(dir / "snapshots.idx");
  return written;
}

Trajectory load_snapshots(const std::filesystem::path& dir, const ModelSpec& model) {
  std::ifstream index(dir / "snapshots.idx");
  if (!index) throw PreconditionError("no snapshot index in '" + dir.string() + "'");
  Trajectory traj;
  traj.model = model;
  const VectorField u = model.velocity();
  std::size_t s = 0;
  double time = 0.0;
  int has_w = 0;
  while (index >> s >> time >> has_w) {
    FieldSnapshot n = read_field(dir / snapshot_name("n", s));
    FieldSnapshot c = read_field(dir / snapshot_name("c", s));
    require(n.field.grid() == model.domain, "snapshot grid does not match the model domain");
    std::optional<ScalarField> w;
    if (has_w) w = read_field(dir / snapshot_name("w", s)).field;
    n.field.set_tag(FieldTag::density);
    require(traj.states.empty() || n.time > traj.states.back().time,
            "snapshot times must increase strictly");
    traj.states.emplace_back(n.time, std::move(n.field), std::move(c.field), std::move(w), u);
    traj.series.push_back(measure(traj.states.back(), 0.0, 0.0));
  }
  require(!traj.states.empty(), "snapshot index is empty");
  return traj;
}

}  // namespace kslab
