#include "kslab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numbers>

#include "kslab/error.hpp"
#include "kslab/fit.hpp"

namespace kslab {

EquilibriumSpec equilibrium(const ModelSpec& model, double mass) {
  EquilibriumSpec e;
  e.model = model.name;
  if (model.name == "example_a") {
    require(mass >= 0.0, "equilibrium mass must be nonnegative");
    e.mass = mass;
    e.n_star = mass;
    e.c_star = std::pow(mass, model.production.sigma);
    return e;
  }
  if (model.name == "example_b") {
    const SourceSpec& f = model.source;
    require(f.form == SourceForm::logistic && f.r > 0.0 && f.mu > 0.0,
            "example_b equilibrium needs r, mu > 0");
    const double chi = std::pow(f.r / f.mu, 1.0 / f.gamma_exp);
    e.chi = chi;
    e.n_star = chi;
    e.c_star = chi;
    return e;
  }
  throw PreconditionError("no closed-form equilibrium for model " + model.name);
}

MassReport mass_series(const Trajectory& traj, double headroom) {
  MassReport rep;
  for (const auto& r : traj.series) {
    rep.times.push_back(r.t);
    rep.masses.push_back(r.mass_n);
  }
  if (rep.masses.empty()) return rep;
  const SourceSpec& f = traj.model.source;
  const double area = traj.model.domain.measure();

  const double m0 = rep.masses.front();
  const double scale = std::abs(m0) > 0.0 ? std::abs(m0) : 1.0;
  for (double m : rep.masses)
    rep.max_relative_drift = std::max(rep.max_relative_drift, std::abs(m - m0) / scale);

  if (f.form == SourceForm::zero) {
    rep.verdict = "conservation";
    rep.passed = rep.max_relative_drift <= 1e-10;
    return rep;
  }
  if (!(f.mu > 0.0)) {
    rep.verdict = "unchecked";
    return rep;
  }
  rep.verdict = "logistic";
  for (std::size_t k = 1; k < traj.series.size(); ++k) {
    const auto& b = traj.series[k];
    const double m = b.mass_n;
    const double slope = (m - traj.series[k - 1].mass_n) / b.dt;
    const double bound = f.r * m - f.mu * std::pow(area, -f.gamma_exp) * std::pow(m, 1.0 + f.gamma_exp);
    const double dbound =
        f.r - f.mu * (1.0 + f.gamma_exp) * std::pow(area, -f.gamma_exp) * std::pow(m, f.gamma_exp);
    // the difference quotient is first-order consistent with m'
    if (slope > bound + b.dt * std::abs(dbound * slope) + 1e-12) ++rep.odi_violations;
  }
  rep.odi_holds = rep.odi_violations == 0;
  const double t_end = rep.times.back();
  rep.tail_start = 2.0 * t_end / 3.0;
  for (std::size_t k = 0; k < rep.times.size(); ++k)
    if (rep.times[k] >= rep.tail_start) rep.tail_max = std::max(rep.tail_max, rep.masses[k]);
  rep.tail_bound = area * std::pow(f.r / f.mu, 1.0 / f.gamma_exp) * (1.0 + headroom);
  rep.passed = rep.odi_holds && rep.tail_max <= rep.tail_bound;
  return rep;
}

LyapunovValue lyapunov_H(const ScalarField& n, double chi, double floor) {
  require(chi > 0.0, "lyapunov_H requires chi > 0");
  LyapunovValue out;
  double acc = 0.0;
  for (double s : n.values()) {
    if (s <= floor || s <= 0.0) {
      ++out.floor_cells;
      continue;
    }
    acc += s - chi - chi * std::log(s / chi);
  }
  out.value = acc * n.grid().cell_volume();
  out.unreliable = static_cast<double>(out.floor_cells) > 1e-3 * static_cast<double>(n.size());
  return out;
}

StepObserver lyapunov_observer(double chi, std::vector<LyapunovSample>& out) {
  require(chi > 0.0, "lyapunov_observer requires chi > 0");
  return [chi, &out](const SystemState& s, const SeriesRecord&) {
    out.push_back({s.time, lyapunov_H(s.n, chi)});
  };
}

DescentReport lyapunov_descent(const std::vector<LyapunovSample>& series, double transient_end,
                               double rel_tol, double abs_tol) {
  DescentReport d;
  d.transient_end = transient_end;
  for (std::size_t k = 1; k < series.size(); ++k) {
    if (series[k - 1].t < transient_end) continue;
    ++d.pairs;
    const double prev = series[k - 1].h.value, cur = series[k].h.value;
    if (cur > prev + rel_tol * std::abs(prev) + abs_tol) ++d.violations;
  }
  d.violations_per_1000 = d.pairs ? 1000.0 * d.violations / d.pairs : 0.0;
  d.nonincreasing = d.pairs > 0 && d.violations_per_1000 <= 1.0;
  return d;
}

RateFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& v,
                             double t_a, double t_b, double floor) {
  require(t.size() == v.size(), "rate fit needs matching series");
  require(t_a < t_b, "rate fit window needs t_a < t_b");
  std::vector<double> ts, ls;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t_a || t[k] > t_b) continue;
    if (!(v[k] > floor)) break;
    ts.push_back(t[k]);
    ls.push_back(std::log(v[k]));
  }
  if (ts.size() < 4) throw PreconditionError("rate fit needs at least 4 usable samples");
  const LineFit f = fit_line(ts, ls);
  RateFit r;
  r.t_a = ts.front();
  r.t_b = ts.back();
  r.fitted_rate = -f.slope;
  r.amplitude = std::exp(f.intercept);
  r.r_squared = f.r_squared;
  r.samples = ts.size();
  return r;
}

namespace {

// Inverse of the first nonzero Neumann eigenvalue.
double diffusion_time(const StructuredGrid& grid) {
  constexpr double pi = std::numbers::pi;
  double lambda2 = std::pow(pi / grid.extent(0), 2);
  if (grid.dim() == 2) lambda2 = std::min(lambda2, std::pow(pi / grid.extent(1), 2));
  return 1.0 / lambda2;
}

}  // namespace

std::pair<double, double> resolved_late_window(const StructuredGrid& grid,
                                               const std::vector<double>& t,
                                               const std::vector<double>& deviation, double floor) {
  require(t.size() == deviation.size() && !t.empty(), "resolved window needs matching samples");
  std::size_t last = 0;
  while (last + 1 < t.size() && deviation[last + 1] > floor) ++last;
  const double tb = t[last];
  return {std::max(2.0 * tb / 3.0, std::min(5.0 * diffusion_time(grid), 0.5 * tb)), tb};
}

namespace {

// Slope of log(increment) against log(scale), clipped to [0, 1].
double log_slope(const std::vector<double>& scales, const std::vector<double>& inc) {
  if (std::all_of(inc.begin(), inc.end(), [](double d) { return d == 0.0; })) return 1.0;
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (!(inc[k] > 0.0)) continue;
    lx.push_back(std::log(scales[k]));
    ly.push_back(std::log(inc[k]));
  }
  if (lx.size() < 2) throw PreconditionError("Hoelder fit has fewer than two nonzero increments");
  return std::clamp(fit_line(lx, ly).slope, 0.0, 1.0);
}

}  // namespace

double spatial_holder_exponent(const std::vector<const ScalarField*>& fields,
                               const std::vector<int>& scales, std::vector<double>* increments) {
  require(!fields.empty(), "Hoelder estimator needs at least one field");
  require(scales.size() >= 3, "Hoelder estimator needs at least 3 scales");
  const StructuredGrid& g = fields.front()->grid();
  std::vector<double> hs, inc;
  for (int s : scales) {
    require(s >= 2, "Hoelder scales must span at least 2 cells");
    require(s < g.cells(0), "Hoelder scale exceeds the grid");
    double m = 0.0;
    for (const ScalarField* f : fields) {
      for (int j = 0; j < g.cells(1); ++j)
        for (int i = 0; i + s < g.cells(0); ++i) m = std::max(m, std::abs(f->at(i + s, j) - f->at(i, j)));
      if (g.dim() == 2 && s < g.cells(1))
        for (int j = 0; j + s < g.cells(1); ++j)
          for (int i = 0; i < g.cells(0); ++i) m = std::max(m, std::abs(f->at(i, j + s) - f->at(i, j)));
    }
    hs.push_back(s * g.h(0));
    inc.push_back(m);
  }
  if (increments) *increments = inc;
  return log_slope(hs, inc);
}

HolderReport holder_exponent(const Trajectory& traj, double t_a, double t_b,
                             const std::vector<int>& space_scales,
                             const std::vector<int>& time_scales) {
  require(time_scales.size() >= 3, "Hoelder estimator needs at least 3 time scales");
  const auto w = traj.window(t_a, t_b);
  HolderReport rep;
  rep.p = traj.model.diffusion.p;
  std::vector<const ScalarField*> fields;
  for (const auto* s : w) fields.push_back(&s->n);
  require(!fields.empty(), "no snapshot in the Hoelder window");
  rep.gamma_space = spatial_holder_exponent(fields, space_scales, &rep.space_increments);
  for (int s : space_scales) rep.space_scales.push_back(s * traj.model.domain.h(0));

  for (int gap : time_scales) {
    require(gap >= 1, "time scales must be positive snapshot gaps");
    require(static_cast<std::size_t>(gap) < w.size(), "time scale exceeds the snapshots in the window");
    double m = 0.0, dt = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k + gap < w.size(); ++k) {
      const ScalarField& a = w[k]->n;
      const ScalarField& b = w[k + gap]->n;
      for (std::size_t c = 0; c < a.size(); ++c) m = std::max(m, std::abs(b[c] - a[c]));
      dt += w[k + gap]->time - w[k]->time;
      ++count;
    }
    rep.time_scales.push_back(dt / count);
    rep.time_increments.push_back(m);
  }
  rep.gamma_time = log_slope(rep.time_scales, rep.time_increments);
  rep.consistency = std::abs(rep.gamma_time - rep.gamma_space / rep.p);
  return rep;
}

namespace {

ProbeEntry probe_mass(double sigma, double mass, const ProbeSettings& st) {
  ProbeEntry e;
  e.mass = mass;
  const StructuredGrid g(1.0, 1.0, st.cells, st.cells);
  ModelSpec model = preset("example_a", g);
  model.production = ProductionSpec::power(sigma);
  InitialSpec init;
  init.kind = InitialKind::bump;
  init.base = 0.0;
  init.amplitude = 1.0;
  init.width = 0.15;
  init.center = {0.5, 0.5};
  init.mean = mass;
  SolverConfig cfg;
  cfg.t_end = st.t_end;
  cfg.snapshot_interval = st.t_end;
  cfg.dt_initial = 0.01;
  try {
    const Trajectory traj = run(model, make_initial_state(model, init, 0), cfg);
    e.status = to_string(traj.status);
    if (traj.status == RunStatus::blowup_suspected) return e;
    std::vector<double> t, dev;
    for (const auto& r : traj.series) {
      t.push_back(r.t);
      dev.push_back(std::max(r.linf_n - mass, mass - r.min_n));
    }
    e.final_deviation = dev.back();
    const double floor = 1e-10 * std::max(mass, 1.0);
    const auto [a, b] = resolved_late_window(g, t, dev, floor);
    try {
      e.fit = fit_exponential_rate(t, dev, a, b, floor);
    } catch (const PreconditionError&) {
      // deviation already at round-off across the late window
    }
    const bool fit_ok = !e.fit || (e.fit->fitted_rate > 0.0 && e.fit->r_squared >= 0.95);
    e.converged = e.final_deviation <= st.tolerance * std::max(mass, 1.0) && fit_ok;
  } catch (const SolverError& err) {
    e.status = std::string("solver error: ") + err.what();
  }
  return e;
}

}  // namespace

ThresholdBracket smallness_threshold_probe(double sigma, const std::vector<double>& masses,
                                           const ProbeSettings& settings) {
  require(sigma > 0.0 && sigma < 1.0, "probe requires sigma in (0, 2/N) with N = 2");
  require(!masses.empty(), "probe needs at least one mass");
  for (std::size_t k = 1; k < masses.size(); ++k)
    require(masses[k] > masses[k - 1], "probe masses must increase strictly");
  require(masses.front() > 0.0, "probe masses must be positive");

  ThresholdBracket br;
  br.degenerate = masses.size() == 1;
  br.entries.resize(masses.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(settings.jobs, 1));
  for (std::size_t start = 0; start < masses.size(); start += jobs) {
    std::vector<std::future<ProbeEntry>> batch;
    for (std::size_t k = start; k < std::min(masses.size(), start + jobs); ++k)
      batch.push_back(std::async(std::launch::async, probe_mass, sigma, masses[k], settings));
    for (std::size_t k = 0; k < batch.size(); ++k) br.entries[start + k] = batch[k].get();
  }
  for (const auto& e : br.entries) {
    if (e.converged && !br.smallest_failed) br.largest_converged = e.mass;
    if (!e.converged && !br.smallest_failed) br.smallest_failed = e.mass;
  }
  return br;
}

nlohmann::json to_json(const EquilibriumSpec& e) {
  nlohmann::json j = {{"model", e.model}, {"n_star", e.n_star}, {"c_star", e.c_star},
                      {"u_zero", e.u_zero}};
  if (e.model == "example_a") j["mass"] = e.mass;
  if (e.chi) j["chi"] = *e.chi;
  return j;
}

nlohmann::json to_json(const MassReport& m) {
  return {{"verdict", m.verdict},       {"max_relative_drift", m.max_relative_drift},
          {"odi_holds", m.odi_holds},   {"odi_violations", m.odi_violations},
          {"tail_start", m.tail_start}, {"tail_max", m.tail_max},
          {"tail_bound", m.tail_bound}, {"passed", m.passed}};
}

nlohmann::json to_json(const RateFit& f) {
  return {{"t_a", f.t_a},         {"t_b", f.t_b},
          {"fitted_rate", f.fitted_rate}, {"amplitude", f.amplitude},
          {"r_squared", f.r_squared}, {"samples", f.samples}};
}

nlohmann::json to_json(const HolderReport& h) {
  return {{"gamma_space", h.gamma_space},   {"gamma_time", h.gamma_time},
          {"consistency", h.consistency},   {"p", h.p},
          {"space_scales", h.space_scales}, {"space_increments", h.space_increments},
          {"time_scales", h.time_scales},   {"time_increments", h.time_increments}};
}

nlohmann::json to_json(const DescentReport& d) {
  return {{"transient_end", d.transient_end}, {"pairs", d.pairs},
          {"violations", d.violations},       {"violations_per_1000", d.violations_per_1000},
          {"nonincreasing", d.nonincreasing}};
}

nlohmann::json to_json(const ThresholdBracket& b) {
  nlohmann::json j;
  j["largest_converged"] = b.largest_converged ? nlohmann::json(*b.largest_converged) : nlohmann::json(nullptr);
  j["smallest_failed"] = b.smallest_failed ? nlohmann::json(*b.smallest_failed) : nlohmann::json(nullptr);
  j["open_right"] = !b.smallest_failed.has_value();
  j["degenerate"] = b.degenerate;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : b.entries) {
    nlohmann::json row = {{"mass", e.mass},
                          {"converged", e.converged},
                          {"final_deviation", e.final_deviation},
                          {"status", e.status}};
    if (e.fit) row["fit"] = to_json(*e.fit);
    j["entries"].push_back(row);
  }
  return j;
}

StabilityAnalysis analyze_stability(const Trajectory& traj, double mass,
                                    std::vector<LyapunovSample> lyapunov) {
  StabilityAnalysis a;
  a.mass = mass_series(traj);
  try {
    a.equilibrium = equilibrium(traj.model, mass);
  } catch (const PreconditionError&) {
  }
  a.lyapunov = std::move(lyapunov);
  if (traj.series.empty()) return a;
  if (a.equilibrium) {
    std::vector<double> t, dn, dc;
    for (const auto& r : traj.series) {
      t.push_back(r.t);
      dn.push_back(std::max(r.linf_n - a.equilibrium->n_star, a.equilibrium->n_star - r.min_n));
      dc.push_back(std::max(r.linf_c - a.equilibrium->c_star, a.equilibrium->c_star - r.min_c));
    }
    a.final_n_deviation = dn.back();
    a.final_c_deviation = dc.back();
    const double n_floor = 1e-10 * std::max(a.equilibrium->n_star, 1.0);
    const double c_floor = 1e-10 * std::max(a.equilibrium->c_star, 1.0);
    const auto [na, nb] = resolved_late_window(traj.model.domain, t, dn, n_floor);
    const auto [ca, cb] = resolved_late_window(traj.model.domain, t, dc, c_floor);
    try {
      if (na < nb) a.n_fit = fit_exponential_rate(t, dn, na, nb, n_floor);
    } catch (const PreconditionError&) {
    }
    try {
      if (ca < cb) a.c_fit = fit_exponential_rate(t, dc, ca, cb, c_floor);
    } catch (const PreconditionError&) {
    }
  }
  if (!a.lyapunov.empty()) a.descent = lyapunov_descent(a.lyapunov, 5.0 * diffusion_time(traj.model.domain));
  return a;
}

nlohmann::json to_json(const StabilityAnalysis& a) {
  nlohmann::json j;
  j["equilibrium"] = a.equilibrium ? to_json(*a.equilibrium) : nlohmann::json(nullptr);
  j["mass"] = to_json(a.mass);
  j["final_n_deviation"] = a.final_n_deviation;
  j["final_c_deviation"] = a.final_c_deviation;
  j["n_rate_fit"] = a.n_fit ? to_json(*a.n_fit) : nlohmann::json(nullptr);
  j["c_rate_fit"] = a.c_fit ? to_json(*a.c_fit) : nlohmann::json(nullptr);
  j["lyapunov_descent"] = a.descent ? to_json(*a.descent) : nlohmann::json(nullptr);
  nlohmann::json h = nlohmann::json::array();
  for (const auto& s : a.lyapunov)
    h.push_back({{"t", s.t}, {"H", s.h.value}, {"floor_cells", s.h.floor_cells},
                 {"unreliable", s.h.unreliable}});
  j["lyapunov"] = h;
  return j;
}

void write_stability_csv(const std::filesystem::path& path, const Trajectory& traj,
                         const StabilityAnalysis& a) {
  std::ofstream out(path);
  if (!out) throw PreconditionError("cannot write " + path.string());
  out.precision(17);
  out << "t,mass_n,n_deviation,c_deviation,H\n";
  for (std::size_t k = 0; k < traj.series.size(); ++k) {
    const auto& r = traj.series[k];
    out << r.t << ',' << r.mass_n << ',';
    if (a.equilibrium) {
      out << std::max(r.linf_n - a.equilibrium->n_star, a.equilibrium->n_star - r.min_n) << ','
          << std::max(r.linf_c - a.equilibrium->c_star, a.equilibrium->c_star - r.min_c);
    } else {
      out << ',';
    }
    out << ',';
    if (k < a.lyapunov.size()) out << a.lyapunov[k].h.value;
    out << '\n';
  }
}

}  // namespace kslab
