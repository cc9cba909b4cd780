#include "kslab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "kslab/error.hpp"
#include "kslab/fit.hpp"

namespace kslab {

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::theorem1: return "theorem1";
    case Regime::theorem2: return "theorem2";
    case Regime::borderline: return "borderline";
  }
  return "unknown";
}

ExponentSet exponents(double p, int dim, double alpha, double beta) {
  require(p > 1.0, "exponents require p > 1");
  require(dim == 1 || dim == 2, "exponents require N in {1, 2}");
  ExponentSet e;
  e.p = p;
  e.dim = dim;
  e.alpha = alpha;
  e.beta = beta;
  const double N = dim;
  const double am = alpha < 0.0 ? -alpha : 0.0;
  e.alpha_minus = am;
  e.critical_exponent = p * (N + 2.0 + am) / N;
  const double sens = p * (beta + am) / (p - 1.0);
  e.classifier_max = std::max(sens, 2.0 + am);
  e.bracket_scaled = e.critical_exponent - std::max({sens * N, 2.0 + am, p});
  e.bracket_plain = e.critical_exponent - std::max({sens, 2.0 + am, p});
  e.theta_hat = e.bracket_scaled;
  if (e.bracket_scaled > 0.0) {
    e.kappa = p / ((p - 1.0) * e.bracket_scaled);
    e.kappa_hat = p / ((p + N) * e.bracket_scaled);
  }
  if (e.bracket_plain > 0.0) {
    e.kappa_plain = p / ((p - 1.0) * e.bracket_plain);
    e.kappa_hat_plain = p / ((p + N) * e.bracket_plain);
  }
  const bool classifier_first = e.classifier_max < e.critical_exponent;
  if (!classifier_first)
    e.regime = Regime::theorem2;
  else if (e.bracket_scaled > 0.0)
    e.regime = Regime::theorem1;
  else
    e.regime = Regime::borderline;
  e.readings_disagree = classifier_first != (e.bracket_scaled > 0.0);

  e.r_min_theorem2 = std::max({sens, 2.0 + am, N * (2.0 + am) / p - N,
                               (p + N) * (beta + am) / (p * (p - 1.0)) - N - 2.0 - am});
  e.r_min_m_condition = (e.classifier_max * (p + N) - p * (N + 2.0 + am)) / p;
  e.r_min_theorem4 = std::max({sens * N, 2.0 + am, N * (2.0 + am) / p - N,
                               (p + N) * (beta + am) / (p * (p - 1.0)) - N - 2.0 - am,
                               e.critical_exponent});
  return e;
}

ExponentSet exponents(const ModelSpec& model) {
  return exponents(model.diffusion.p, model.domain.dim(), model.diffusion.alpha,
                   model.sensitivity.bound_beta());
}

BoundExponents theorem1_exponents(const ExponentSet& e) {
  if (e.regime == Regime::theorem2)
    throw PreconditionError("first-regime bound requested in the second regime");
  BoundExponents x;
  x.regime = e.regime;
  x.r_exp = e.critical_exponent;
  if (e.bracket_scaled > 0.0) {
    x.kappa = e.kappa;
    x.kappa_hat = e.kappa_hat;
    x.theta_hat = e.bracket_scaled;
    x.reading = "bracket with factor N";
  } else if (e.bracket_plain > 0.0) {
    x.kappa = e.kappa_plain;
    x.kappa_hat = e.kappa_hat_plain;
    x.theta_hat = e.bracket_plain;
    x.reading = "bracket without factor N (borderline fallback)";
  } else {
    throw PreconditionError("no positive exponent bracket; kappa is infinite");
  }
  return x;
}

BoundExponents theorem2_exponents(const ExponentSet& e, double r_exp) {
  if (e.regime != Regime::theorem2)
    throw PreconditionError("second-regime bound requested outside the second regime");
  if (!(r_exp > e.r_min_theorem2))
    throw PreconditionError("r = " + std::to_string(r_exp) + " must exceed " +
                            std::to_string(e.r_min_theorem2));
  const double N = e.dim;
  const double theta = r_exp - e.classifier_max;
  const double m = (N * r_exp - e.p * (N + 2.0 + e.alpha_minus)) / (theta * (e.p + N));
  if (!(m > 0.0 && m < 1.0))
    throw PreconditionError("correction m = " + std::to_string(m) + " outside (0, 1); need r > " +
                            std::to_string(e.r_min_m_condition));
  BoundExponents x;
  x.regime = Regime::theorem2;
  x.r_exp = r_exp;
  x.theta_hat = theta;
  x.m = m;
  x.kappa = e.p / (theta * (e.p - 1.0) * (1.0 - m));
  x.kappa_hat = e.p / (theta * (e.p + N) * (1.0 - m));
  x.reading = "second regime with 1/(1-m) correction";
  return x;
}

double bound_excess(const BoundExponents& x, const BoundInputs& in, double C) {
  require(in.b_frak >= 1.0, "b must be at least 1");
  require(in.t_hat > 0.0, "t_hat must be positive");
  require(in.mean_integral >= 0.0, "mean integral must be nonnegative");
  if (in.mean_integral == 0.0) return 0.0;
  const double time_factor = in.t_hat + std::pow(in.t_hat, -static_cast<double>(in.dim) / in.p);
  return C * std::pow(in.b_frak, x.kappa) * std::pow(time_factor, x.kappa_hat) *
         std::pow(in.mean_integral, x.kappa_hat);
}

double bound_value(const BoundExponents& x, const BoundInputs& in, double C) {
  return bound_excess(x, in, C) + in.kf;
}

double theorem1_bound(const ExponentSet& e, const BoundInputs& in, double C) {
  return bound_value(theorem1_exponents(e), in, C);
}

double theorem2_bound(const ExponentSet& e, const BoundInputs& in, double r_exp, double C) {
  return bound_value(theorem2_exponents(e, r_exp), in, C);
}

double optimal_t_hat(int dim, double p) {
  return std::pow(static_cast<double>(dim) / p, p / (p + dim));
}

double grad_c_sup(const Trajectory& traj, double t0, double t_hat) {
  const auto w = traj.window(t0 - t_hat, t0);
  require(!w.empty(), "no snapshot inside the gradient window");
  double sup = 1.0;
  for (const auto* s : w) sup = std::max(sup, lq_norm(gradient(s->c).magnitude(), kInfinity));
  return sup;
}

BoundInputs ScenarioMeasurement::inputs() const {
  return {b_frak, t_hat, mean_integral, kf, data.dim, data.p};
}

ScenarioMeasurement measure_scenario(const std::string& id, const Trajectory& traj, double t0,
                                     double t_hat, double r_exp) {
  require(t_hat > 0.0 && t_hat < t0, "scenario window requires 0 < t_hat < t0");
  require(r_exp > 0.0, "scenario integrability exponent must be positive");
  ScenarioMeasurement s;
  s.id = id;
  s.data = traj.model.data_tuple();
  s.t0 = t0;
  s.t_hat = t_hat;
  s.r_exp = r_exp;
  s.kf = compute_kf(traj.model.source);
  s.b_frak = grad_c_sup(traj, t0, t_hat);
  double span = 0.0;
  const double vol = traj.model.domain.cell_volume();
  const double integral = integrate_in_time(
      traj, t0 - t_hat, t0,
      [&](const SystemState& st) {
        double acc = 0.0;
        for (double v : st.n.values()) acc += std::pow(v, r_exp);
        return acc * vol;
      },
      &span);
  require(span > 0.0, "fewer than two snapshots inside the scenario window");
  s.mean_integral = integral / span;

  bool any = false;
  for (const auto& rec : traj.series)
    if (rec.t >= t0 - 0.5 * t_hat && rec.t <= t0) {
      s.measured_sup = std::max(s.measured_sup, rec.linf_n);
      any = true;
    }
  for (const auto* st : traj.window(t0 - 0.5 * t_hat, t0)) {
    s.measured_sup = std::max(s.measured_sup, st->n.max());
    any = true;
  }
  require(any, "no sample inside the half window");
  if (!std::isfinite(s.measured_sup))
    throw PreconditionError("density is not bounded on the window");
  return s;
}

double calibrate_C(const BoundExponents& x, const std::vector<ScenarioMeasurement>& scenarios) {
  require(!scenarios.empty(), "calibrate_C needs at least one scenario");
  double C = 0.0;
  for (const auto& s : scenarios) {
    if (!(s.data == scenarios.front().data))
      throw PreconditionError("calibration scenarios do not share one data tuple");
    const double excess = s.measured_sup - s.kf;
    if (excess <= 0.0) continue;
    const double unit = bound_excess(x, s.inputs(), 1.0);
    if (!(unit > 0.0))
      throw PreconditionError("scenario " + s.id + " exceeds K_f with a vanishing bound");
    C = std::max(C, excess / unit);
  }
  return std::max(C, std::numeric_limits<double>::epsilon());
}

BoundCertificate certify_scenario(const ExponentSet& e, const BoundExponents& x,
                                  const ScenarioMeasurement& s, double C) {
  BoundCertificate c;
  c.scenario = s.id;
  c.b_frak = s.b_frak;
  c.t_hat = s.t_hat;
  c.mean_integral = s.mean_integral;
  c.kf = s.kf;
  c.exponents = e;
  c.used = x;
  c.C_calibrated = C;
  c.bound_value = bound_value(x, s.inputs(), C);
  c.measured_sup = s.measured_sup;
  c.margin = c.bound_value - c.measured_sup;
  return c;
}

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const ExponentSet& e) {
  return {{"p", e.p},
          {"N", e.dim},
          {"alpha", e.alpha},
          {"beta", e.beta},
          {"alpha_minus", e.alpha_minus},
          {"critical_exponent", e.critical_exponent},
          {"classifier_max", e.classifier_max},
          {"bracket_scaled", e.bracket_scaled},
          {"bracket_plain", e.bracket_plain},
          {"kappa", finite_or_null(e.kappa)},
          {"kappa_hat", finite_or_null(e.kappa_hat)},
          {"kappa_infinite", !e.kappa_finite()},
          {"kappa_plain", finite_or_null(e.kappa_plain)},
          {"kappa_hat_plain", finite_or_null(e.kappa_hat_plain)},
          {"theta_hat", e.theta_hat},
          {"regime", to_string(e.regime)},
          {"readings_disagree", e.readings_disagree},
          {"r_min_theorem2", e.r_min_theorem2},
          {"r_min_m_condition", e.r_min_m_condition},
          {"r_min_theorem4", e.r_min_theorem4}};
}

nlohmann::json to_json(const BoundExponents& x) {
  return {{"regime", to_string(x.regime)}, {"r", x.r_exp},         {"kappa", x.kappa},
          {"kappa_hat", x.kappa_hat},      {"theta_hat", x.theta_hat}, {"m", x.m},
          {"reading", x.reading}};
}

nlohmann::json to_json(const DataTuple& d) {
  return {{"p", d.p},   {"alpha", d.alpha}, {"beta", d.beta},         {"a0", d.a0},
          {"b0", d.b0}, {"N", d.dim},       {"Lx", d.extent_x}, {"Ly", d.extent_y}};
}

nlohmann::json to_json(const BoundCertificate& c) {
  return {{"scenario", c.scenario},       {"b_frak", c.b_frak},
          {"t_hat", c.t_hat},             {"mean_integral", c.mean_integral},
          {"K_f", c.kf},                  {"exponents", to_json(c.exponents)},
          {"exponents_used", to_json(c.used)}, {"C_calibrated", c.C_calibrated},
          {"bound_value", c.bound_value}, {"measured_sup", c.measured_sup},
          {"margin", c.margin}};
}

nlohmann::json certification_json(const ExponentSet& e, const BoundExponents& x, double C,
                                  const std::vector<BoundCertificate>& calibration,
                                  const std::vector<BoundCertificate>& holdout) {
  nlohmann::json j;
  j["exponents"] = to_json(e);
  j["exponents_used"] = to_json(x);
  j["C_calibrated"] = C;
  j["status"] = holdout.empty() ? "calibration-only" : "certified";
  j["calibration"] = nlohmann::json::array();
  for (const auto& c : calibration) j["calibration"].push_back(to_json(c));
  j["holdout"] = nlohmann::json::array();
  double min_margin = kInfinity;
  for (const auto& c : holdout) {
    j["holdout"].push_back(to_json(c));
    min_margin = std::min(min_margin, c.margin);
  }
  if (!holdout.empty()) {
    j["holdout_min_margin"] = min_margin;
    j["holdout_passed"] = min_margin >= 0.0;
  }
  return j;
}

void write_certificate_csv(const std::filesystem::path& path,
                           const std::vector<BoundCertificate>& calibration,
                           const std::vector<BoundCertificate>& holdout) {
  std::ofstream out(path);
  if (!out) throw PreconditionError("cannot write " + path.string());
  out.precision(17);
  out << "scenario,split,p,alpha,beta,N,b_frak,t_hat,mean_integral,bound,measured_sup,margin\n";
  auto row = [&](const BoundCertificate& c, const char* split) {
    out << c.scenario << ',' << split << ',' << c.exponents.p << ',' << c.exponents.alpha << ','
        << c.exponents.beta << ',' << c.exponents.dim << ',' << c.b_frak << ',' << c.t_hat << ','
        << c.mean_integral << ',' << c.bound_value << ',' << c.measured_sup << ',' << c.margin
        << '\n';
  };
  for (const auto& c : calibration) row(c, "calibration");
  for (const auto& c : holdout) row(c, "holdout");
}

Theorem4Report theorem4_check(const Trajectory& traj, double K, double r_exp, double m_exp,
                              double t_bar0, double kappa, std::optional<double> lambda) {
  const ModelSpec& model = traj.model;
  const ExponentSet e = exponents(model);
  require(m_exp > model.domain.dim(), "long-time check requires m > N");
  require(r_exp > e.r_min_theorem4,
          "long-time check requires r > " + std::to_string(e.r_min_theorem4));
  require(K > 0.0 && kappa > 0.0, "long-time check requires K > 0 and kappa > 0");
  Theorem4Report rep;
  rep.K = K;
  rep.kappa = kappa;
  rep.kf = compute_kf(model.source);

  auto holds = [&](const SystemState& s) {
    ScalarField g(s.n.grid());
    for (std::size_t c = 0; c < g.size(); ++c) g[c] = model.production.value(s.n[c], s.c[c]);
    return lq_norm(s.n, r_exp) <= K && lq_norm(g, m_exp) <= K &&
           lq_norm(s.u.magnitude(), kInfinity) < K;
  };
  // earliest snapshot after t_bar0 from which every later snapshot complies
  std::optional<std::size_t> first;
  for (std::size_t k = traj.states.size(); k-- > 0;) {
    const SystemState& s = traj.states[k];
    if (s.time < t_bar0 || !holds(s)) break;
    first = k;
  }
  if (!first) {
    rep.reason = "not applicable: hypotheses fail on the tail of the trajectory";
    return rep;
  }
  rep.applicable = true;
  rep.t_bar = traj.states[*first].time;
  for (std::size_t k = *first; k < traj.states.size(); ++k)
    rep.tail_sup = std::max(rep.tail_sup, traj.states[k].n.max());
  for (const auto& rec : traj.series)
    if (rec.t >= rep.t_bar) rep.tail_sup = std::max(rep.tail_sup, rec.linf_n);
  const double growth = std::pow(K + 1.0, kappa);
  rep.lambda_min = std::max(rep.tail_sup - rep.kf, 0.0) / growth;
  rep.lambda = lambda.value_or(rep.lambda_min);
  rep.bound = rep.lambda * growth + rep.kf;
  rep.margin = rep.bound - rep.tail_sup;
  rep.passed = rep.margin >= 0.0;
  return rep;
}

nlohmann::json to_json(const Theorem4Report& r) {
  return {{"applicable", r.applicable}, {"reason", r.reason},   {"t_bar", r.t_bar},
          {"K", r.K},                   {"kappa", r.kappa},     {"K_f", r.kf},
          {"tail_sup", r.tail_sup},     {"lambda_min", r.lambda_min}, {"lambda", r.lambda},
          {"bound", r.bound},           {"margin", r.margin},   {"passed", r.passed}};
}

HeatDecayReport heat_decay_check(const ScalarField& phi0, double q, double l,
                                 const std::vector<double>& times, double dt) {
  require(l >= 1.0 && l <= q, "heat check requires 1 <= l <= q");
  require(!times.empty() && times.front() > 0.0, "heat check times must be positive");
  for (std::size_t k = 1; k < times.size(); ++k)
    require(times[k] > times[k - 1], "heat check times must increase");
  require(dt > 0.0, "heat check needs dt > 0");

  const StructuredGrid& g = phi0.grid();
  HeatDecayReport rep;
  constexpr double pi = std::numbers::pi;
  rep.lambda2 = std::pow(pi / g.extent(0), 2);
  if (g.dim() == 2) rep.lambda2 = std::min(rep.lambda2, std::pow(pi / g.extent(1), 2));
  const double inv_l = 1.0 / l;
  const double inv_q = std::isinf(q) ? 0.0 : 1.0 / q;
  rep.envelope_exponent = 0.5 * g.dim() * (inv_l - inv_q);

  // pure diffusion; phi0 is shifted to a positive density, the deviation from
  // the mean does not see the shift
  ModelSpec model;
  model.name = "heat";
  model.diffusion = DiffusionSpec::power(1.0, 0.0);
  model.sensitivity = SensitivitySpec::none();
  model.source = SourceSpec::zero();
  model.production = ProductionSpec::none();
  model.domain = g;
  SolverConfig cfg;
  cfg.dt_policy = DtPolicy::fixed;
  cfg.dt_initial = dt;
  cfg.implicit_tolerance = 1e-13;

  const double mean0 = mean_average(phi0);
  ScalarField dev0(g);
  for (std::size_t c = 0; c < g.size(); ++c) dev0[c] = phi0[c] - mean0;
  const double norm0 = lq_norm(dev0, l);
  ScalarField n(g);
  const double shift = 1.0 - phi0.min();
  for (std::size_t c = 0; c < g.size(); ++c) n[c] = phi0[c] + shift;
  SystemState state(0.0, n, ScalarField(g), std::nullopt, VectorField(g));

  auto envelope = [&](double t) {
    return (1.0 + std::pow(t, -rep.envelope_exponent)) * std::exp(-rep.lambda2 * t);
  };
  auto deviation_norm = [&](const ScalarField& f) {
    const double mean = mean_average(f);
    ScalarField dev(g);
    for (std::size_t c = 0; c < g.size(); ++c) dev[c] = f[c] - mean;
    return lq_norm(dev, q);
  };
  // every intermediate step inside [first, last sample] is kept for the
  // envelope check; only the sample times calibrate the prefactor
  std::vector<std::pair<double, double>> dense;
  for (double target : times) {
    while (state.time < target - 1e-12 * target) {
      const double h = std::min(dt, target - state.time);
      StepOutcome o = step(state, model, cfg, h);
      state = std::move(o.state);
      if (state.time >= times.front() - 1e-12 && state.time < target - 1e-12 * target &&
          norm0 > 0.0)
        dense.emplace_back(state.time, deviation_norm(state.n) / norm0);
    }
    rep.times.push_back(target);
    rep.deviation_norms.push_back(deviation_norm(state.n));
    rep.smoothing_ratios.push_back(norm0 > 0.0 ? rep.deviation_norms.back() / norm0 : 0.0);
  }

  // rate fit on the samples that stay clear of round-off
  std::vector<double> ts, logs;
  for (std::size_t k = 0; k < rep.times.size(); ++k)
    if (rep.deviation_norms[k] > 1e-12 * std::max(norm0, 1e-300)) {
      ts.push_back(rep.times[k]);
      logs.push_back(std::log(rep.deviation_norms[k]));
    }
  if (ts.size() >= 2) {
    const LineFit f = fit_line(ts, logs);
    rep.fitted_rate = -f.slope;
    rep.r_squared = f.r_squared;
  }
  rep.rate_relative_error = std::abs(rep.fitted_rate - rep.lambda2) / rep.lambda2;

  for (std::size_t k = 0; k < rep.times.size(); ++k)
    rep.prefactor = std::max(rep.prefactor, rep.smoothing_ratios[k] / envelope(rep.times[k]));
  rep.envelope_respected = std::isfinite(rep.prefactor);
  for (const auto& [t, ratio] : dense) {
    ++rep.checked_steps;
    if (ratio > rep.prefactor * envelope(t) * (1.0 + 1e-9)) ++rep.envelope_violations;
  }
  rep.envelope_respected = rep.envelope_respected && rep.envelope_violations == 0;
  return rep;
}

nlohmann::json to_json(const HeatDecayReport& r) {
  return {{"lambda2", r.lambda2},
          {"fitted_rate", r.fitted_rate},
          {"rate_relative_error", r.rate_relative_error},
          {"r_squared", r.r_squared},
          {"envelope_exponent", r.envelope_exponent},
          {"prefactor", r.prefactor},
          {"checked_steps", r.checked_steps},
          {"envelope_violations", r.envelope_violations},
          {"envelope_respected", r.envelope_respected},
          {"times", r.times},
          {"deviation_norms", r.deviation_norms},
          {"smoothing_ratios", r.smoothing_ratios}};
}

}  // namespace kslab
