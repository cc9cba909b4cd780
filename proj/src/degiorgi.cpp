#include "kslab/degiorgi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kslab/error.hpp"

namespace kslab {

LevelLadder build_ladder(double k0, double t0, double t_hat, double sigma, int depth,
                         std::optional<double> tau_hat, double kf) {
  require(k0 >= kf, "ladder base level must satisfy k0 >= K_f");
  require(t_hat > 0.0 && t_hat < t0, "ladder requires 0 < t_hat < t0");
  require(sigma > 0.0 && sigma < 1.0, "ladder requires sigma in (0, 1)");
  require(depth >= 1, "ladder depth must be at least 1");
  const double tau = tau_hat.value_or(t_hat);
  require(tau > 0.0 && tau <= t_hat, "ladder requires tau_hat in (0, t_hat]");

  LevelLadder l;
  l.k0 = k0;
  l.t0 = t0;
  l.t_hat = t_hat;
  l.sigma = sigma;
  l.tau_hat = tau;
  l.depth = depth;
  for (int j = 0; j <= depth; ++j) {
    l.levels.push_back((2.0 - std::ldexp(1.0, -j)) * k0);
    l.intervals.push_back(
        {t0 - sigma * tau - std::ldexp(1.0, -j) * (1.0 - sigma) * tau, t0});
  }
  for (int j = 0; j < depth; ++j) l.mid_levels.push_back(0.5 * (l.levels[j] + l.levels[j + 1]));
  for (int j = 0; j < depth; ++j)
    if (!l.intervals[j].contains(l.intervals[j + 1]))
      throw PreconditionError("ladder intervals fail to nest");
  return l;
}

TimeCutoff::TimeCutoff(double rise_begin, double rise_end, double end)
    : rise_begin_(rise_begin), rise_end_(rise_end), end_(end) {
  require(rise_begin < rise_end && rise_end <= end, "cutoff requires rise_begin < rise_end <= end");
}

TimeCutoff TimeCutoff::for_ladder(const LevelLadder& ladder, int j) {
  require(j >= 0 && j < ladder.depth, "cutoff index outside the ladder");
  return TimeCutoff(ladder.intervals[j].begin, ladder.intervals[j + 1].begin, ladder.t0);
}

double TimeCutoff::value(double t) const {
  if (t <= rise_begin_) return 0.0;
  if (t >= rise_end_) return t <= end_ ? 1.0 : 0.0;
  const double s = (t - rise_begin_) / (rise_end_ - rise_begin_);
  return s * s * (3.0 - 2.0 * s);
}

double TimeCutoff::derivative(double t) const {
  if (t <= rise_begin_ || t >= rise_end_) return 0.0;
  const double w = rise_end_ - rise_begin_;
  const double s = (t - rise_begin_) / w;
  return 6.0 * s * (1.0 - s) / w;
}

double TimeCutoff::max_slope() const { return 1.5 / (rise_end_ - rise_begin_); }

std::string TimeCutoff::describe() const {
  std::ostringstream os;
  os.precision(10);
  os << "smoothstep on [" << rise_begin_ << ", " << rise_end_ << "], one up to " << end_
     << ", max |eta'| = " << max_slope();
  return os.str();
}

double CaccioppoliSides::rhs() const {
  return rhs_time_derivative_term + rhs_gradc_term + std::max(rhs_source_term, 0.0);
}

CaccioppoliSides caccioppoli_sides(const Trajectory& traj, double k, const TimeCutoff& eta,
                                   double alpha_minus) {
  require(k > 1.0, "caccioppoli_sides requires k > 1");
  require(alpha_minus >= 0.0, "alpha_minus must be nonnegative");
  const ModelSpec& model = traj.model;
  const double p = model.diffusion.p;
  const double beta = model.sensitivity.bound_beta();
  const auto inside = traj.window(eta.rise_begin(), eta.end());
  require(inside.size() >= 8, "fewer than 8 snapshots cover the cutoff support");
  // start from the last snapshot at or before the rise, where eta vanishes
  double t_lo = eta.rise_begin();
  for (const auto& s : traj.states)
    if (s.time <= eta.rise_begin()) t_lo = s.time;

  const StructuredGrid& g = model.domain;
  const double vol = g.cell_volume();
  const double e_sup = 2.0 + alpha_minus;
  const double e_mass = p * (beta + alpha_minus) / (p - 1.0);

  CaccioppoliSides out;
  out.level = k;
  out.eta = eta.describe();

  double grad_c_sup = 0.0;
  for (const auto* s : traj.window(t_lo, eta.end()))
    grad_c_sup = std::max(grad_c_sup, lq_norm(gradient(s->c).magnitude(), kInfinity));

  for (const auto* s : inside) {
    double acc = 0.0;
    for (double v : s->n.values())
      if (v > k) acc += std::pow(v - k, e_sup);
    out.lhs_sup_term = std::max(out.lhs_sup_term, acc * vol * eta.value(s->time));
  }

  out.lhs_gradient_term = integrate_in_time(traj, t_lo, eta.end(), [&](const SystemState& s) {
    const double e = eta.value(s.time);
    if (e == 0.0) return 0.0;
    const VectorField gw = gradient(truncate_plus(s.n, k));
    double acc = 0.0;
    for (std::size_t c = 0; c < s.n.size(); ++c) {
      const double w = std::max(s.n[c] - k, 0.0);
      const double gm = std::hypot(gw.component(0)[c], gw.component(1)[c]);
      if (gm == 0.0) continue;
      double term = std::pow(gm, p);
      if (alpha_minus > 0.0) term *= std::pow(s.n[c] + 1.0, -alpha_minus) * std::pow(w, alpha_minus);
      acc += term;
    }
    return acc * vol * e;
  });

  out.rhs_time_derivative_term = integrate_in_time(traj, t_lo, eta.end(), [&](const SystemState& s) {
    const double de = eta.derivative(s.time);
    if (de == 0.0) return 0.0;
    double acc = 0.0;
    for (double v : s.n.values())
      if (v > k) acc += std::pow(v - k, e_sup);
    return acc * vol * de;
  });

  const double level_mass = integrate_in_time(traj, t_lo, eta.end(), [&](const SystemState& s) {
    const double e = eta.value(s.time);
    if (e == 0.0) return 0.0;
    double acc = 0.0;
    for (double v : s.n.values())
      if (v > k) acc += std::pow(v + 1.0, e_mass);
    return acc * vol * e;
  });
  out.rhs_gradc_term = std::pow(grad_c_sup, p / (p - 1.0)) * level_mass;

  out.rhs_source_term = integrate_in_time(traj, t_lo, eta.end(), [&](const SystemState& s) {
    const double e = eta.value(s.time);
    if (e == 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t c = 0; c < s.n.size(); ++c) {
      const double v = s.n[c];
      if (v <= k) continue;
      acc += model.source.value(v, s.w ? (*s.w)[c] : 0.0) * std::pow(v - k, 1.0 + alpha_minus);
    }
    return acc * vol * e;
  });
  return out;
}

std::vector<YRecord> compute_Yj(const Trajectory& traj, const LevelLadder& ladder, double r_exp) {
  require(r_exp > 0.0, "compute_Yj requires r > 0");
  std::vector<YRecord> out;
  for (int j = 0; 2 * j <= ladder.depth; ++j) {
    YRecord rec;
    rec.j = j;
    rec.level = ladder.levels[2 * j];
    rec.interval = ladder.intervals[2 * j];
    const double vol = traj.model.domain.cell_volume();
    const double integral = integrate_in_time(
        traj, rec.interval.begin, rec.interval.end,
        [&](const SystemState& s) {
          double acc = 0.0;
          for (double v : s.n.values())
            if (v > rec.level) acc += std::pow(v - rec.level, r_exp);
          return acc * vol;
        },
        &rec.covered_span);
    if (!(rec.covered_span > 0.0))
      throw PreconditionError("too few snapshots inside Gamma_" + std::to_string(2 * j));
    rec.value = integral / rec.covered_span;
    out.push_back(rec);
  }
  return out;
}

IterationResult iterate_lemma(double K, double b, double delta, double Y0, int j_max) {
  require(K > 1.0 && b > 1.0 && delta > 0.0, "iteration requires K > 1, b > 1, delta > 0");
  require(Y0 >= 0.0 && j_max >= 0, "iteration requires Y0 >= 0 and j_max >= 0");
  IterationResult res;
  const double lk = std::log(K), lb = std::log(b);
  res.log_threshold = -lk / delta - lb / (delta * delta);
  res.threshold = std::exp(res.log_threshold);

  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double y = Y0;
  double ly = Y0 > 0.0 ? std::log(Y0) : kNegInf;
  res.sequence.push_back(y);
  res.log_sequence.push_back(ly);
  bool decreasing = true;
  for (int j = 0; j < j_max; ++j) {
    y = K * std::pow(b, j) * std::pow(y, 1.0 + delta);
    const double next = ly == kNegInf ? kNegInf : lk + j * lb + (1.0 + delta) * ly;
    if (!(next < ly) && ly != kNegInf) decreasing = false;
    ly = next;
    res.sequence.push_back(y);
    res.log_sequence.push_back(ly);
  }
  const double floor = std::log(1e-30);
  if (res.log_sequence.back() < floor) {
    res.converged = true;
  } else if (decreasing && j_max >= 1) {
    // K Y0^delta b^(1/delta) <= 1, up to rounding in the logs
    const double ratio = lk + delta * res.log_sequence.front() + lb / delta;
    const double slack = 1e-12 * (std::abs(lk) + delta * std::abs(res.log_sequence.front()) + lb / delta);
    res.converged = ratio <= slack;
  }
  return res;
}

double embedding_ratio(const std::vector<TimeSlice>& phi, double p, double m) {
  require(p >= 1.0 && m >= 1.0, "embedding_ratio requires p, m >= 1");
  require(phi.size() >= 2, "embedding_ratio needs at least two time slices");
  const StructuredGrid& g = phi.front().field.grid();
  const double n_dim = g.dim();
  const double e_lhs = p * (n_dim + m) / n_dim;
  const double vol = g.cell_volume();
  double lhs = 0.0, energy = 0.0, sup_m = 0.0;
  double prev_l = 0.0, prev_e = 0.0, prev_t = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k) {
    const ScalarField& f = phi[k].field;
    require(f.grid() == g, "embedding_ratio slices live on different grids");
    const VectorField gr = gradient(f);
    double l = 0.0, e = 0.0, mm = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) {
      const double a = std::abs(f[c]);
      l += std::pow(a, e_lhs);
      e += std::pow(std::hypot(gr.component(0)[c], gr.component(1)[c]), p) + std::pow(a, p);
      mm += std::pow(a, m);
    }
    l *= vol;
    e *= vol;
    sup_m = std::max(sup_m, mm * vol);
    if (k > 0) {
      const double dt = phi[k].time - prev_t;
      require(dt > 0.0, "embedding_ratio slices must have increasing times");
      lhs += 0.5 * dt * (l + prev_l);
      energy += 0.5 * dt * (e + prev_e);
    }
    prev_l = l;
    prev_e = e;
    prev_t = phi[k].time;
  }
  const double denom = energy * std::pow(sup_m, p / n_dim);
  if (denom == 0.0) return 0.0;
  return lhs / denom;
}

double embedding_ratio(const Trajectory& traj, double p, double m) {
  std::vector<TimeSlice> slices;
  for (const auto& s : traj.states) slices.push_back({s.time, s.n});
  return embedding_ratio(slices, p, m);
}

nlohmann::json diagnostics_json(const Trajectory& traj, const LevelLadder& ladder, double r_exp,
                                double alpha_minus) {
  using nlohmann::json;
  json report;
  report["ladder"] = {{"k0", ladder.k0},       {"t0", ladder.t0},
                      {"t_hat", ladder.t_hat}, {"sigma", ladder.sigma},
                      {"tau_hat", ladder.tau_hat}, {"depth", ladder.depth},
                      {"levels", ladder.levels}, {"mid_levels", ladder.mid_levels}};
  report["outside_hypotheses"] = traj.model.domain.outside_hypotheses();
  report["r_exp"] = r_exp;

  const auto ys = compute_Yj(traj, ladder, r_exp);
  json levels = json::array();
  for (int j = 0; j <= ladder.depth; ++j) {
    const TimeInterval gam = ladder.intervals[j];
    const double mid = 0.5 * (gam.begin + gam.end);
    const SystemState* nearest = nullptr;
    for (const auto& s : traj.states)
      if (!nearest || std::abs(s.time - mid) < std::abs(nearest->time - mid)) nearest = &s;
    json rec = {{"j", j},
                {"k", ladder.levels[j]},
                {"interval", {gam.begin, gam.end}},
                {"interval_length", gam.length()},
                {"level_set_measure_at_midpoint", level_set_measure(nearest->n, ladder.levels[j])},
                {"midpoint_snapshot_time", nearest->time}};
    if (j % 2 == 0 && static_cast<std::size_t>(j / 2) < ys.size()) rec["Y"] = ys[j / 2].value;
    levels.push_back(rec);
  }
  report["levels"] = levels;

  json table = json::array();
  double c_cal = 0.0;
  for (int j = 0; j < ladder.depth; ++j) {
    const TimeCutoff eta = TimeCutoff::for_ladder(ladder, j);
    const double k = ladder.levels[j];
    if (!(k > 1.0)) continue;
    const CaccioppoliSides s = caccioppoli_sides(traj, k, eta, alpha_minus);
    const double ratio = s.rhs() > 0.0 ? s.lhs() / s.rhs() : 0.0;
    c_cal = std::max(c_cal, ratio);
    table.push_back({{"level", k},
                     {"eta", s.eta},
                     {"lhs_sup_term", s.lhs_sup_term},
                     {"lhs_gradient_term", s.lhs_gradient_term},
                     {"rhs_time_derivative_term", s.rhs_time_derivative_term},
                     {"rhs_gradc_term", s.rhs_gradc_term},
                     {"rhs_source_term", s.rhs_source_term},
                     {"lhs_over_rhs", ratio}});
  }
  report["caccioppoli"] = table;
  report["empirical_constants"] = {{"caccioppoli_C", c_cal}};
  return report;
}

}  // namespace kslab
