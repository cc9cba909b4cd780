#pragma once

// Level ladders, truncation energies and the quantities of the level-set
// iteration, all evaluated on stored trajectories.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "kslab/geometry.hpp"
#include "kslab/solver.hpp"

namespace kslab {

struct TimeInterval {
  double begin = 0.0;
  double end = 0.0;
  double length() const { return end - begin; }
  bool contains(const TimeInterval& other) const {
    return begin <= other.begin && other.end <= end;
  }
};

/// Levels k_j = (2 - 2^-j) k0 for j = 0..depth, midpoints between
/// consecutive levels, and nested intervals
/// (t0 - sigma tau - 2^-j (1 - sigma) tau, t0).
struct LevelLadder {
  double k0 = 1.0;
  double t0 = 1.0;
  double t_hat = 1.0;
  double sigma = 0.5;
  double tau_hat = 1.0;
  int depth = 1;
  std::vector<double> levels;
  std::vector<double> mid_levels;
  std::vector<TimeInterval> intervals;
};

/// tau_hat defaults to t_hat. Requires k0 >= kf, 0 < t_hat < t0,
/// sigma in (0, 1), depth >= 1 and tau_hat in (0, t_hat].
LevelLadder build_ladder(double k0, double t0, double t_hat, double sigma, int depth,
                         std::optional<double> tau_hat = std::nullopt, double kf = 1.0);

/// Smoothstep in time: 0 before `rise_begin`, 1 from `rise_end` to `end`.
class TimeCutoff {
 public:
  TimeCutoff(double rise_begin, double rise_end, double end);
  /// Cutoff that switches on across [start of Gamma_j, start of Gamma_{j+1}].
  static TimeCutoff for_ladder(const LevelLadder& ladder, int j);

  double value(double t) const;
  double derivative(double t) const;
  /// sup |eta'| = 3 / (2 (rise_end - rise_begin)).
  double max_slope() const;
  double rise_begin() const { return rise_begin_; }
  double rise_end() const { return rise_end_; }
  double end() const { return end_; }
  std::string describe() const;

 private:
  double rise_begin_, rise_end_, end_;
};

struct CaccioppoliSides {
  double lhs_sup_term = 0.0;
  double lhs_gradient_term = 0.0;
  double rhs_time_derivative_term = 0.0;
  double rhs_gradc_term = 0.0;
  double rhs_source_term = 0.0;
  double level = 0.0;
  std::string eta;

  double lhs() const { return lhs_sup_term + lhs_gradient_term; }
  /// The source term enters only through its positive part.
  double rhs() const;
};

/// Both sides of the truncated energy inequality at level k, with
/// space-midpoint and time-trapezoid quadrature over the snapshots covering
/// the support of eta. Requires k > 1 and at least 8 snapshots in the
/// support.
CaccioppoliSides caccioppoli_sides(const Trajectory& traj, double k, const TimeCutoff& eta,
                                   double alpha_minus);

struct YRecord {
  int j = 0;
  double level = 0.0;           // k_{2j}
  TimeInterval interval;        // Gamma_{2j}
  double covered_span = 0.0;    // time span of the snapshots used
  double value = 0.0;           // Y_j
};

/// Y_j = time mean over Gamma_{2j} of the integral of (n - k_{2j})_+^r, for
/// every j with 2j <= depth.
std::vector<YRecord> compute_Yj(const Trajectory& traj, const LevelLadder& ladder, double r_exp);

struct IterationResult {
  std::vector<double> sequence;      // Y_j; may underflow to 0 or overflow to inf
  std::vector<double> log_sequence;  // ln Y_j
  bool converged = false;
  double threshold = 0.0;            // K^(-1/delta) b^(-1/delta^2)
  double log_threshold = 0.0;
};

/// Iterates Y_{j+1} = K b^j Y_j^(1+delta) with equality. Convergence is
/// declared when Y drops below 1e-30 or when the sequence decreases strictly
/// and K Y_0^delta b^(1/delta) <= 1, which makes Y_j <= Y_0 b^(-j/delta)
/// hold for every j by induction.
IterationResult iterate_lemma(double K, double b, double delta, double Y0, int j_max);

struct TimeSlice {
  double time;
  ScalarField field;
};

/// Empirical constant of the parabolic embedding: integral of
/// |phi|^(p(N+m)/N) over the slab divided by
/// (integral of |grad phi|^p + |phi|^p) * (sup_t integral of |phi|^m)^(p/N).
double embedding_ratio(const std::vector<TimeSlice>& phi, double p, double m);
double embedding_ratio(const Trajectory& traj, double p, double m);

/// Diagnostics report for a ladder on a trajectory.
nlohmann::json diagnostics_json(const Trajectory& traj, const LevelLadder& ladder, double r_exp,
                                double alpha_minus);

}  // namespace kslab
