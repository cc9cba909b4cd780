#pragma once

// Long-time behaviour: equilibria, mass series, the logarithmic Lyapunov
// functional, exponential rate fits, empirical Hoelder exponents and the
// small-mass threshold probe.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kslab/geometry.hpp"
#include "kslab/model.hpp"
#include "kslab/solver.hpp"

namespace kslab {

struct EquilibriumSpec {
  std::string model;
  double n_star = 0.0;
  double c_star = 0.0;
  bool u_zero = true;
  double mass = 0.0;              // spatial mean of n0, example_a only
  std::optional<double> chi;      // (r/mu)^(1/gamma), example_b only
};

/// example_a: (M, M^sigma). example_b: (chi, chi, 0) with
/// chi = (r/mu)^(1/gamma). Other models throw PreconditionError.
EquilibriumSpec equilibrium(const ModelSpec& model, double mass);

struct MassReport {
  std::vector<double> times;
  std::vector<double> masses;
  std::string verdict;  // "conservation", "logistic" or "unchecked"
  double max_relative_drift = 0.0;
  bool odi_holds = true;
  int odi_violations = 0;
  double tail_start = 0.0;
  double tail_max = 0.0;
  double tail_bound = 0.0;  // |Omega| (r/mu)^(1/gamma) (1 + headroom)
  bool passed = true;
};

/// Mass of n on every series row. A zero source must conserve it to 1e-10
/// relative; a logistic source must satisfy the Bernoulli inequality
/// m' <= r m - mu |Omega|^(-gamma) m^(1+gamma) step by step (up to the
/// scheme's first-order consistency error) and stay below
/// |Omega| (r/mu)^(1/gamma) (1 + headroom) on the last third of the run.
MassReport mass_series(const Trajectory& traj, double headroom = 0.05);

struct LyapunovValue {
  double value = 0.0;
  std::size_t floor_cells = 0;  // cells at or below the floor, left out
  bool unreliable = false;      // more than 0.1% of the cells left out
};

/// Quadrature of H(s) = s - chi - chi ln(s / chi) over cells with s > floor.
LyapunovValue lyapunov_H(const ScalarField& n, double chi, double floor = 0.0);

struct LyapunovSample {
  double t = 0.0;
  LyapunovValue h;
};

/// Observer recording the functional on every recorded step.
StepObserver lyapunov_observer(double chi, std::vector<LyapunovSample>& out);

struct DescentReport {
  double transient_end = 0.0;
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double violations_per_1000 = 0.0;
  bool nonincreasing = false;  // at most one violation per 1000 pairs
};

/// Counts consecutive pairs after `transient_end` where the functional grows
/// by more than `rel_tol` relative plus `abs_tol`.
DescentReport lyapunov_descent(const std::vector<LyapunovSample>& series, double transient_end,
                               double rel_tol = 1e-10, double abs_tol = 1e-14);

struct RateFit {
  double t_a = 0.0;
  double t_b = 0.0;
  double fitted_rate = 0.0;
  double amplitude = 0.0;
  double r_squared = 0.0;
  std::size_t samples = 0;
};

/// Least squares line through (t, ln v) on the samples with t in
/// [t_a, t_b]. The window ends at the first value at or below `floor`.
/// Throws PreconditionError with fewer than 4 usable samples.
RateFit fit_exponential_rate(const std::vector<double>& t, const std::vector<double>& v,
                             double t_a, double t_b, double floor = 1e-12);

/// Window used for rate fits: the last third of [0, t_b], starting no
/// earlier than five diffusion times 5 / lambda_2 unless that exceeds t_b / 2.
/// t_b is the last sample before the deviation first drops to `floor`, so the
/// fit never sees round-off.
std::pair<double, double> resolved_late_window(const StructuredGrid& grid,
                                               const std::vector<double>& t,
                                               const std::vector<double>& deviation, double floor);

struct HolderReport {
  double gamma_space = 0.0;
  double gamma_time = 0.0;
  double consistency = 0.0;  // |gamma_time - gamma_space / p|
  double p = 2.0;
  std::vector<double> space_scales;
  std::vector<double> space_increments;
  std::vector<double> time_scales;
  std::vector<double> time_increments;
};

/// Slope of log(max increment at distance h) against log h, over cell
/// offsets `scales` along both axes, maximized over the fields. Requires at
/// least 3 scales of at least 2 cells. Saturates at 1 for Lipschitz data; a
/// field with no increment at all counts as Lipschitz.
double spatial_holder_exponent(const std::vector<const ScalarField*>& fields,
                               const std::vector<int>& scales,
                               std::vector<double>* increments = nullptr);

/// Space exponent from the snapshots in [t_a, t_b], time exponent from
/// snapshot gaps of `time_scales` indices.
HolderReport holder_exponent(const Trajectory& traj, double t_a, double t_b,
                             const std::vector<int>& space_scales,
                             const std::vector<int>& time_scales);

struct ProbeEntry {
  double mass = 0.0;
  bool converged = false;
  double final_deviation = 0.0;
  std::optional<RateFit> fit;
  std::string status;
};

struct ThresholdBracket {
  std::optional<double> largest_converged;
  std::optional<double> smallest_failed;  // empty: bracket open on the right
  bool degenerate = false;                // a single mass was tested
  std::vector<ProbeEntry> entries;
};

struct ProbeSettings {
  int cells = 32;
  double t_end = 20.0;
  double tolerance = 1e-3;  // on ||n - M||_inf at t_end
  int jobs = 1;
};

/// Runs example_a with production exponent sigma from a bump of each mean
/// mass and brackets the largest mass with verified exponential
/// convergence. Requires sigma in (0, 2/N) and a strictly increasing grid.
ThresholdBracket smallness_threshold_probe(double sigma, const std::vector<double>& masses,
                                           const ProbeSettings& settings = {});

// Reports --------------------------------------------------------------------

nlohmann::json to_json(const EquilibriumSpec& e);
nlohmann::json to_json(const MassReport& m);
nlohmann::json to_json(const RateFit& f);
nlohmann::json to_json(const HolderReport& h);
nlohmann::json to_json(const DescentReport& d);
nlohmann::json to_json(const ThresholdBracket& b);

struct StabilityAnalysis {
  std::optional<EquilibriumSpec> equilibrium;
  MassReport mass;
  std::optional<RateFit> n_fit;
  std::optional<RateFit> c_fit;
  double final_n_deviation = 0.0;
  double final_c_deviation = 0.0;
  std::vector<LyapunovSample> lyapunov;
  std::optional<DescentReport> descent;
};

/// Equilibrium, mass report and late-window rate fits of ||n - n*||_inf and
/// ||c - c*||_inf built from the series; `lyapunov` is attached as recorded.
StabilityAnalysis analyze_stability(const Trajectory& traj, double mass,
                                    std::vector<LyapunovSample> lyapunov = {});
nlohmann::json to_json(const StabilityAnalysis& a);
/// t, mass, n deviation, c deviation and H (blank when not recorded).
void write_stability_csv(const std::filesystem::path& path, const Trajectory& traj,
                         const StabilityAnalysis& a);

}  // namespace kslab
