#pragma once

// Exponent bookkeeping, regime classification, evaluation and calibration
// of the local sup bounds, the long-time bound check and the heat semigroup
// decay check.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kslab/geometry.hpp"
#include "kslab/model.hpp"
#include "kslab/solver.hpp"

namespace kslab {

enum class Regime { theorem1, theorem2, borderline };
std::string to_string(Regime regime);

struct ExponentSet {
  double p = 2.0;
  int dim = 2;
  double alpha = 0.0;
  double beta = 0.0;
  double alpha_minus = 0.0;
  /// p(N + 2 + alpha_-)/N, the integrability exponent of the first bound.
  double critical_exponent = 0.0;
  /// max{p(beta + alpha_-)/(p - 1), 2 + alpha_-}, compared with the
  /// critical exponent to pick the regime.
  double classifier_max = 0.0;
  /// Bracket with the factor N on the sensitivity term.
  double bracket_scaled = 0.0;
  /// Same bracket without the factor N.
  double bracket_plain = 0.0;
  double kappa = kInfinity;      // from bracket_scaled; infinite when it is <= 0
  double kappa_hat = kInfinity;
  double kappa_plain = kInfinity;
  double kappa_hat_plain = kInfinity;
  double theta_hat = 0.0;        // = bracket_scaled
  Regime regime = Regime::borderline;
  /// The classifier and the bracket disagree about the first regime.
  bool readings_disagree = false;
  double r_min_theorem2 = 0.0;
  /// Smallest r making the second-regime correction m lie below one.
  double r_min_m_condition = 0.0;
  double r_min_theorem4 = 0.0;

  bool kappa_finite() const { return theta_hat > 0.0; }
};

/// Requires p > 1 and N in {1, 2}.
ExponentSet exponents(double p, int dim, double alpha, double beta);
ExponentSet exponents(const ModelSpec& model);

/// Exponents actually entering a bound evaluation.
struct BoundExponents {
  Regime regime = Regime::theorem1;
  double r_exp = 0.0;
  double kappa = 0.0;
  double kappa_hat = 0.0;
  double theta_hat = 0.0;
  double m = 0.0;  // second regime only
  std::string reading;
};

/// First-regime exponents. The bracket with the factor N is used when it is
/// positive; a borderline set falls back to the bracket without it.
/// Throws PreconditionError in the second regime or when neither bracket is
/// positive.
BoundExponents theorem1_exponents(const ExponentSet& e);
/// Second-regime exponents at integrability r: theta = r - classifier_max,
/// m = (N r - p(N + 2 + alpha_-)) / (theta (p + N)) and effective exponents
/// divided by 1 - m. Requires the second regime, r > r_min_theorem2 and
/// m in (0, 1).
BoundExponents theorem2_exponents(const ExponentSet& e, double r_exp);

struct BoundInputs {
  double b_frak = 1.0;
  double t_hat = 1.0;
  double mean_integral = 0.0;
  double kf = 1.0;
  int dim = 2;
  double p = 2.0;
};

/// C b^kappa (t_hat + t_hat^(-N/p))^kappa_hat mean^kappa_hat, without K_f.
double bound_excess(const BoundExponents& x, const BoundInputs& in, double C);
double bound_value(const BoundExponents& x, const BoundInputs& in, double C);
double theorem1_bound(const ExponentSet& e, const BoundInputs& in, double C);
double theorem2_bound(const ExponentSet& e, const BoundInputs& in, double r_exp, double C);

/// Minimizer (N/p)^(p/(p+N)) of t + t^(-N/p).
double optimal_t_hat(int dim, double p);

/// max{sup of |grad c| over snapshots in [t0 - t_hat, t0], 1}. Throws when
/// the window holds no snapshot.
double grad_c_sup(const Trajectory& traj, double t0, double t_hat);

/// Everything a certificate needs from one trajectory and window.
struct ScenarioMeasurement {
  std::string id;
  DataTuple data;
  double t0 = 0.0;
  double t_hat = 0.0;
  double r_exp = 0.0;
  double b_frak = 1.0;
  double mean_integral = 0.0;  // time mean over (t0 - t_hat, t0) of the integral of n^r
  double measured_sup = 0.0;   // max n over accepted steps in [t0 - t_hat/2, t0]
  double kf = 1.0;

  BoundInputs inputs() const;
};

ScenarioMeasurement measure_scenario(const std::string& id, const Trajectory& traj, double t0,
                                     double t_hat, double r_exp);

/// Smallest C with measured_sup <= bound on every scenario, clamped to at
/// least machine epsilon. Throws on an empty list, on mixed data tuples and
/// when a scenario exceeds K_f with a vanishing bound excess.
double calibrate_C(const BoundExponents& x, const std::vector<ScenarioMeasurement>& scenarios);

struct BoundCertificate {
  std::string scenario;
  double b_frak = 1.0;
  double t_hat = 0.0;
  double mean_integral = 0.0;
  double kf = 1.0;
  ExponentSet exponents;
  BoundExponents used;
  double C_calibrated = 0.0;
  double bound_value = 0.0;
  double measured_sup = 0.0;
  double margin = 0.0;
};

BoundCertificate certify_scenario(const ExponentSet& e, const BoundExponents& x,
                                  const ScenarioMeasurement& s, double C);

nlohmann::json to_json(const ExponentSet& e);
nlohmann::json to_json(const BoundExponents& x);
nlohmann::json to_json(const BoundCertificate& c);
nlohmann::json to_json(const DataTuple& d);

/// Calibration/holdout report. A report without holdout scenarios is marked
/// calibration-only.
nlohmann::json certification_json(const ExponentSet& e, const BoundExponents& x, double C,
                                  const std::vector<BoundCertificate>& calibration,
                                  const std::vector<BoundCertificate>& holdout);
/// One row per scenario: data tuple, b, t_hat, mean integral, bound,
/// measured sup, margin and the split it belongs to.
void write_certificate_csv(const std::filesystem::path& path,
                           const std::vector<BoundCertificate>& calibration,
                           const std::vector<BoundCertificate>& holdout);

// Long-time bound --------------------------------------------------------------

struct Theorem4Report {
  bool applicable = false;
  std::string reason;
  double t_bar = 0.0;      // first snapshot time from which the hypotheses hold
  double K = 0.0;
  double kappa = 0.0;
  double kf = 1.0;
  double tail_sup = 0.0;
  double lambda_min = 0.0;  // smallest Lambda making the bound hold on the tail
  double lambda = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  bool passed = false;
};

/// Checks ||n||_r <= K, ||g(n, c)||_m <= K and ||u||_inf < K on every
/// snapshot after some T >= t_bar0, then compares the tail sup of n with
/// Lambda (K + 1)^kappa + K_f. Lambda defaults to the smallest admissible
/// value. Requires m > N and r > r_min_theorem4.
Theorem4Report theorem4_check(const Trajectory& traj, double K, double r_exp, double m_exp,
                              double t_bar0, double kappa, std::optional<double> lambda = {});
nlohmann::json to_json(const Theorem4Report& r);

// Heat semigroup ----------------------------------------------------------------

struct HeatDecayReport {
  double lambda2 = 0.0;          // min over axes of (pi / L)^2
  double fitted_rate = 0.0;
  double rate_relative_error = 0.0;
  double r_squared = 0.0;
  double envelope_exponent = 0.0;  // N/2 (1/l - 1/q)
  double prefactor = 0.0;          // sup of ratio / envelope over the sample times
  std::size_t checked_steps = 0;   // intermediate steps the envelope is checked on
  std::size_t envelope_violations = 0;
  bool envelope_respected = false;
  std::vector<double> times;
  std::vector<double> deviation_norms;  // ||e^{t Delta} phi0 - mean||_q
  std::vector<double> smoothing_ratios;  // deviation norm / ||phi0 - mean||_l
};

/// Evolves phi0 under the discrete Neumann heat semigroup (implicit Euler,
/// fixed dt) and fits the decay of the deviation from the mean. The
/// smoothing prefactor is calibrated on the sample times and then checked on
/// every intermediate step between the first and last sample.
/// Requires 1 <= l <= q <= inf and positive increasing times.
HeatDecayReport heat_decay_check(const ScalarField& phi0, double q, double l,
                                 const std::vector<double>& times, double dt = 1e-3);
nlohmann::json to_json(const HeatDecayReport& r);

}  // namespace kslab
