#pragma once

// Nonlinearity catalog (diffusion a, sensitivity b, source f, production g),
// structural-hypothesis checks, the K_f level and the example presets.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kslab/geometry.hpp"

namespace kslab {

enum class DiffusionKind { power, p_laplacian, product };

/// a(xi, s) = a0 (s + 1)^alpha |xi|^(p - 2). `power` is the volume-filling
/// case p = 2; `p_laplacian` fixes a0 = 1, alpha = 0.
struct DiffusionSpec {
  DiffusionKind kind = DiffusionKind::power;
  double a0 = 1.0;
  double alpha = 0.0;
  double p = 2.0;
  // Hoelder-structure metadata, only consulted by regularity preconditions.
  std::optional<double> holder_constant;
  std::optional<double> holder_omega;

  static DiffusionSpec power(double a0, double alpha);
  static DiffusionSpec p_laplacian(double p);
  static DiffusionSpec product(double a0, double alpha, double p);

  void validate() const;
  /// Regularized coefficient a0 (s+1)^alpha (|xi|^2 + eps^2)^((p-2)/2).
  double coefficient(double s, double grad_mag, double eps) const;
  /// The hypothesis lower bound a0 (s+1)^alpha |xi|^(p-2).
  double lower_bound(double s, double grad_mag) const;
  double alpha_minus() const { return alpha < 0.0 ? -alpha : 0.0; }
};

enum class SensitivityForm { prototype, linear, zero };

struct SensitivitySpec {
  SensitivityForm form = SensitivityForm::linear;
  double b0 = 1.0;    // prototype amplitude
  double beta = 1.0;  // prototype exponent
  double chi = 1.0;   // linear coefficient
  /// Constant added to b. Nonzero values violate b(0) = 0; kept so the
  /// structural checker can be exercised on counterexamples.
  double offset = 0.0;
  std::optional<double> holder_constant;
  std::optional<double> holder_omega;

  static SensitivitySpec prototype(double b0, double beta);
  static SensitivitySpec linear(double chi);
  static SensitivitySpec none();

  double value(double s) const;
  /// b(s)/s, with the limit b'(0) at s = 0. Used for upwind Courant bounds.
  double ratio(double s) const;
  /// Constants (b0, beta) for which b(s) <= b0 (s+1)^beta.
  double bound_b0() const;
  double bound_beta() const;
};

enum class SourceForm { logistic, zero };

/// f(s) = r s - mu s^(1+gamma) - w_coupling s w. The last term only appears
/// in the haptotaxis example, where w is the second (ECM) density.
struct SourceSpec {
  SourceForm form = SourceForm::zero;
  double r = 0.0;
  double mu = 0.0;
  double gamma_exp = 1.0;
  double w_coupling = 0.0;

  static SourceSpec logistic(double r, double mu, double gamma_exp);
  static SourceSpec zero();

  double value(double s, double w = 0.0) const;
  double derivative(double s, double w = 0.0) const;
};

enum class ProductionForm { power, linear, consumption, none };

struct ProductionSpec {
  ProductionForm form = ProductionForm::linear;
  double sigma = 1.0;

  static ProductionSpec power(double sigma);
  static ProductionSpec linear();
  static ProductionSpec consumption();
  static ProductionSpec none();

  /// Production term g(s) entering c_t = Lap c - c + g. For the consumption
  /// form the full reaction is c - s c, which is what this returns.
  double value(double s, double c = 0.0) const;
};

enum class AdvectionKind { none, zero, cosine_vortex };

struct AdvectionSpec {
  AdvectionKind kind = AdvectionKind::none;
  double amplitude = 0.0;
};

struct HaptotaxisSpec {
  bool enabled = false;
  double xi = 0.0;
};

/// The structural data tuple (p, alpha, beta, a0, b0, N, Omega) that the
/// bound constants are allowed to depend on.
struct DataTuple {
  double p = 2.0;
  double alpha = 0.0;
  double beta = 0.0;
  double a0 = 1.0;
  double b0 = 0.0;
  int dim = 2;
  double extent_x = 1.0;
  double extent_y = 1.0;

  bool operator==(const DataTuple&) const = default;
  std::string to_string() const;
};

struct ModelSpec {
  std::string name = "general";
  DiffusionSpec diffusion;
  SensitivitySpec sensitivity;
  SourceSpec source;
  ProductionSpec production;
  int tau = 0;
  AdvectionSpec advection;
  HaptotaxisSpec haptotaxis;
  StructuredGrid domain{1.0, 1.0, 32, 32};
  std::vector<std::string> notes;

  /// Throws PreconditionError when the wiring is inconsistent.
  void validate() const;
  DataTuple data_tuple() const;
  /// Velocity field realized on the model domain (zero when tau = 0).
  VectorField velocity() const;
};

/// Smallest admissible K_f > 1 with f(s) <= 0 for all s >= K_f.
/// Throws PreconditionError when f does not become nonpositive.
double compute_kf(const SourceSpec& source, double margin = 1e-9);

struct HypothesisCheck {
  std::string name;
  bool passed = true;
  std::optional<double> witness;
  std::string detail;
};

struct CheckReport {
  std::vector<HypothesisCheck> checks;
  std::vector<std::string> warnings;
  double horizon = 0.0;
  bool outside_hypotheses = false;

  bool all_passed() const;
  const HypothesisCheck* find(std::string_view name) const;
};

/// Sample-based verification of the structural hypotheses on a geometric
/// ladder of states s in [0, horizon].
CheckReport structural_check(const ModelSpec& model, int sample_count = 64,
                             double horizon = 1e6, double eps_reg = 1e-6);

/// Threshold on p above which the haptotaxis example is known to have
/// bounded Hoelder solutions; +inf-safe for N <= 2.
double haptotaxis_p_threshold(int dim);

/// Fully wired example systems: example_a, example_b, example_c, example_d,
/// general. Throws PreconditionError on unknown names.
ModelSpec preset(std::string_view name, const StructuredGrid& grid);

std::string to_string(DiffusionKind kind);
std::string to_string(SensitivityForm form);
std::string to_string(SourceForm form);
std::string to_string(ProductionForm form);
std::string to_string(AdvectionKind kind);

}  // namespace kslab
