#pragma once

// Semi-implicit splitting integrator: implicit signal update, explicit
// upwind transport with lagged implicit diffusion for the density, a
// per-cell Newton step for the source and an exact exponential step for the
// haptotactic matrix.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kslab/geometry.hpp"
#include "kslab/model.hpp"

namespace kslab {

enum class DtPolicy { fixed, cfl_adaptive };

struct SolverConfig {
  double dt_initial = 1e-3;  // also the upper cap on dt for cfl_adaptive
  DtPolicy dt_policy = DtPolicy::cfl_adaptive;
  double cfl_safety = 0.4;
  double t_end = 1.0;
  double snapshot_interval = 0.1;
  double positivity_floor = 0.0;
  double implicit_tolerance = 1e-10;
  int implicit_max_iters = 5000;
  int picard_sweeps = 1;
  double eps_reg = 1e-6;
  double blowup_ceiling = 1e12;
  double dt_min = 1e-12;
  int max_rejections = 20;
  /// Final max |dn/dt| and |dc/dt| below this marks the run as converged.
  double steady_tolerance = 1e-8;

  void validate() const;
};

struct SystemState {
  double time = 0.0;
  ScalarField n;
  ScalarField c;
  std::optional<ScalarField> w;
  VectorField u;

  SystemState(double time, ScalarField n, ScalarField c, std::optional<ScalarField> w,
              VectorField u);

  /// n, c >= 0 and finite; w in [0, w_cap] when present.
  void check_invariants(double w_cap = kInfinity) const;
};

struct SeriesRecord {
  double t = 0.0;
  double dt = 0.0;
  double mass_n = 0.0;
  double linf_n = 0.0;
  double l2_n = 0.0;
  double linf_c = 0.0;
  double sup_grad_c = 0.0;
  double min_n = 0.0;
  double clamp_mag = 0.0;
  double min_c = 0.0;
  double max_w = 0.0;
};

SeriesRecord measure(const SystemState& s, double dt, double clamp_mag);

enum class RunStatus { completed, converged, blowup_suspected };
std::string to_string(RunStatus status);

struct Trajectory {
  ModelSpec model;
  std::vector<SystemState> states;
  std::vector<SeriesRecord> series;
  RunStatus status = RunStatus::completed;
  int rejected_steps = 0;
  std::size_t accepted_steps = 0;

  /// Snapshots whose time lies in [a, b].
  std::vector<const SystemState*> window(double a, double b) const;
};

/// Trapezoid rule over the snapshots with time in [a, b]. `span` receives
/// the time span those snapshots cover.
double integrate_in_time(const Trajectory& traj, double a, double b,
                         const std::function<double(const SystemState&)>& integrand,
                         double* span = nullptr);

struct StepOutcome {
  SystemState state;
  double dt_used = 0.0;
  int rejections = 0;
  double clamp_mag = 0.0;
};

/// Advances by dt, halving dt on rejection (implicit solve failure,
/// Courant number above one, non-positive Newton denominator or
/// non-finite values). Throws SolverError after max_rejections halvings.
StepOutcome step(const SystemState& state, const ModelSpec& model, const SolverConfig& config,
                 double dt);

/// Largest dt allowed by the explicit transport and reaction terms.
double stable_dt(const SystemState& state, const ModelSpec& model, const SolverConfig& config);

using StepObserver = std::function<void(const SystemState&, const SeriesRecord&)>;

Trajectory run(const ModelSpec& model, const SystemState& initial, const SolverConfig& config,
               const StepObserver& observer = {});

/// Smooth test function phi(x, y, t) with analytic derivatives, supported in
/// time on [t_begin, t_end].
struct TestFunction {
  std::function<double(double, double, double)> value;
  std::function<double(double, double, double)> time_derivative;
  std::function<std::array<double, 2>(double, double, double)> gradient;
  double t_begin = 0.0;
  double t_end = 0.0;

  /// sin^2 time bump times cos(kx pi x/Lx) cos(ky pi y/Ly).
  static TestFunction cosine_bump(double t_begin, double t_end, int kx, int ky, double lx,
                                  double ly);
  static TestFunction zero(double t_begin, double t_end);
};

/// Relative residual of the weak form of the density equation, assembled
/// from the stored snapshots by midpoint quadrature in space and trapezoid
/// weights in time.
double weak_residual(const Trajectory& traj, const TestFunction& phi, double eps_reg = 1e-6);

// Initial data --------------------------------------------------------------

enum class InitialKind { constant, bump, perturbed, cosine };

struct InitialSpec {
  InitialKind kind = InitialKind::bump;
  double base = 0.0;
  double amplitude = 1.0;
  double width = 0.1;
  std::array<double, 2> center{0.5, 0.5};
  /// When set, n is rescaled to this spatial mean.
  std::optional<double> mean;
  int modes = 4;  // perturbed: number of random cosine modes
  enum class Signal { equilibrium, constant } signal = Signal::equilibrium;
  double c_value = 0.0;
  double w_value = 1.0;
};

/// Builds (n, c, w, u) on the model domain. The seed drives the perturbed
/// kind only.
SystemState make_initial_state(const ModelSpec& model, const InitialSpec& init,
                               std::uint64_t seed);

// Output ----------------------------------------------------------------------

void write_series_csv(const std::filesystem::path& path, const std::vector<SeriesRecord>& series);

/// Snapshot files n_XXXX.txt, c_XXXX.txt, w_XXXX.txt plus an index file.
/// Returns the written paths.
std::vector<std::filesystem::path> save_snapshots(const std::filesystem::path& dir,
                                                  const Trajectory& traj);
/// Reads snapshots written by save_snapshots; the model is supplied by the
/// caller, u is regenerated from it.
Trajectory load_snapshots(const std::filesystem::path& dir, const ModelSpec& model);

}  // namespace kslab
