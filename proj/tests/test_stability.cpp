#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kslab/error.hpp"
#include "kslab/stability.hpp"
#include "test_support.hpp"

using namespace kslab;
using testing::synthetic;

namespace {

SolverConfig config(double t_end, double interval) {
  SolverConfig cfg;
  cfg.t_end = t_end;
  cfg.snapshot_interval = interval;
  cfg.dt_initial = 0.01;
  return cfg;
}

SystemState bump(const ModelSpec& m, double amplitude, std::optional<double> mean = {}) {
  InitialSpec init;
  init.kind = InitialKind::bump;
  init.base = 0.05;
  init.amplitude = amplitude;
  init.width = 0.15;
  init.center = {0.4, 0.6};
  init.mean = mean;
  return make_initial_state(m, init, 1);
}

}  // namespace

TEST_CASE("closed-form equilibria") {
  const StructuredGrid g(1.0, 1.0, 8, 8);
  ModelSpec a = preset("example_a", g);
  auto e = equilibrium(a, 0.04);
  CHECK(e.n_star == doctest::Approx(0.04));
  CHECK(e.c_star == doctest::Approx(0.2));
  e = equilibrium(a, 1.0);
  CHECK(e.n_star == 1.0);
  CHECK(e.c_star == 1.0);

  ModelSpec b = preset("example_b", g);
  b.source = SourceSpec::logistic(4.0, 1.0, 2.0);
  e = equilibrium(b, 0.3);
  CHECK(e.n_star == doctest::Approx(2.0));
  CHECK(e.c_star == doctest::Approx(2.0));
  CHECK(e.u_zero);
  CHECK(*e.chi == doctest::Approx(2.0));

  CHECK_THROWS_AS(equilibrium(preset("example_c", g), 1.0), PreconditionError);
}

TEST_CASE("mass series") {
  const StructuredGrid g(1.0, 1.0, 16, 16);
  SUBCASE("conservation without a source") {
    const ModelSpec m = preset("example_a", g);
    const auto rep = mass_series(run(m, bump(m, 1.0), config(1.0, 0.5)));
    CHECK(rep.verdict == "conservation");
    CHECK(rep.max_relative_drift <= 1e-10);
    CHECK(rep.passed);
  }
  SUBCASE("logistic tail") {
    const ModelSpec m = preset("example_b", g);
    const auto rep = mass_series(run(m, bump(m, 3.0), config(6.0, 1.0)));
    CHECK(rep.verdict == "logistic");
    CHECK(rep.odi_holds);
    CHECK(rep.tail_bound == doctest::Approx(0.25 * 1.05));
    CHECK(rep.tail_max <= rep.tail_bound);
    CHECK(rep.passed);
  }
  SUBCASE("zero data") {
    const ModelSpec m = preset("example_b", g);
    const Trajectory traj = synthetic(m, 5, 1.0, [&](double) { return ScalarField(g); });
    for (double v : mass_series(traj).masses) CHECK(v == 0.0);
  }
}

TEST_CASE("Lyapunov functional") {
  const StructuredGrid g(1.0, 1.0, 16, 16);
  const double chi = 0.25;
  CHECK(lyapunov_H(ScalarField(g, chi), chi).value == doctest::Approx(0.0).epsilon(1e-15));
  for (std::uint64_t seed = 1; seed < 20; ++seed)
    CHECK(lyapunov_H(testing::random_field(g, seed, 1e-3, 3.0), chi).value >= 0.0);

  const double eps = 1e-3;
  const ScalarField near(g, chi * (1 + eps));
  const double quad = (chi * eps) * (chi * eps);
  CHECK(lyapunov_H(near, chi).value / quad == doctest::Approx(1.0 / (2 * chi)).epsilon(0.01));

  ScalarField holes(g, 1.0);
  holes[0] = 0.0;
  const auto v = lyapunov_H(holes, chi);
  CHECK(v.floor_cells == 1);
  CHECK(v.unreliable);  // 1 of 256 cells is above 0.1%
  CHECK_THROWS_AS(lyapunov_H(holes, 0.0), PreconditionError);

  std::vector<LyapunovSample> s;
  for (int k = 0; k < 2000; ++k) s.push_back({0.01 * k, {std::exp(-0.01 * k), 0, false}});
  s[1500].h.value *= 1.1;
  const auto d = lyapunov_descent(s, 1.0);
  CHECK(d.violations == 1);
  CHECK(d.nonincreasing);
  CHECK(lyapunov_descent(s, 0.0).pairs == 1999);
}

TEST_CASE("exponential rate fit") {
  std::vector<double> t, v;
  for (int k = 0; k < 10; ++k) {
    t.push_back(0.3 * k);
    v.push_back(std::exp(-2.0 * t.back()));
  }
  auto f = fit_exponential_rate(t, v, 0.0, 3.0);
  CHECK(f.fitted_rate == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(f.r_squared >= 0.999999);
  CHECK(f.amplitude == doctest::Approx(1.0));

  std::vector<double> flat(t.size(), 0.7);
  CHECK(fit_exponential_rate(t, flat, 0.0, 3.0).fitted_rate == doctest::Approx(0.0));

  std::vector<double> tt, two;
  for (int k = 0; k <= 400; ++k) {
    tt.push_back(0.05 * k);
    two.push_back(std::exp(-tt.back()) + std::exp(-5.0 * tt.back()));
  }
  double prev_err = kInfinity;
  for (double start : {0.0, 1.0, 2.0, 4.0}) {
    const double err = std::abs(fit_exponential_rate(tt, two, start, start + 3.0).fitted_rate - 1.0);
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err < 1e-4);

  CHECK_THROWS_AS(fit_exponential_rate({0, 1, 2}, {1, 0.5, 0.25}, 0.0, 2.0), PreconditionError);
  // the floor truncates the window
  std::vector<double> cut = v;
  cut[4] = 0.0;
  CHECK(fit_exponential_rate(t, cut, 0.0, 3.0).samples == 4);
}

TEST_CASE("resolved late window") {
  const StructuredGrid g(1.0, 1.0, 8, 8);
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    v.push_back(std::exp(-t.back()));
  }
  auto [a, b] = resolved_late_window(g, t, v, 1e-3);
  CHECK(b == doctest::Approx(6.9));
  CHECK(a == doctest::Approx(4.6));
  // a late diffusion time is capped at half the resolved span
  const StructuredGrid wide(10.0, 10.0, 8, 8);
  std::tie(a, b) = resolved_late_window(wide, t, v, 1e-3);
  CHECK(a == doctest::Approx(4.6));
  std::tie(a, b) = resolved_late_window(wide, t, v, 0.0);
  CHECK(b == 10.0);
  CHECK(a == doctest::Approx(20.0 / 3.0));
  CHECK_THROWS_AS(resolved_late_window(g, {}, {}, 0.0), PreconditionError);
}

TEST_CASE("Hoelder estimator") {
  const StructuredGrid g(1.0, 1.0, 129, 9);
  for (double gamma : {0.3, 0.5, 0.7}) {
    const ScalarField cusp = ScalarField::sample(
        g, [&](double x, double) { return std::pow(std::abs(x - 0.5), gamma); });
    CHECK(std::abs(spatial_holder_exponent({&cusp}, {2, 4, 8, 16}) - gamma) <= 0.05);
  }
  const ScalarField smooth =
      ScalarField::sample(g, [](double x, double y) { return std::sin(x) + 0.1 * y; });
  CHECK(spatial_holder_exponent({&smooth}, {2, 4, 8}) >= 0.99);
  CHECK_THROWS_AS(spatial_holder_exponent({&smooth}, {2, 4}), PreconditionError);
  CHECK_THROWS_AS(spatial_holder_exponent({&smooth}, {1, 2, 4}), PreconditionError);

  const StructuredGrid sq(1.0, 1.0, 33, 33);
  ModelSpec m = preset("example_c", sq);
  const Trajectory traj = synthetic(m, 32, 1.0, [&](double t) {
    return ScalarField::sample(sq, [&](double x, double) { return (1 + t) * x; });
  });
  const auto rep = holder_exponent(traj, 0.0, 1.0, {2, 4, 8}, {1, 2, 4});
  CHECK(rep.gamma_space == doctest::Approx(1.0));
  CHECK(rep.gamma_time == doctest::Approx(1.0));
  CHECK(rep.consistency == doctest::Approx(1.0 - 1.0 / 3.0));
}

TEST_CASE("small-mass threshold probe") {
  ProbeSettings st;
  st.cells = 16;
  st.t_end = 8.0;
  st.jobs = 2;
  const auto br = smallness_threshold_probe(0.5, {1e-3, 2e-3}, st);
  REQUIRE(br.largest_converged);
  CHECK(*br.largest_converged >= 1e-3);
  CHECK_FALSE(br.degenerate);
  CHECK(br.entries[0].converged);
  CHECK(smallness_threshold_probe(0.5, {1e-3}, st).degenerate);
  CHECK_THROWS_AS(smallness_threshold_probe(0.5, {2e-3, 1e-3}, st), PreconditionError);
  CHECK_THROWS_AS(smallness_threshold_probe(1.0, {1e-3}, st), PreconditionError);
}

TEST_CASE("stability analysis of example A") {
  const StructuredGrid g(1.0, 1.0, 16, 16);
  const ModelSpec m = preset("example_a", g);
  const SystemState init = bump(m, 1.0, 0.04);
  const Trajectory traj = run(m, init, config(8.0, 2.0));
  const auto a = analyze_stability(traj, 0.04);
  REQUIRE(a.equilibrium);
  CHECK(a.mass.passed);
  REQUIRE(a.n_fit);
  CHECK(a.n_fit->fitted_rate > 0.0);
  CHECK(a.final_n_deviation < 1e-3);
  CHECK(a.final_c_deviation < 1e-3);
  const auto j = to_json(a);
  CHECK(j["equilibrium"]["c_star"].get<double>() == doctest::Approx(0.2));
}
