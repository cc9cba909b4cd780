#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "kslab/degiorgi.hpp"
#include "kslab/error.hpp"
#include "test_support.hpp"

using namespace kslab;

namespace {

constexpr double pi = std::numbers::pi;

using testing::synthetic;

}  // namespace

TEST_CASE("ladder levels and intervals") {
  const LevelLadder l = build_ladder(1.0, 1.0, 0.5, 0.5, 3);
  REQUIRE(l.levels.size() == 4);
  CHECK(l.levels[0] == 1.0);
  CHECK(l.levels[1] == 1.5);
  CHECK(l.levels[2] == 1.75);
  CHECK(l.levels[3] == 1.875);
  CHECK(l.mid_levels[0] == 1.25);
  for (int j = 0; j + 1 <= l.depth; ++j) {
    CHECK(l.intervals[j].contains(l.intervals[j + 1]));
    CHECK(l.intervals[j].end == 1.0);
  }
  CHECK(l.intervals[0].begin == doctest::Approx(0.5));

  SUBCASE("level identity k_{j+1} - k_j = 2^-(j+1) k0") {
    const LevelLadder big = build_ladder(3.7, 2.0, 1.0, 0.3, 20);
    for (int j = 0; j < big.depth; ++j) {
      const double gap = big.levels[j + 1] - big.levels[j];
      const double expect = std::ldexp(1.0, -(j + 1)) * 3.7;
      const double ulp = std::nextafter(big.levels[j + 1], 10.0) - big.levels[j + 1];
      CHECK(std::abs(gap - expect) <= 2.0 * ulp);
    }
  }

  SUBCASE("preconditions") {
    CHECK_THROWS_AS(build_ladder(0.5, 1.0, 0.5, 0.5, 3, std::nullopt, 1.0), PreconditionError);
    CHECK_THROWS_AS(build_ladder(1.0, 1.0, 1.0, 0.5, 3), PreconditionError);
    CHECK_THROWS_AS(build_ladder(1.0, 1.0, 0.5, 1.0, 3), PreconditionError);
    CHECK_THROWS_AS(build_ladder(1.0, 1.0, 0.5, 0.5, 0), PreconditionError);
    CHECK_THROWS_AS(build_ladder(1.0, 1.0, 0.5, 0.5, 3, 0.6), PreconditionError);
  }
}

TEST_CASE("time cutoff") {
  const TimeCutoff eta(0.2, 0.6, 1.0);
  CHECK(eta.value(0.1) == 0.0);
  CHECK(eta.value(0.4) == doctest::Approx(0.5));
  CHECK(eta.value(0.8) == 1.0);
  CHECK(eta.max_slope() == doctest::Approx(3.75));
  CHECK(eta.derivative(0.4) == doctest::Approx(3.75));
  // derivative against a central difference
  for (double t : {0.25, 0.33, 0.51}) {
    const double h = 1e-6;
    CHECK(eta.derivative(t) ==
          doctest::Approx((eta.value(t + h) - eta.value(t - h)) / (2 * h)).epsilon(1e-6));
    CHECK(std::abs(eta.derivative(t)) <= eta.max_slope() + 1e-12);
  }
  const LevelLadder l = build_ladder(1.0, 1.0, 0.5, 0.5, 3);
  const TimeCutoff e1 = TimeCutoff::for_ladder(l, 1);
  CHECK(e1.rise_begin() == l.intervals[1].begin);
  CHECK(e1.rise_end() == l.intervals[2].begin);
  CHECK(e1.max_slope() == doctest::Approx(3.0 * 2.0 / (0.5 * 0.5)));
}

TEST_CASE("truncation energies dominate higher level sets") {
  const StructuredGrid g(1.0, 1.0, 24, 24);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const ScalarField n = testing::random_field(g, seed, 0.0, 3.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 2.0);
    const double k1 = u(rng), k2 = k1 + u(rng) * 0.5, r = u(rng);
    double e1 = 0.0, e2 = 0.0;
    for (double v : n.values()) {
      e1 += std::pow(std::max(v - k1, 0.0), r) * g.cell_volume();
      e2 += std::pow(std::max(v - k2, 0.0), r) * g.cell_volume();
    }
    CHECK(e2 <= e1);
    CHECK(level_set_measure(n, k2) <= e1 / std::pow(k2 - k1, r) + 1e-12);
  }
}

TEST_CASE("Y_j of hand-made trajectories") {
  const StructuredGrid g(1.0, 1.0, 8, 8);
  const ModelSpec m = preset("example_a", g);
  const LevelLadder l = build_ladder(1.0, 1.0, 0.5, 0.5, 2);

  const Trajectory flat =
      synthetic(m, 20, 1.0, [&](double) { return ScalarField(g, 1.6); });
  const auto ys = compute_Yj(flat, l, 1.0);
  REQUIRE(ys.size() == 2);
  CHECK(ys[0].value == doctest::Approx(0.6));
  CHECK(ys[1].value == 0.0);
  CHECK(ys[0].covered_span == doctest::Approx(0.5));

  const Trajectory low = synthetic(m, 20, 1.0, [&](double t) {
    return ScalarField::sample(g, [&](double x, double y) { return (1 - t) * x * y; });
  });
  for (const auto& y : compute_Yj(low, l, 2.0)) CHECK(y.value == 0.0);

  const Trajectory sparse = synthetic(m, 1, 1.0, [&](double) { return ScalarField(g, 1.6); });
  CHECK_THROWS_AS(compute_Yj(sparse, build_ladder(1.0, 1.0, 0.5, 0.5, 4), 1.0),
                  PreconditionError);
}

TEST_CASE("iteration lemma") {
  SUBCASE("hand case halves") {
    const auto r = iterate_lemma(2.0, 2.0, 1.0, 0.125, 6);
    // Y1 = 2 * 1 * 1/64, Y2 = 2 * 2 * Y1^2 ...
    CHECK(r.sequence[1] == doctest::Approx(1.0 / 32));
    CHECK(r.threshold == doctest::Approx(0.25));
    CHECK(r.converged);
  }
  SUBCASE("exact powers of two") {
    const auto r = iterate_lemma(2.0, 4.0, 1.0, 0.5, 4);
    // K Y0 b = 4 > 1: divergent, sequence 1/2, 1/2, 2, 128, ...
    CHECK(r.sequence[1] == 0.5);
    CHECK(r.sequence[2] == 2.0);
    CHECK(r.sequence[3] == 128.0);
    CHECK_FALSE(r.converged);
  }
  SUBCASE("zero stays zero") {
    const auto r = iterate_lemma(5.0, 3.0, 0.5, 0.0, 10);
    CHECK(r.converged);
    for (double y : r.sequence) CHECK(y == 0.0);
  }
  SUBCASE("threshold separates convergence on random data") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      const double K = 1.0 + 9.0 * u(rng), b = 1.0 + 4.0 * u(rng) + 1e-3;
      const double delta = 0.2 + 1.8 * u(rng);
      const double thr = std::pow(K, -1.0 / delta) * std::pow(b, -1.0 / (delta * delta));
      const double below = thr * (0.05 + 0.9 * u(rng));
      const auto r = iterate_lemma(K, b, delta, below, 60);
      CHECK(r.converged);
      for (int j = 0; j < static_cast<int>(r.log_sequence.size()); ++j)
        CHECK(r.log_sequence[j] <= std::log(below) - j * std::log(b) / delta + 1e-9);
      const auto far = iterate_lemma(K, b, delta, thr * (2.0 + 10.0 * u(rng)), 60);
      CHECK_FALSE(far.converged);
    }
  }
}

TEST_CASE("embedding ratio") {
  const StructuredGrid g(1.0, 1.0, 16, 16);
  std::vector<TimeSlice> zero;
  for (int k = 0; k < 5; ++k) zero.push_back({0.1 * k, ScalarField(g)});
  CHECK(embedding_ratio(zero, 2.0, 1.0) == 0.0);

  auto family = [](int cells) {
    const StructuredGrid gg(1.0, 1.0, cells, cells);
    std::vector<TimeSlice> s;
    for (int k = 0; k <= 10; ++k) {
      const double t = 0.1 * k;
      s.push_back({t, ScalarField::sample(gg, [&](double x, double y) {
                     return (1 + t) * std::cos(pi * x) * std::cos(2 * pi * y);
                   })});
    }
    return s;
  };
  const double coarse = embedding_ratio(family(32), 3.0, 1.0);
  const double fine = embedding_ratio(family(64), 3.0, 1.0);
  CHECK(std::isfinite(coarse));
  CHECK(fine == doctest::Approx(coarse).epsilon(0.1));
}

TEST_CASE("Caccioppoli sides") {
  const StructuredGrid g(1.0, 1.0, 8, 8);
  ModelSpec m = preset("general", g);
  m.source = SourceSpec::logistic(0.0, 1.0, 1.0);
  const TimeCutoff eta(0.2, 0.6, 1.0);

  SUBCASE("empty level set gives zeros") {
    const Trajectory traj = synthetic(m, 40, 1.0, [&](double) { return ScalarField(g, 1.2); });
    const auto s = caccioppoli_sides(traj, 2.0, eta, 0.0);
    CHECK(s.lhs() == 0.0);
    CHECK(s.rhs() == 0.0);
  }

  SUBCASE("spatially constant density against closed forms") {
    const double A = 3.0, k = 2.0;
    const Trajectory traj = synthetic(m, 400, 1.0, [&](double) { return ScalarField(g, A); });
    const auto s = caccioppoli_sides(traj, k, eta, 0.0);
    CHECK(s.lhs_sup_term == doctest::Approx((A - k) * (A - k)));
    CHECK(s.lhs_gradient_term == 0.0);
    CHECK(s.rhs_gradc_term == 0.0);
    // eta rises from 0 to 1, so the time integral of eta' is one
    CHECK(s.rhs_time_derivative_term == doctest::Approx((A - k) * (A - k)).epsilon(1e-4));
    // f(A) = -A^2 and the integral of eta over [0.2, 1] is 0.2 + 0.4
    CHECK(s.rhs_source_term == doctest::Approx(-A * A * (A - k) * 0.6).epsilon(1e-4));
    CHECK(s.rhs() == doctest::Approx(s.rhs_time_derivative_term));
  }

  SUBCASE("preconditions") {
    const Trajectory traj = synthetic(m, 4, 1.0, [&](double) { return ScalarField(g, 3.0); });
    CHECK_THROWS_AS(caccioppoli_sides(traj, 2.0, eta, 0.0), PreconditionError);
    CHECK_THROWS_AS(caccioppoli_sides(traj, 1.0, eta, 0.0), PreconditionError);
  }
}

TEST_CASE("diagnostics report") {
  const StructuredGrid g(1.0, 1.0, 8, 8);
  const ModelSpec m = preset("general", g);
  const Trajectory traj = synthetic(m, 80, 1.0, [&](double t) {
    return ScalarField::sample(g, [&](double x, double) { return 1.0 + (2.0 - t) * x; });
  });
  const LevelLadder l = build_ladder(1.2, 1.0, 0.5, 0.5, 2);
  const auto j = diagnostics_json(traj, l, 1.0, 0.0);
  CHECK(j["levels"].size() == 3);
  CHECK(j["caccioppoli"].size() == 2);
  CHECK(j["levels"][0].contains("Y"));
  CHECK(j["empirical_constants"]["caccioppoli_C"].get<double>() >= 0.0);
}
