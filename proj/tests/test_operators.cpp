#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kslab/error.hpp"
#include "kslab/operators.hpp"
#include "test_support.hpp"

using namespace kslab;
using kslab::testing::random_field;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("nonlinear diffusion") {
  StructuredGrid g(1.0, 1.0, 12, 12);
  const auto d3 = DiffusionSpec::p_laplacian(3.0);
  CHECK(lq_norm(nonlinear_diffusion_div(ScalarField(g, 1.7), d3, 1e-6), kInfinity) == 0.0);

  const auto f = random_field(g, 7, 0.0, 2.0);
  const auto heat = nonlinear_diffusion_div(f, DiffusionSpec::power(1.0, 0.0), 1e-6);
  CHECK(kslab::testing::max_abs_diff(heat, neumann_laplacian(f)) <= 1e-12 * lq_norm(heat, kInfinity));

  CHECK_THROWS_AS(nonlinear_diffusion_div(f, DiffusionSpec::p_laplacian(1.5), 0.0),
                  PreconditionError);
  CHECK_NOTHROW(nonlinear_diffusion_div(f, DiffusionSpec::p_laplacian(3.0), 0.0));
}

TEST_CASE("p = 3 flux on affine data") {
  StructuredGrid line(1.0, 40);
  const auto n = ScalarField::sample(line, [](double x, double) { return x; });
  const auto spec = DiffusionSpec::p_laplacian(3.0);
  const auto k = diffusion_face_coefficients(n, spec, 1e-6);
  for (double a : k.x) CHECK(a == doctest::Approx(1.0).epsilon(1e-10));
  const auto div = nonlinear_diffusion_div(n, spec, 1e-6);
  for (int i = 1; i < 39; ++i) CHECK(std::abs(div[i]) <= 1e-9);
  // the walls carry no flux, so the boundary cells see only one face
  CHECK(div[0] == doctest::Approx(1.0 / line.h(0)).epsilon(1e-8));
}

TEST_CASE("chemotaxis divergence") {
  StructuredGrid g(1.0, 1.0, 16, 16);
  const auto c = random_field(g, 3);
  const auto b = SensitivitySpec::linear(1.0);
  CHECK(lq_norm(chemotaxis_div(ScalarField(g, 0.0), c, b), kInfinity) == 0.0);
  CHECK(lq_norm(chemotaxis_div(random_field(g, 4), ScalarField(g, 2.0), b), kInfinity) == 0.0);

  StructuredGrid line(1.0, 128);
  const auto cos_c = ScalarField::sample(line, [](double x, double) { return std::cos(pi * x); });
  const auto r = chemotaxis_div(ScalarField(line, 1.0), cos_c, b);
  double err = 0.0;
  for (int i = 0; i < 128; ++i)
    err = std::max(err, std::abs(r[i] - pi * pi * std::cos(pi * line.center(0, i))));
  CHECK(err <= pi * pi * line.h(0));
}

TEST_CASE("flux operators are conservative") {
  StructuredGrid g(1.3, 0.7, 20, 14);
  const VectorField u = cosine_vortex(g, 2.0);
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const auto n = random_field(g, seed, 0.0, 3.0);
    const auto c = random_field(g, seed + 100, 0.0, 3.0);
    const double tol = 1e-12 * static_cast<double>(g.size());
    CHECK(std::abs(quadrature(neumann_laplacian(n))) <= tol);
    CHECK(std::abs(quadrature(nonlinear_diffusion_div(n, DiffusionSpec::product(1.0, -0.5, 2.5),
                                                      1e-6))) <= tol);
    CHECK(std::abs(quadrature(chemotaxis_div(n, c, SensitivitySpec::prototype(1.0, 2.0)))) <= tol);
    CHECK(std::abs(quadrature(advect(n, u))) <= tol);
  }
}

TEST_CASE("explicit chemotaxis step within the outflow bound stays nonnegative") {
  StructuredGrid g(1.0, 1.0, 16, 16);
  const auto b = SensitivitySpec::prototype(2.0, 1.5);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto n = random_field(g, seed, 0.0, 4.0);
    const auto c = random_field(g, seed * 31, 0.0, 10.0);
    const double rate = chemotaxis_outflow_rate(n, c, b).max();
    const double dt = 1.0 / rate;
    const auto div = chemotaxis_div(n, c, b);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(n[k] + dt * div[k] >= -1e-12);
  }
}
