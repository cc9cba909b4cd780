#include "kslab/operators.hpp"

#include <algorithm>
#include <cmath>

#include "kslab/error.hpp"

namespace kslab {

namespace {

std::size_t xface(const StructuredGrid& g, int i, int j) {
  return static_cast<std::size_t>(j) * (g.cells(0) - 1) + i;
}

std::size_t yface(const StructuredGrid& g, int i, int j) {
  return static_cast<std::size_t>(j) * g.cells(0) + i;
}

// Visits every interior face as (left/down cell, right/up cell, axis).
template <typename Fn>
void for_each_face(const StructuredGrid& g, Fn&& fn) {
  const int nx = g.cells(0), ny = g.cells(1);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) fn(g.index(i, j), g.index(i + 1, j), 0, xface(g, i, j));
  if (g.dim() == 2)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i < nx; ++i) fn(g.index(i, j), g.index(i, j + 1), 1, yface(g, i, j));
}

}  // namespace

FaceCoefficients FaceCoefficients::zeros(const StructuredGrid& grid) {
  FaceCoefficients k;
  k.x.assign(static_cast<std::size_t>(grid.cells(0) - 1) * grid.cells(1), 0.0);
  if (grid.dim() == 2) k.y.assign(static_cast<std::size_t>(grid.cells(0)) * (grid.cells(1) - 1), 0.0);
  return k;
}

FaceCoefficients FaceCoefficients::constant(const StructuredGrid& grid, double value) {
  FaceCoefficients k = zeros(grid);
  std::fill(k.x.begin(), k.x.end(), value);
  std::fill(k.y.begin(), k.y.end(), value);
  return k;
}

void flux_divergence(const StructuredGrid& g, const FaceCoefficients& k,
                     std::span<const double> f, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const double ihx2 = 1.0 / (g.h(0) * g.h(0));
  const double ihy2 = 1.0 / (g.h(1) * g.h(1));
  for_each_face(g, [&](std::size_t l, std::size_t r, int axis, std::size_t face) {
    const double coef = axis == 0 ? k.x[face] * ihx2 : k.y[face] * ihy2;
    const double flux = coef * (f[r] - f[l]);
    out[l] += flux;
    out[r] -= flux;
  });
}

ScalarField apply_flux_divergence(const ScalarField& f, const FaceCoefficients& k) {
  ScalarField out(f.grid());
  flux_divergence(f.grid(), k, f.values(), out.values());
  return out;
}

FaceCoefficients diffusion_face_coefficients(const ScalarField& n, const DiffusionSpec& spec,
                                             double eps_reg) {
  const StructuredGrid& g = n.grid();
  if (spec.p < 2.0) require(eps_reg > 0.0, "p < 2 requires a positive regularization eps");
  if (spec.p == 2.0 && spec.alpha == 0.0) return FaceCoefficients::constant(g, spec.a0);
  FaceCoefficients k = FaceCoefficients::zeros(g);
  const VectorField grad = spec.p != 2.0 ? gradient(n) : VectorField(g);
  auto gx = grad.component(0);
  auto gy = grad.component(1);
  for_each_face(g, [&](std::size_t l, std::size_t r, int axis, std::size_t face) {
    const double normal = (n[r] - n[l]) / g.h(axis);
    double mag2 = normal * normal;
    if (g.dim() == 2) {
      const auto tangential = axis == 0 ? gy : gx;
      const double t = 0.5 * (tangential[l] + tangential[r]);
      mag2 += t * t;
    }
    const double s = 0.5 * (n[l] + n[r]);
    const double a = spec.coefficient(s, std::sqrt(mag2), eps_reg);
    (axis == 0 ? k.x : k.y)[face] = a;
  });
  return k;
}

ScalarField nonlinear_diffusion_div(const ScalarField& n, const DiffusionSpec& spec,
                                    double eps_reg) {
  return apply_flux_divergence(n, diffusion_face_coefficients(n, spec, eps_reg));
}

ScalarField chemotaxis_div(const ScalarField& n, const ScalarField& c, const SensitivitySpec& b) {
  const StructuredGrid& g = n.grid();
  require(g == c.grid(), "chemotaxis_div: n and c live on different grids");
  ScalarField out(g);
  for_each_face(g, [&](std::size_t l, std::size_t r, int axis, std::size_t) {
    const double h = g.h(axis);
    const double dc = (c[r] - c[l]) / h;
    // transport goes up the signal gradient
    const double bf = b.value(dc >= 0.0 ? n[l] : n[r]);
    const double flux = bf * dc / h;
    out[l] -= flux;
    out[r] += flux;
  });
  return out;
}

ScalarField chemotaxis_outflow_rate(const ScalarField& n, const ScalarField& c,
                                    const SensitivitySpec& b) {
  const StructuredGrid& g = n.grid();
  ScalarField out(g);
  for_each_face(g, [&](std::size_t l, std::size_t r, int axis, std::size_t) {
    const double h = g.h(axis);
    const double dc = c[r] - c[l];
    if (dc >= 0.0)
      out[l] += b.ratio(n[l]) * dc / (h * h);
    else
      out[r] += -b.ratio(n[r]) * dc / (h * h);
  });
  return out;
}

ScalarField advection_outflow_rate(const VectorField& u) {
  const StructuredGrid& g = u.grid();
  ScalarField out(g);
  for_each_face(g, [&](std::size_t l, std::size_t r, int axis, std::size_t) {
    const auto comp = u.component(axis);
    const double vel = 0.5 * (comp[l] + comp[r]);
    if (vel >= 0.0)
      out[l] += vel / g.h(axis);
    else
      out[r] += -vel / g.h(axis);
  });
  return out;
}

}  // namespace kslab
