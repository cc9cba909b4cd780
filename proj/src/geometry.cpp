#include "kslab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kslab/error.hpp"

namespace kslab {

StructuredGrid::StructuredGrid(double lx, int nx) : dim_(1), n_{nx, 1}, l_{lx, 1.0} {
  require(lx > 0.0 && nx > 0, "grid extent and cell count must be positive");
  h_ = {lx / nx, 1.0};
}

StructuredGrid::StructuredGrid(double lx, double ly, int nx, int ny)
    : dim_(2), n_{nx, ny}, l_{lx, ly} {
  require(lx > 0.0 && ly > 0.0 && nx > 0 && ny > 0,
          "grid extents and cell counts must be positive");
  h_ = {lx / nx, ly / ny};
}

ScalarField::ScalarField(const StructuredGrid& grid, double value, FieldTag tag)
    : grid_(grid), values_(grid.size(), value), tag_(tag) {}

ScalarField::ScalarField(const StructuredGrid& grid, std::vector<double> values, FieldTag tag)
    : grid_(grid), values_(std::move(values)), tag_(tag) {
  require(values_.size() == grid_.size(), "field value count does not match the grid");
}

ScalarField ScalarField::sample(const StructuredGrid& grid,
                                const std::function<double(double, double)>& f, FieldTag tag) {
  ScalarField out(grid, 0.0, tag);
  for (int j = 0; j < grid.cells(1); ++j) {
    const double y = grid.dim() == 2 ? grid.center(1, j) : 0.0;
    for (int i = 0; i < grid.cells(0); ++i) out.at(i, j) = f(grid.center(0, i), y);
  }
  return out;
}

void ScalarField::set_tag(FieldTag tag) {
  tag_ = tag;
  check_invariants();
}

double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

void ScalarField::check_invariants() const {
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k]))
      throw PreconditionError("non-finite field value at cell " + std::to_string(k));
    if (tag_ == FieldTag::density && values_[k] < 0.0)
      throw PreconditionError("negative density value at cell " + std::to_string(k));
  }
}

VectorField::VectorField(const StructuredGrid& grid) : grid_(grid) {
  comp_[0].assign(grid.size(), 0.0);
  comp_[1].assign(grid.size(), 0.0);
}

void VectorField::mark_solenoidal(double div_tol) {
  const ScalarField div = divergence(*this);
  const double worst = lq_norm(div, kInfinity);
  if (!(worst <= div_tol))
    throw PreconditionError("velocity field is not solenoidal: max |div u| = " +
                            std::to_string(worst));
  solenoidal_ = true;
}

ScalarField VectorField::magnitude() const {
  ScalarField out(grid_);
  for (std::size_t k = 0; k < grid_.size(); ++k)
    out[k] = std::hypot(comp_[0][k], comp_[1][k]);
  return out;
}

double quadrature(const ScalarField& f) {
  double sum = 0.0;
  for (double v : f.values()) sum += v;
  return sum * f.grid().cell_volume();
}

double mean_average(const ScalarField& f) { return quadrature(f) / f.grid().measure(); }

double lq_norm(const ScalarField& f, double q) {
  if (std::isinf(q) && q > 0) {
    double m = 0.0;
    for (double v : f.values()) m = std::max(m, std::abs(v));
    return m;
  }
  require(q >= 1.0, "lq_norm requires q >= 1");
  double sum = 0.0;
  for (double v : f.values()) sum += std::pow(std::abs(v), q);
  return std::pow(sum * f.grid().cell_volume(), 1.0 / q);
}

VectorField gradient(const ScalarField& f) {
  const StructuredGrid& g = f.grid();
  VectorField out(g);
  const int nx = g.cells(0), ny = g.cells(1);
  auto gx = out.component(0);
  auto gy = out.component(1);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double left = f.at(i > 0 ? i - 1 : i, j);
      const double right = f.at(i < nx - 1 ? i + 1 : i, j);
      gx[g.index(i, j)] = (right - left) / (2.0 * g.h(0));
      if (g.dim() == 2) {
        const double down = f.at(i, j > 0 ? j - 1 : j);
        const double up = f.at(i, j < ny - 1 ? j + 1 : j);
        gy[g.index(i, j)] = (up - down) / (2.0 * g.h(1));
      }
    }
  }
  return out;
}

ScalarField divergence(const VectorField& u) {
  const StructuredGrid& g = u.grid();
  ScalarField out(g);
  const int nx = g.cells(0), ny = g.cells(1);
  auto ux = u.component(0);
  auto uy = u.component(1);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = g.index(i, j);
      const double east = i < nx - 1 ? 0.5 * (ux[c] + ux[g.index(i + 1, j)]) : 0.0;
      const double west = i > 0 ? 0.5 * (ux[c] + ux[g.index(i - 1, j)]) : 0.0;
      double div = (east - west) / g.h(0);
      if (g.dim() == 2) {
        const double north = j < ny - 1 ? 0.5 * (uy[c] + uy[g.index(i, j + 1)]) : 0.0;
        const double south = j > 0 ? 0.5 * (uy[c] + uy[g.index(i, j - 1)]) : 0.0;
        div += (north - south) / g.h(1);
      }
      out[c] = div;
    }
  }
  return out;
}

ScalarField neumann_laplacian(const ScalarField& f) {
  const StructuredGrid& g = f.grid();
  ScalarField out(g);
  const int nx = g.cells(0), ny = g.cells(1);
  const double ihx2 = 1.0 / (g.h(0) * g.h(0));
  const double ihy2 = 1.0 / (g.h(1) * g.h(1));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double fc = f.at(i, j);
      double acc = 0.0;
      if (i > 0) acc += (f.at(i - 1, j) - fc) * ihx2;
      if (i < nx - 1) acc += (f.at(i + 1, j) - fc) * ihx2;
      if (g.dim() == 2) {
        if (j > 0) acc += (f.at(i, j - 1) - fc) * ihy2;
        if (j < ny - 1) acc += (f.at(i, j + 1) - fc) * ihy2;
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

ScalarField advect(const ScalarField& f, const VectorField& u) {
  require(u.solenoidal(), "advect requires a velocity field tagged solenoidal");
  const StructuredGrid& g = f.grid();
  require(g == u.grid(), "advect: field and velocity live on different grids");
  ScalarField out(g);
  const int nx = g.cells(0), ny = g.cells(1);
  auto ux = u.component(0);
  auto uy = u.component(1);
  // x faces
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const std::size_t l = g.index(i, j), r = g.index(i + 1, j);
      const double vel = 0.5 * (ux[l] + ux[r]);
      const double flux = vel * (vel >= 0.0 ? f[l] : f[r]) / g.h(0);
      out[l] += flux;
      out[r] -= flux;
    }
  }
  if (g.dim() == 2) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const std::size_t d = g.index(i, j), t = g.index(i, j + 1);
        const double vel = 0.5 * (uy[d] + uy[t]);
        const double flux = vel * (vel >= 0.0 ? f[d] : f[t]) / g.h(1);
        out[d] += flux;
        out[t] -= flux;
      }
    }
  }
  return out;
}

double level_set_measure(const ScalarField& f, double k) {
  std::size_t count = 0;
  for (double v : f.values())
    if (v > k) ++count;
  return static_cast<double>(count) * f.grid().cell_volume();
}

ScalarField truncate_plus(const ScalarField& f, double k) {
  ScalarField out(f.grid());
  for (std::size_t c = 0; c < f.size(); ++c) out[c] = std::max(f[c] - k, 0.0);
  return out;
}

VectorField zero_velocity(const StructuredGrid& grid) {
  VectorField u(grid);
  u.mark_solenoidal();
  return u;
}

VectorField cosine_vortex(const StructuredGrid& grid, double amplitude) {
  require(grid.dim() == 2, "cosine_vortex requires a two-dimensional grid");
  const double pi = std::numbers::pi;
  const double lx = grid.extent(0), ly = grid.extent(1);
  const double hx = grid.h(0), hy = grid.h(1);
  // The stream function is odd about every wall, so evaluating it at ghost
  // centers reproduces the reflection that makes the boundary faces tight.
  auto psi = [&](int i, int j) {
    return amplitude * std::sin(pi * (i + 0.5) * hx / lx) * std::sin(pi * (j + 0.5) * hy / ly);
  };
  VectorField u(grid);
  auto ux = u.component(0);
  auto uy = u.component(1);
  for (int j = 0; j < grid.cells(1); ++j) {
    for (int i = 0; i < grid.cells(0); ++i) {
      const std::size_t c = grid.index(i, j);
      ux[c] = (psi(i, j + 1) - psi(i, j - 1)) / (2.0 * hy);
      uy[c] = -(psi(i + 1, j) - psi(i - 1, j)) / (2.0 * hx);
    }
  }
  u.mark_solenoidal();
  return u;
}

}  // namespace kslab
