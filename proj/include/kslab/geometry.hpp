#pragma once

// Structured rectangular grids, cell-centered fields and the basic discrete
// operators (quadrature, norms, gradient, Neumann Laplacian, level sets).

#include <array>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace kslab {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

class StructuredGrid {
 public:
  /// One-dimensional grid on (0, lx). Outside the N >= 2 setting of the
  /// analysis; reports flag runs on such grids.
  StructuredGrid(double lx, int nx);
  StructuredGrid(double lx, double ly, int nx, int ny);

  int dim() const { return dim_; }
  int cells(int axis) const { return n_[axis]; }
  double extent(int axis) const { return l_[axis]; }
  double h(int axis) const { return h_[axis]; }

  std::size_t size() const { return static_cast<std::size_t>(n_[0]) * n_[1]; }
  double cell_volume() const { return dim_ == 1 ? h_[0] : h_[0] * h_[1]; }
  double measure() const { return dim_ == 1 ? l_[0] : l_[0] * l_[1]; }

  std::size_t index(int i, int j = 0) const {
    return static_cast<std::size_t>(j) * n_[0] + static_cast<std::size_t>(i);
  }
  double center(int axis, int i) const { return (i + 0.5) * h_[axis]; }

  bool outside_hypotheses() const { return dim_ < 2; }

  bool operator==(const StructuredGrid& other) const = default;

 private:
  int dim_ = 2;
  std::array<int, 2> n_{1, 1};
  std::array<double, 2> l_{1.0, 1.0};
  std::array<double, 2> h_{1.0, 1.0};
};

enum class FieldTag { plain, density };

class ScalarField {
 public:
  explicit ScalarField(const StructuredGrid& grid, double value = 0.0,
                       FieldTag tag = FieldTag::plain);
  ScalarField(const StructuredGrid& grid, std::vector<double> values,
              FieldTag tag = FieldTag::plain);

  /// Samples f(x, y) at cell centers (y = 0 on 1D grids).
  static ScalarField sample(const StructuredGrid& grid,
                            const std::function<double(double, double)>& f,
                            FieldTag tag = FieldTag::plain);

  const StructuredGrid& grid() const { return grid_; }
  FieldTag tag() const { return tag_; }
  void set_tag(FieldTag tag);

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double at(int i, int j = 0) const { return values_[grid_.index(i, j)]; }
  double& at(int i, int j = 0) { return values_[grid_.index(i, j)]; }

  double min() const;
  double max() const;

  /// Throws PreconditionError on non-finite values, or negative values when
  /// tagged as a density.
  void check_invariants() const;

 private:
  StructuredGrid grid_;
  std::vector<double> values_;
  FieldTag tag_ = FieldTag::plain;
};

/// Cell-centered vector field; one array per axis.
class VectorField {
 public:
  explicit VectorField(const StructuredGrid& grid);

  const StructuredGrid& grid() const { return grid_; }
  std::span<const double> component(int axis) const { return comp_[axis]; }
  std::span<double> component(int axis) { return comp_[axis]; }

  bool solenoidal() const { return solenoidal_; }
  /// Tags the field as divergence free after verifying
  /// max |divergence| <= div_tol; throws PreconditionError otherwise.
  void mark_solenoidal(double div_tol = 1e-10);

  /// Cellwise Euclidean magnitude.
  ScalarField magnitude() const;

 private:
  StructuredGrid grid_;
  std::array<std::vector<double>, 2> comp_;
  bool solenoidal_ = false;
};

double quadrature(const ScalarField& f);
double mean_average(const ScalarField& f);
/// Discrete L^q norm; q = kInfinity gives the cell maximum of |f|.
double lq_norm(const ScalarField& f, double q);

/// Central differences in the interior; reflected ghost cells at the
/// boundary (homogeneous Neumann data).
VectorField gradient(const ScalarField& f);

/// Divergence from face-averaged normal components, with zero normal
/// component on the boundary faces.
ScalarField divergence(const VectorField& u);

/// Conservative 3/5-point Laplacian with reflected ghost cells.
ScalarField neumann_laplacian(const ScalarField& f);

/// Conservative first-order upwind evaluation of div(u f). Requires a field
/// tagged solenoidal.
ScalarField advect(const ScalarField& f, const VectorField& u);

/// Measure of {x : f(x) > k} (strict inequality).
double level_set_measure(const ScalarField& f, double k);

/// Cellwise (f - k)_+.
ScalarField truncate_plus(const ScalarField& f, double k);

/// Solenoidal velocity generators. All satisfy u . nu = 0 on the boundary
/// faces and have discrete divergence at round-off level.
VectorField zero_velocity(const StructuredGrid& grid);
/// Rotating cell built from the stream function A sin(pi x/Lx) sin(pi y/Ly),
/// differentiated with central differences on cell centers (2D only).
VectorField cosine_vortex(const StructuredGrid& grid, double amplitude);

}  // namespace kslab
