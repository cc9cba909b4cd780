#pragma once

// Flux-form transport operators on interior faces. Boundary faces carry no
// flux, so every operator here integrates to zero over the domain.

#include <span>
#include <vector>

#include "kslab/geometry.hpp"
#include "kslab/model.hpp"

namespace kslab {

/// Scalar coefficients on interior faces. `x` holds the (nx-1)*ny vertical
/// faces indexed j*(nx-1)+i (between cells i and i+1); `y` holds the
/// nx*(ny-1) horizontal faces indexed j*nx+i (between rows j and j+1).
struct FaceCoefficients {
  std::vector<double> x;
  std::vector<double> y;

  static FaceCoefficients zeros(const StructuredGrid& grid);
  static FaceCoefficients constant(const StructuredGrid& grid, double value);
};

/// div(K grad f) with face coefficients K.
ScalarField apply_flux_divergence(const ScalarField& f, const FaceCoefficients& k);
/// Same, on raw cell arrays; `out` is overwritten.
void flux_divergence(const StructuredGrid& grid, const FaceCoefficients& k,
                     std::span<const double> f, std::span<double> out);

/// Face values of a0 (n+1)^alpha (|grad n|^2 + eps^2)^((p-2)/2). The face
/// gradient combines the normal difference with the average of the
/// tangential central differences of the two adjacent cells.
FaceCoefficients diffusion_face_coefficients(const ScalarField& n, const DiffusionSpec& spec,
                                             double eps_reg);

ScalarField nonlinear_diffusion_div(const ScalarField& n, const DiffusionSpec& spec,
                                    double eps_reg);

/// -div(b(n) grad c), i.e. the contribution of the cross-diffusion term to
/// n_t. Face values of b(n) are upwinded along grad c.
ScalarField chemotaxis_div(const ScalarField& n, const ScalarField& c, const SensitivitySpec& b);

/// Per-cell sum of outgoing face rates |v|/h for the upwinded chemotactic
/// flux, where v = (b(n)/n) dc/h. An explicit step with dt times this
/// rate <= 1 keeps n nonnegative.
ScalarField chemotaxis_outflow_rate(const ScalarField& n, const ScalarField& c,
                                    const SensitivitySpec& b);

/// Per-cell sum of outgoing face velocities divided by h for advect().
ScalarField advection_outflow_rate(const VectorField& u);

}  // namespace kslab
