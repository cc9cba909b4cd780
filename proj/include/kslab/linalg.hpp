#pragma once

#include <functional>
#include <span>
#include <vector>

namespace kslab {

struct CgResult {
  int iterations = 0;
  double residual = 0.0;  // final ||r|| / ||b||
  bool converged = false;
};

using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Unpreconditioned conjugate gradients for a symmetric positive definite
/// operator. `x` holds the initial guess on entry. Convergence is
/// ||b - A x|| <= tol ||b|| (absolute when b = 0).
CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b,
                            std::span<double> x, double tol, int max_iters);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace kslab
