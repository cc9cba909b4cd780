#include "kslab/linalg.hpp"

#include <cmath>

namespace kslab {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b,
                            std::span<double> x, double tol, int max_iters) {
  const std::size_t n = b.size();
  std::vector<double> r(n), p(n), ap(n);
  apply(x, ap);
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
  const double bnorm = std::sqrt(dot(b, b));
  const double scale = bnorm > 0.0 ? bnorm : 1.0;
  double rr = dot(r, r);
  CgResult res;
  res.residual = std::sqrt(rr) / scale;
  if (res.residual <= tol) {
    res.converged = true;
    return res;
  }
  p = r;
  for (int it = 1; it <= max_iters; ++it) {
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;  // operator not SPD along p, or breakdown
    const double step = rr / pap;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += step * p[k];
      r[k] -= step * ap[k];
    }
    const double rr_new = dot(r, r);
    res.iterations = it;
    res.residual = std::sqrt(rr_new) / scale;
    if (res.residual <= tol) {
      res.converged = true;
      return res;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
  }
  return res;
}

}  // namespace kslab
