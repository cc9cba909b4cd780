#pragma once

#include <span>

namespace kslab {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;  // 1 when y has no spread
};

/// Ordinary least squares y = slope x + intercept. Needs two distinct x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace kslab
