#pragma once

#include <functional>

namespace amerikan {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
};

/// Adaptive Gauss-Kronrod (61-point) on [a, b]. Throws NumericalError when the
/// error estimate exceeds abs_tol after the refinement budget is spent.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol, unsigned max_depth = 18);

}  // namespace amerikan
