#include "amerikan/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "amerikan/model.hpp"

namespace amerikan {

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol, unsigned max_depth) {
    if (a == b) return {};
    using rule = boost::math::quadrature::gauss_kronrod<double, 61>;
    double error = 0.0;
    double l1 = 0.0;
    // the library refines against a relative target; translate the absolute one
    // using the L1 norm from a single panel
    double value = rule::integrate(f, a, b, 0, 0.0, &error, &l1);
    if (error > 0.5 * abs_tol) {
        const double rel = std::max(0.5 * abs_tol / std::max(l1, 1e-300), 1e-14);
        value = rule::integrate(f, a, b, max_depth, rel, &error, &l1);
    }
    // below this the estimate measures cancellation in the sum, not the rule
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * l1;
    if (!std::isfinite(value) || error > std::max(abs_tol, roundoff)) {
        std::ostringstream msg;
        msg << "quadrature on [" << a << ", " << b << "] did not converge: error estimate "
            << error << " > tolerance " << abs_tol;
        throw NumericalError(msg.str());
    }
    return {value, error};
}

}  // namespace amerikan
