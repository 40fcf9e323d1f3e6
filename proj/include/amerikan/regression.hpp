#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amerikan/model.hpp"

namespace amerikan {

/// Polynomial-in-moneyness basis: 1, m, ..., m^degree with m = x / K, plus the
/// payoff g(x) / K when it is not collinear with the monomials.
struct RegressionBasis {
    int degree = 3;
    bool itm_only = true;  ///< stopping regressions use in-the-money paths only

    void validate() const;
};

/// Least-squares fit of a regressand on the basis, after any rank-driven reduction.
struct RegressionFit {
    Eigen::VectorXd coefficients;  ///< empty when there were no samples
    int degree = -1;
    bool payoff_column = false;
    bool reduced = false;  ///< degree or payoff column dropped for rank
    double condition_number = 1.0;
    double r_squared = 0.0;
    double residual_std = 0.0;
    /// Typical standard error of the fitted mean at a sample point,
    /// residual_std * sqrt(columns / samples).
    double prediction_se = 0.0;
    std::size_t samples = 0;

    double evaluate(const OptionSpec& spec, double x) const;
    std::size_t columns() const { return static_cast<std::size_t>(coefficients.size()); }
};

/// Fits y[rows] on the basis evaluated at x[rows]. The design starts at
/// `degree` (plus the payoff column when requested) and shrinks until it has
/// full numerical rank.
RegressionFit fit_regression(const OptionSpec& spec, std::span<const double> x,
                             std::span<const double> y, std::span<const std::size_t> rows,
                             int degree, bool payoff_column);

}  // namespace amerikan
