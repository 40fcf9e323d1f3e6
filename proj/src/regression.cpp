#include "amerikan/regression.hpp"

#include <cmath>
#include <stdexcept>

namespace amerikan {

namespace {

// Largest condition number of the design accepted before shrinking it.
constexpr double max_condition = 1e10;

void fill_row(const OptionSpec& spec, double x, int degree, bool payoff_column, double* row) {
    const double m = x / spec.strike;
    double power = 1.0;
    for (int j = 0; j <= degree; ++j) {
        row[j] = power;
        power *= m;
    }
    if (payoff_column) row[degree + 1] = payoff(spec, x) / spec.strike;
}

}  // namespace

void RegressionBasis::validate() const {
    if (degree < 1) throw std::invalid_argument("regression degree must be >= 1");
}

double RegressionFit::evaluate(const OptionSpec& spec, double x) const {
    if (coefficients.size() == 0) return 0.0;
    double row[16];
    fill_row(spec, x, degree, payoff_column, row);
    double v = 0.0;
    for (Eigen::Index j = 0; j < coefficients.size(); ++j) v += coefficients[j] * row[j];
    return v;
}

RegressionFit fit_regression(const OptionSpec& spec, std::span<const double> x,
                             std::span<const double> y, std::span<const std::size_t> rows,
                             int degree, bool payoff_column) {
    if (degree < 0 || degree > 12) throw std::invalid_argument("regression degree out of range");
    RegressionFit fit;
    const std::size_t n = rows.size();
    fit.samples = n;
    if (n == 0) return fit;

    double mean = 0.0;
    for (std::size_t r : rows) mean += y[r];
    mean /= static_cast<double>(n);
    double total = 0.0;
    for (std::size_t r : rows) total += (y[r] - mean) * (y[r] - mean);

    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) rhs[static_cast<Eigen::Index>(i)] = y[rows[i]];

    bool with_payoff = payoff_column;
    int d = degree;
    bool reduced = false;
    for (;;) {
        const int cols = d + 1 + (with_payoff ? 1 : 0);
        if (static_cast<std::size_t>(cols) <= n) {
            Eigen::MatrixXd design(static_cast<Eigen::Index>(n), cols);
            double row[16];
            for (std::size_t i = 0; i < n; ++i) {
                fill_row(spec, x[rows[i]], d, with_payoff, row);
                for (int j = 0; j < cols; ++j) design(static_cast<Eigen::Index>(i), j) = row[j];
            }
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
            const Eigen::MatrixXd upper =
                qr.matrixR().topLeftCorner(cols, cols).triangularView<Eigen::Upper>();
            const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(upper).singularValues();
            const double cond = sv[cols - 1] > 0.0 ? sv[0] / sv[cols - 1] : INFINITY;
            if (cond <= max_condition) {
                fit.coefficients = qr.solve(rhs);
                fit.degree = d;
                fit.payoff_column = with_payoff;
                fit.condition_number = cond;
                double sse = 0.0;
                const Eigen::VectorXd resid = rhs - design * fit.coefficients;
                for (Eigen::Index i = 0; i < resid.size(); ++i) sse += resid[i] * resid[i];
                fit.r_squared = total > 0.0 ? 1.0 - sse / total : 1.0;
                const double dof = static_cast<double>(n > static_cast<std::size_t>(cols) ? n - cols : 1);
                fit.residual_std = std::sqrt(sse / dof);
                fit.prediction_se =
                    fit.residual_std * std::sqrt(static_cast<double>(cols) / static_cast<double>(n));
                fit.reduced = reduced;
                return fit;
            }
        }
        reduced = true;
        if (with_payoff) {
            with_payoff = false;
        } else if (d > 0) {
            --d;
        } else {
            break;
        }
    }
    // a single sample with a constant column always has rank one, so this is unreachable
    throw NumericalError("regression design has no usable column");
}

}  // namespace amerikan
