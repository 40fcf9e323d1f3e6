#include "amerikan/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "amerikan/quadrature.hpp"

namespace amerikan {

void TreeConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("tree needs at least one step");
}

namespace {

double tree_price(const MarketParams& params, const OptionSpec& spec, const EvalPoint& point,
                  const TreeConfig& cfg, bool american) {
    params.validate();
    spec.validate();
    point.validate(params);
    cfg.validate();

    const std::size_t n = cfg.steps;
    const double tau = params.expiry - point.start;
    const double dt = tau / static_cast<double>(n);
    const double log_up = params.sigma * std::sqrt(dt);
    const double up = std::exp(log_up);
    const double down = 1.0 / up;
    const double disc = std::exp(-params.rate * dt);
    const double growth = std::exp((params.rate - params.dividend) * dt);
    const double p = (growth - down) / (up - down);

    if (!std::isfinite(up) || !std::isfinite(growth) || !std::isfinite(disc) ||
        log_up * static_cast<double>(n) > 700.0) {
        throw std::overflow_error("lattice node prices overflow for these parameters");
    }
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericalError("risk-neutral up probability " + std::to_string(p) +
                             " outside (0, 1); increase the step count");
    }

    // prices[m] = x * up^{m - n}; level k node j sits at m = 2j - k + n
    std::vector<double> prices(2 * n + 1);
    for (std::size_t m = 0; m <= 2 * n; ++m) {
        prices[m] = point.spot * std::exp(log_up * (static_cast<double>(m) - static_cast<double>(n)));
    }

    std::vector<double> values(n + 1);
    for (std::size_t j = 0; j <= n; ++j) values[j] = payoff(spec, prices[2 * j]);

    const double pu = disc * p;
    const double pd = disc * (1.0 - p);
    const double strike = spec.strike;
    const bool put = spec.is_put();
    for (std::size_t level = n; level-- > 0;) {
        const std::size_t offset = n - level;
        for (std::size_t j = 0; j <= level; ++j) {
            double v = pu * values[j + 1] + pd * values[j];
            if (american) {
                const double s = prices[2 * j + offset];
                const double g = put ? strike - s : s - strike;
                if (g > v) v = g;
            }
            values[j] = v;
        }
    }
    return values[0];
}

}  // namespace

double tree_price_american(const MarketParams& params, const OptionSpec& spec,
                           const EvalPoint& point, const TreeConfig& cfg) {
    return tree_price(params, spec, point, cfg, true);
}

double tree_price_european(const MarketParams& params, const OptionSpec& spec,
                           const EvalPoint& point, const TreeConfig& cfg) {
    return tree_price(params, spec, point, cfg, false);
}

double OracleValue::relative_gap() const {
    const double scale = std::max(std::abs(fine), 1e-300);
    return std::abs(fine - coarse) / scale;
}

OracleValue tree_oracle_american(const MarketParams& params, const OptionSpec& spec,
                                 const EvalPoint& point, std::size_t steps) {
    OracleValue out;
    out.coarse = tree_price_american(params, spec, point, TreeConfig{steps});
    out.fine = tree_price_american(params, spec, point, TreeConfig{2 * steps});
    out.value = 2.0 * out.fine - out.coarse;
    return out;
}

namespace {

struct LogWindow {
    double lo;
    double hi;
};

LogWindow log_window(const MarketParams& params, const EvalPoint& point) {
    const double tau = params.expiry - point.start;
    const double sd = params.sigma * std::sqrt(tau);
    const double mean = std::log(point.spot) +
                        (params.rate - params.dividend - 0.5 * params.sigma * params.sigma) * tau;
    return {mean - 14.0 * sd, mean + sd * sd + 14.0 * sd};
}

// Integrates h(y) p(s, x, T, y) over y in (0, inf) in the variable v = ln y,
// splitting at the strike where the payoff has its kink.
double integrate_against_density(const MarketParams& params, const OptionSpec& spec,
                                 const EvalPoint& point, const std::function<double(double)>& h,
                                 double abs_tol) {
    const LogWindow w = log_window(params, point);
    auto integrand = [&](double v) {
        const double y = std::exp(v);
        return h(y) * transition_density(params, point.start, point.spot, params.expiry, y) * y;
    };
    const double kink = std::log(spec.strike);
    if (kink <= w.lo || kink >= w.hi) return integrate(integrand, w.lo, w.hi, abs_tol).value;
    return integrate(integrand, w.lo, kink, 0.5 * abs_tol).value +
           integrate(integrand, kink, w.hi, 0.5 * abs_tol).value;
}

}  // namespace

double european_quadrature(const MarketParams& params, const OptionSpec& spec,
                           const EvalPoint& point) {
    params.validate();
    spec.validate();
    point.validate(params);
    if (!(point.spot > 0.0)) throw std::invalid_argument("european_quadrature requires x > 0");
    const double tau = params.expiry - point.start;
    const double disc = std::exp(-params.rate * tau);
    const double integral = integrate_against_density(
        params, spec, point, [&](double y) { return payoff(spec, y); }, 1e-10);
    return disc * integral;
}

double european_quadrature_delta(const MarketParams& params, const OptionSpec& spec,
                                 const EvalPoint& point) {
    params.validate();
    spec.validate();
    point.validate(params);
    if (!(point.spot > 0.0)) throw std::invalid_argument("european delta requires x > 0");
    const double tau = params.expiry - point.start;
    const double disc = std::exp(-params.rate * tau);
    const double x = point.spot;
    const double strike = spec.strike;
    const bool put = spec.is_put();
    const double integral = integrate_against_density(
        params, spec, point,
        [&](double y) {
            if (put) return y < strike ? -y / x : 0.0;
            return y > strike ? y / x : 0.0;
        },
        1e-10);
    return disc * integral;
}

}  // namespace amerikan
