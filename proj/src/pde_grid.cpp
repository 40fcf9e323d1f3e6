#include <algorithm>
#include <cmath>
#include <sstream>

#include "amerikan/pde.hpp"

namespace amerikan {

std::string to_string(PdeMethod method) {
    switch (method) {
        case PdeMethod::European: return "european";
        case PdeMethod::Obstacle: return "obstacle";
        case PdeMethod::Penalized: return "penalized";
        case PdeMethod::Semilinear: return "semilinear";
    }
    return "unknown";
}

GridSpec GridSpec::standard(const MarketParams& params, const OptionSpec& spec,
                            std::size_t n_space, std::size_t n_time, Stepping stepping) {
    params.validate();
    spec.validate();
    const double width = 6.0 * params.sigma * std::sqrt(params.expiry);
    return {spec.strike * std::exp(-width), spec.strike * std::exp(width), n_space, n_time,
            stepping};
}

void GridSpec::validate(const OptionSpec& spec) const {
    if (!(x_min > 0.0)) throw std::invalid_argument("grid x_min must be > 0");
    if (!(x_min < spec.strike && spec.strike < x_max))
        throw std::invalid_argument("grid must satisfy x_min < strike < x_max");
    if (n_space < 3) throw std::invalid_argument("grid needs at least 3 interior nodes");
    if (n_time < 1) throw std::invalid_argument("grid needs at least 1 time step");
}

double GridSpec::log_step() const {
    return (std::log(x_max) - std::log(x_min)) / static_cast<double>(n_space + 1);
}

double GridSpec::node(std::ptrdiff_t i) const {
    if (i < 0) return x_min;
    if (i >= static_cast<std::ptrdiff_t>(n_space)) return x_max;
    return std::exp(std::log(x_min) + log_step() * static_cast<double>(i + 1));
}

std::vector<double> GridSpec::nodes() const {
    std::vector<double> out(n_space);
    for (std::size_t i = 0; i < n_space; ++i) out[i] = node(static_cast<std::ptrdiff_t>(i));
    return out;
}

std::optional<double> BoundaryCurve::level_at(double t) const {
    if (times.empty()) return std::nullopt;
    if (t <= times.front()) return levels.front();
    if (t >= times.back()) return levels.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    const auto& a = levels[lo];
    const auto& b = levels[hi];
    if (a && b) {
        const double w = (t - times[lo]) / (times[hi] - times[lo]);
        return (1.0 - w) * *a + w * *b;
    }
    return a ? a : std::nullopt;
}

namespace {

// Extended row value: index -1 and n map to the Dirichlet data.
double extended(const PdeSolution& sol, std::size_t k, std::ptrdiff_t i) {
    const auto n = static_cast<std::ptrdiff_t>(sol.grid.n_space);
    if (i < 0) return sol.lower_bc[k];
    if (i >= n) return sol.upper_bc[k];
    return sol.u(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
}

double extended_log_derivative(const PdeSolution& sol, std::size_t k, std::ptrdiff_t i) {
    const double h = sol.grid.log_step();
    const auto n = static_cast<std::ptrdiff_t>(sol.grid.n_space);
    if (i <= -1) return (extended(sol, k, 0) - extended(sol, k, -1)) / h;
    if (i >= n) return (extended(sol, k, n) - extended(sol, k, n - 1)) / h;
    return (extended(sol, k, i + 1) - extended(sol, k, i - 1)) / (2.0 * h);
}

// Cubic Lagrange in log-price over the extended node set [-1, n].
template <class RowValue>
double interpolate_row(const GridSpec& grid, double x, RowValue&& value) {
    const double h = grid.log_step();
    const double s = (std::log(x) - std::log(grid.x_min)) / h - 1.0;  // fractional node index
    const auto n = static_cast<std::ptrdiff_t>(grid.n_space);
    if (s <= -1.0) return value(-1);
    if (s >= static_cast<double>(n)) return value(n);
    auto base = static_cast<std::ptrdiff_t>(std::floor(s));
    base = std::clamp<std::ptrdiff_t>(base, -1, n - 1);
    const double w = s - static_cast<double>(base);
    if (base - 1 < -1 || base + 2 > n) {
        return (1.0 - w) * value(base) + w * value(base + 1);
    }
    const double f0 = value(base - 1), f1 = value(base), f2 = value(base + 1), f3 = value(base + 2);
    // nodes at -1, 0, 1, 2 relative to base
    const double l0 = -w * (w - 1.0) * (w - 2.0) / 6.0;
    const double l1 = (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0;
    const double l2 = -(w + 1.0) * w * (w - 2.0) / 2.0;
    const double l3 = (w + 1.0) * w * (w - 1.0) / 6.0;
    return l0 * f0 + l1 * f1 + l2 * f2 + l3 * f3;
}

template <class SliceValue>
double interpolate_time(const PdeSolution& sol, double t, SliceValue&& slice_value) {
    const std::size_t last = sol.times.size() - 1;
    if (t <= sol.times.front()) return slice_value(0);
    if (t >= sol.times.back()) return slice_value(last);
    const double dt = sol.times[1] - sol.times[0];
    auto lo = static_cast<std::size_t>(std::floor((t - sol.times.front()) / dt));
    lo = std::min(lo, last - 1);
    const double w = (t - sol.times[lo]) / (sol.times[lo + 1] - sol.times[lo]);
    return (1.0 - w) * slice_value(lo) + w * slice_value(lo + 1);
}

}  // namespace

double PdeSolution::value_at(double t, double x) const {
    if (!(x > 0.0)) throw std::invalid_argument("value_at requires x > 0");
    return interpolate_time(*this, t, [&](std::size_t k) {
        return interpolate_row(grid, x, [&](std::ptrdiff_t i) { return extended(*this, k, i); });
    });
}

double PdeSolution::delta_at(double t, double x) const {
    if (!(x > 0.0)) throw std::invalid_argument("delta_at requires x > 0");
    const double du_dxi = interpolate_time(*this, t, [&](std::size_t k) {
        return interpolate_row(grid, x, [&](std::ptrdiff_t i) {
            return extended_log_derivative(*this, k, i);
        });
    });
    return du_dxi / x;
}

void WeightSpec::validate() const {
    if (!(alpha > 0.75)) throw std::invalid_argument("weight exponent alpha must exceed 3/4");
}

double WeightSpec::rho(double x) const { return std::pow(1.0 + x * x, -alpha); }

double weighted_norm(std::span<const double> values, std::span<const double> prices,
                     const WeightSpec& weight) {
    weight.validate();
    if (values.size() != prices.size())
        throw std::invalid_argument("weighted_norm: values and prices differ in length");
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        const double w0 = weight.rho(prices[i]), w1 = weight.rho(prices[i + 1]);
        const double f0 = values[i] * w0, f1 = values[i + 1] * w1;
        sum += 0.5 * (f0 * f0 + f1 * f1) * (prices[i + 1] - prices[i]);
    }
    return std::sqrt(sum);
}

double weighted_norm(const Surface& surface, std::span<const double> times,
                     std::span<const double> prices, const WeightSpec& weight) {
    if (static_cast<std::size_t>(surface.rows()) != times.size() ||
        static_cast<std::size_t>(surface.cols()) != prices.size())
        throw std::invalid_argument("weighted_norm: surface shape does not match the grid");
    std::vector<double> sq(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const auto row = surface.row(static_cast<Eigen::Index>(k));
        const double n = weighted_norm(std::span<const double>(row.data(), prices.size()), prices,
                                       weight);
        sq[k] = n * n;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < times.size(); ++k)
        sum += 0.5 * (sq[k] + sq[k + 1]) * (times[k + 1] - times[k]);
    if (times.size() == 1) sum = sq[0];
    return std::sqrt(sum);
}

}  // namespace amerikan
