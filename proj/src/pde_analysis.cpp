#include <algorithm>
#include <cmath>
#include <sstream>

#include "amerikan/pde.hpp"
#include "amerikan/quadrature.hpp"

namespace amerikan {

BoundaryCurve extract_boundary(const PdeSolution& sol) {
    BoundaryCurve curve;
    const std::size_t slices = sol.times.size();
    const std::size_t n = sol.grid.n_space;
    const bool put = sol.spec.is_put();
    curve.times = sol.times;
    curve.levels.assign(slices, std::nullopt);
    curve.contact_nodes.assign(slices, 0);

    for (std::size_t k = 0; k < slices; ++k) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) count += sol.in_contact(k, i) ? 1 : 0;
        curve.contact_nodes[k] = count;
        if (count == 0) continue;

        // walk inward from the in-the-money edge; the contact run must start there
        // and hold every contact node
        std::size_t run = 0;
        for (std::size_t step = 0; step < n; ++step) {
            const std::size_t i = put ? step : n - 1 - step;
            if (!sol.in_contact(k, i)) break;
            ++run;
        }
        if (run != count) {
            std::ostringstream why;
            if (run == 0) {
                why << "contact set not anchored at the " << (put ? "low" : "high")
                    << "-price edge";
            } else {
                why << "contact set splits into several intervals (" << count << " nodes, leading run "
                    << run << ")";
            }
            curve.violations.push_back({k, why.str()});
            continue;
        }
        if (run == n) {
            curve.violations.push_back({k, "contact set covers the whole grid"});
            continue;
        }
        // log-midpoint between the last contact node and the first continuation node
        const std::size_t last_contact = put ? run - 1 : n - run;
        const std::size_t first_free = put ? run : n - run - 1;
        const double xi = 0.5 * (std::log(sol.prices[last_contact]) + std::log(sol.prices[first_free]));
        curve.levels[k] = std::exp(xi);
    }
    return curve;
}

void require_valid_boundary(const BoundaryCurve& curve) {
    if (curve.valid()) return;
    std::ostringstream msg;
    msg << curve.violations.size() << " slice(s) violate the single-interval contact structure";
    const std::size_t shown = std::min<std::size_t>(curve.violations.size(), 5);
    for (std::size_t v = 0; v < shown; ++v) {
        const auto& bad = curve.violations[v];
        msg << "; t=" << curve.times[bad.slice] << ": " << bad.reason;
    }
    throw StructuralViolation(msg.str());
}

MeasureDensity reconstruct_measure(const PdeSolution& sol, const MarketParams& params,
                                   const OptionSpec& spec) {
    const std::size_t n = sol.grid.n_space;
    const std::size_t rows = sol.times.size() - 1;
    const double h = sol.grid.log_step();
    const double a = 0.5 * params.sigma * params.sigma;
    const double b = params.rate - params.dividend - a;

    MeasureDensity out;
    out.density = Surface::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    out.residual = Surface::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    out.interior = Mask::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));

    double diff_sum = 0.0;
    double ref_sum = 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
        const double dt = sol.times[k + 1] - sol.times[k];
        const auto K = static_cast<Eigen::Index>(k);
        for (std::size_t i = 0; i < n; ++i) {
            const auto I = static_cast<Eigen::Index>(i);
            const double u = sol.u(K, I);
            const double left = i > 0 ? sol.u(K, I - 1) : sol.lower_bc[k];
            const double right = i + 1 < n ? sol.u(K, I + 1) : sol.upper_bc[k];
            const double later = sol.u(K + 1, I);
            const double u_xixi = (left - 2.0 * u + right) / (h * h);
            const double u_xi = (right - left) / (2.0 * h);
            // r u - (u_t + (r - d - sigma^2/2) u_xi + sigma^2/2 u_xixi), backward in time
            const double residual = params.rate * u - ((later - u) / dt + b * u_xi + a * u_xixi);
            out.residual(K, I) = residual;

            const bool on = sol.in_contact(k, i);
            const double q = on ? exercise_rate(spec, params, sol.prices[i]) : 0.0;
            out.density(K, I) = q;

            const bool interior = on && sol.in_contact(k + 1, i) && i > 0 && i + 1 < n &&
                                  sol.in_contact(k, i - 1) && sol.in_contact(k, i + 1);
            if (interior) {
                out.interior(K, I) = 1;
                ++out.interior_cells;
                diff_sum += std::abs(residual - q);
                ref_sum += std::abs(q);
            }
        }
    }
    out.relative_l1 = ref_sum > 0.0 ? diff_sum / ref_sum : (diff_sum > 0.0 ? INFINITY : 0.0);
    out.max_off_contact = 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!sol.in_contact(k, i)) {
                out.max_off_contact = std::max(
                    out.max_off_contact,
                    std::abs(out.density(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i))));
            }
        }
    }
    return out;
}

namespace {

// Integral over the exercise region of rate(y) p(s, x, t, y) dy, in the
// standardised variable z with y = x exp(mu tau + sigma sqrt(tau) z).
double region_integral(const MarketParams& params, const OptionSpec& spec, const EvalPoint& point,
                       double t, double level, double abs_tol) {
    const double tau = t - point.start;
    const double vol = params.sigma * std::sqrt(tau);
    const double mu = (params.rate - params.dividend - 0.5 * params.sigma * params.sigma) * tau;
    const double x = point.spot;
    constexpr double span = 14.0;
    auto to_z = [&](double y) { return (std::log(y / x) - mu) / vol; };

    double lo = -span;
    double hi = span;
    if (spec.is_put()) {
        hi = std::min(hi, to_z(level));
    } else {
        lo = std::max(lo, to_z(level));
    }
    // the rate itself vanishes beyond r K / d
    if (params.dividend > 0.0) {
        const double cutoff = params.rate * spec.strike / params.dividend;
        if (cutoff <= 0.0) {
            if (spec.is_put()) return 0.0;
        } else if (spec.is_put()) {
            hi = std::min(hi, to_z(cutoff));
        } else {
            lo = std::max(lo, to_z(cutoff));
        }
    } else if (!spec.is_put()) {
        return 0.0;
    }
    if (!(hi > lo)) return 0.0;

    auto integrand = [&](double z) {
        const double y = x * std::exp(mu + vol * z);
        return exercise_rate(spec, params, y) *
               transition_density(params, point.start, x, t, y) * y * vol;
    };
    return integrate(integrand, lo, hi, abs_tol).value;
}

}  // namespace

double eep_premium(const MarketParams& params, const OptionSpec& spec, const EvalPoint& point,
                   const BoundaryCurve& boundary, double abs_tol) {
    params.validate();
    spec.validate();
    point.validate(params);
    if (!(point.spot > 0.0)) throw std::invalid_argument("eep_premium requires x > 0");
    if (driver_vanishes(spec, params)) return 0.0;
    if (boundary.times.size() < 2) throw std::invalid_argument("boundary curve needs two slices");

    // breakpoints: the start, every slice time inside (s, T), and T
    std::vector<double> cuts{point.start};
    for (double t : boundary.times)
        if (t > point.start && t < params.expiry) cuts.push_back(t);
    cuts.push_back(params.expiry);

    const double piece_tol = abs_tol / static_cast<double>(cuts.size());
    // an inner error e moves the outer integral by at most e (T - s)
    const double inner_tol = 1e-2 * abs_tol / (params.expiry - point.start);
    auto outer = [&](double t) {
        if (!(t > point.start)) {
            // limit t -> s: the density collapses onto x
            const auto level = boundary.level_at(point.start);
            if (!level) return 0.0;
            const bool inside = spec.is_put() ? point.spot <= *level : point.spot >= *level;
            return inside ? exercise_rate(spec, params, point.spot) : 0.0;
        }
        const auto level = boundary.level_at(t);
        if (!level) return 0.0;
        const double discount = std::exp(-params.rate * (t - point.start));
        return discount * region_integral(params, spec, point, t, *level, inner_tol);
    };

    double total = 0.0;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
        total += integrate(outer, cuts[j], cuts[j + 1], piece_tol).value;
    }
    return std::max(total, 0.0);
}

}  // namespace amerikan
