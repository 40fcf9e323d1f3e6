#include "amerikan/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/toms748_solve.hpp>

namespace amerikan {

namespace {

constexpr std::uint64_t low_bias_stream = 0x4c4f5742494153ULL;

void check_inputs(const std::shared_ptr<const PathBundle>& paths, const OptionSpec& spec,
                  const MarketParams& params, const RegressionBasis& basis) {
    if (!paths) throw std::invalid_argument("path bundle is null");
    params.validate();
    spec.validate();
    basis.validate();
    if (paths->n_times() < 2) throw std::invalid_argument("path bundle needs at least one step");
    if (paths->n_paths() < 2) throw std::invalid_argument("path bundle needs at least two paths");
    if (std::abs(paths->schedule.end() - params.expiry) > 1e-12 * std::max(1.0, params.expiry))
        throw std::invalid_argument("path schedule must end at the expiry");
}

std::vector<double> discount_factors(const PathBundle& paths, const MarketParams& params) {
    std::vector<double> out(paths.n_times());
    const double s = paths.schedule.start();
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = std::exp(-params.rate * (paths.schedule.time(k) - s));
    return out;
}

Estimate mean_and_se(std::span<const double> v) {
    const std::size_t n = v.size();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

void note_reduction(BsdeSolution& sol, std::size_t k, const char* what, const RegressionFit& fit,
                    int requested) {
    if (!fit.reduced || fit.samples == 0) return;
    std::ostringstream msg;
    msg << "step " << k << ": " << what << " regression reduced to degree " << fit.degree
        << (fit.payoff_column ? " with payoff" : "") << " from " << requested << " ("
        << fit.samples << " samples)";
    sol.warnings.push_back(msg.str());
}

// Z regression at step k: (Ytilde_{k+1} - Ytilde_k) dW / dt against the full basis.
RegressionFit fit_gradient(const PathBundle& paths, const OptionSpec& spec,
                           const MarketParams& params, std::span<const double> next_disc,
                           std::span<const double> centre, std::size_t k, int degree,
                           std::span<const std::size_t> all_rows, std::vector<double>& work) {
    const std::size_t m = paths.n_paths();
    const double dt = paths.schedule.dt(k);
    work.resize(m);
    const auto x0 = paths.slice(k);
    const auto x1 = paths.slice(k + 1);
    for (std::size_t p = 0; p < m; ++p) {
        const double dw = brownian_increment(params, x0[p], x1[p], dt);
        work[p] = (next_disc[p] - centre[p]) * dw / dt;
    }
    if (k == 0) return fit_regression(spec, x0, work, all_rows, 0, false);
    return fit_regression(spec, x0, work, all_rows, degree, true);
}


// Value the reflected scheme assigns at t_{k+1} to a price y, max(payoff, fitted
// continuation), undiscounted. At the last time it is the payoff.
class FittedValue {
public:
    FittedValue(const BsdeSolution& sol, std::size_t k1)
        : sol_(sol), k1_(k1), terminal_(k1 >= sol.fits.size()), disc_(sol.discount(k1)) {}

    double continuation(double y) const {
        const auto& f = sol_.fits[k1_];
        const bool stop_fit = payoff(sol_.spec, y) > 0.0 || !sol_.basis.itm_only;
        return (stop_fit ? f.continuation : f.value).evaluate(sol_.spec, y) / disc_;
    }
    double operator()(double y) const {
        const double g = payoff(sol_.spec, y);
        return terminal_ ? g : std::max(g, continuation(y));
    }

    /// Prices in (lo, hi) where the value has a kink or jump: the strike and the
    /// crossings of the fitted continuation with the payoff.
    std::vector<double> kinks(double lo, double hi) const {
        const double strike = sol_.spec.strike;
        std::vector<double> out;
        if (strike > lo && strike < hi) out.push_back(strike);
        if (terminal_) return out;
        constexpr int scan = 2048;
        const double step = std::log(hi / lo) / scan;
        auto gap = [&](double y) { return continuation(y) - payoff(sol_.spec, y); };
        double y_prev = lo;
        double f_prev = gap(lo);
        for (int i = 1; i <= scan; ++i) {
            const double y = lo * std::exp(step * i);
            const double f = gap(y);
            const bool same_side = (y_prev < strike) == (y < strike);
            if (same_side && ((f_prev < 0.0) != (f < 0.0)) && f_prev != 0.0) {
                boost::uintmax_t iters = 60;
                const auto root = boost::math::tools::toms748_solve(
                    gap, y_prev, y, f_prev, f,
                    [](double a, double b) { return std::abs(b - a) <= 1e-13 * std::max(1.0, a); },
                    iters);
                out.push_back(0.5 * (root.first + root.second));
            }
            y_prev = y;
            f_prev = f;
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    const BsdeSolution& sol_;
    std::size_t k1_;
    bool terminal_;
    double disc_;
};

struct OneStepMoments {
    double mean = 0.0;  ///< E[f(X_{k+1}) | X_k = x]
    double slope = 0.0; ///< E[f(X_{k+1}) Z | X_k = x], Z the standard normal driving the step
};

// Gauss-Legendre panels over z in [-span, span], split at the kinks of f.
OneStepMoments one_step_moments(const FittedValue& f, std::span<const double> kinks, double x,
                                double drift, double vol) {
    using rule = boost::math::quadrature::gauss<double, 20>;
    constexpr double span = 9.0;
    constexpr double panel = 1.0;
    std::vector<double> cuts{-span};
    for (double b : kinks) {
        const double z = (std::log(b / x) - drift) / vol;
        if (z > -span && z < span) cuts.push_back(z);
    }
    cuts.push_back(span);
    const double norm = 1.0 / std::sqrt(2.0 * M_PI);
    OneStepMoments out;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
        const double a = cuts[j];
        const double b = cuts[j + 1];
        const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / panel)));
        const double w = (b - a) / pieces;
        for (int i = 0; i < pieces; ++i) {
            const double lo = a + w * i;
            const double hi = lo + w;
            out.mean += rule::integrate(
                [&](double z) { return f(x * std::exp(drift + vol * z)) * norm * std::exp(-0.5 * z * z); },
                lo, hi);
            out.slope += rule::integrate(
                [&](double z) {
                    return f(x * std::exp(drift + vol * z)) * z * norm * std::exp(-0.5 * z * z);
                },
                lo, hi);
        }
    }
    return out;
}

// Continuation value at t_k, e^{-r dt} E[fitted value at t_{k+1}], on the prices
// in xs. Tabulated on a log grid and splined when there are many prices.
std::vector<double> quadrature_continuation(const BsdeSolution& sol, std::size_t k,
                                            std::span<const double> xs) {
    std::vector<double> out(xs.size());
    if (xs.empty()) return out;
    const MarketParams& params = sol.params;
    const double dt = sol.paths->schedule.dt(k);
    const double drift = (params.rate - params.dividend - 0.5 * params.sigma * params.sigma) * dt;
    const double vol = params.sigma * std::sqrt(dt);
    const double step_disc = std::exp(-params.rate * dt);
    const FittedValue value(sol, k + 1);

    const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const auto kinks = value.kinks(lo * std::exp(drift - 10.0 * vol), hi * std::exp(drift + 10.0 * vol));
    auto direct = [&](double x) { return step_disc * one_step_moments(value, kinks, x, drift, vol).mean; };

    constexpr std::size_t table = 257;
    if (xs.size() <= table || hi <= lo * (1.0 + 1e-9)) {
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = direct(xs[i]);
        return out;
    }
    const double left = std::log(lo);
    const double h = (std::log(hi) - left) / static_cast<double>(table - 1);
    std::vector<double> samples(table);
    for (std::size_t i = 0; i < table; ++i) samples[i] = direct(std::exp(left + h * static_cast<double>(i)));
    const boost::math::interpolators::cardinal_cubic_b_spline<double> spline(samples.data(), table, left, h);
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = spline(std::log(xs[i]));
    return out;
}

}  // namespace

std::string to_string(BsdeMethod method) {
    return method == BsdeMethod::ReflectedSnell ? "reflected-snell" : "driver-bsde";
}

double BsdeSolution::discount(std::size_t k) const {
    return std::exp(-params.rate * (paths->schedule.time(k) - paths->schedule.start()));
}

BsdeSolution snell_lsmc(std::shared_ptr<const PathBundle> paths, const OptionSpec& spec,
                        const MarketParams& params, const RegressionBasis& basis,
                        const LsmcOptions& options) {
    check_inputs(paths, spec, params, basis);
    const PathBundle& bundle = *paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t steps = bundle.schedule.steps();
    const auto disc = discount_factors(bundle, params);

    BsdeSolution sol;
    sol.method = BsdeMethod::ReflectedSnell;
    sol.paths = paths;
    sol.params = params;
    sol.spec = spec;
    sol.basis = basis;
    sol.y.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps + 1));
    sol.z.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps + 1));
    sol.fits.resize(steps);

    std::vector<std::size_t> all_rows(m);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    std::vector<std::size_t> itm_rows;
    itm_rows.reserve(m);

    // cash: realized discounted cashflow of the current stopping rule
    std::vector<double> cash(m), next_disc(m), current_disc(m), work;
    {
        const auto xt = bundle.slice(steps);
        for (std::size_t p = 0; p < m; ++p) {
            const double g = payoff(spec, xt[p]);
            sol.y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(steps)) = g;
            cash[p] = disc[steps] * g;
            next_disc[p] = cash[p];
        }
    }

    for (std::size_t k = steps; k-- > 0;) {
        const auto x = bundle.slice(k);
        auto& fits = sol.fits[k];
        if (k == 0) {
            fits.continuation = fit_regression(spec, x, cash, all_rows, 0, false);
            fits.value = fits.continuation;
        } else {
            itm_rows.clear();
            for (std::size_t p = 0; p < m; ++p)
                if (payoff(spec, x[p]) > 0.0) itm_rows.push_back(p);
            const std::span<const double> target =
                options.regressand == LsmcRegressand::Cashflow ? std::span<const double>(cash)
                                                               : std::span<const double>(next_disc);
            if (basis.itm_only) {
                fits.continuation = fit_regression(spec, x, target, itm_rows, basis.degree, false);
            } else {
                fits.continuation = fit_regression(spec, x, target, all_rows, basis.degree, true);
            }
            fits.value = fit_regression(spec, x, target, all_rows, basis.degree, true);
            note_reduction(sol, k, "continuation", fits.continuation, basis.degree);
            note_reduction(sol, k, "value", fits.value, basis.degree);
        }

        for (std::size_t p = 0; p < m; ++p) {
            const double g = payoff(spec, x[p]);
            const bool itm = g > 0.0;
            const bool stop_fit = itm || !basis.itm_only || k == 0;
            const double cont = (stop_fit ? fits.continuation : fits.value).evaluate(spec, x[p]) / disc[k];
            const double y = std::max(g, cont);
            if (itm && g >= cont) cash[p] = disc[k] * g;
            sol.y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) = y;
            current_disc[p] = disc[k] * y;
        }

        fits.gradient = fit_gradient(bundle, spec, params, next_disc, current_disc, k, basis.degree,
                                     all_rows, work);
        for (std::size_t p = 0; p < m; ++p)
            sol.z(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) =
                fits.gradient.evaluate(spec, x[p]) / disc[k];
        std::swap(next_disc, current_disc);
    }
    sol.z.col(static_cast<Eigen::Index>(steps)) = sol.z.col(static_cast<Eigen::Index>(steps - 1));

    const double g0 = payoff(spec, bundle.spot);
    const Estimate in_sample = mean_and_se(cash);
    sol.y0 = in_sample;
    if (g0 > 0.0 && g0 >= sol.fits[0].continuation.evaluate(spec, bundle.spot)) sol.y0 = {g0, 0.0};

    sol.k = doob_meyer_K(sol, spec, params);

    if (options.low_bias) {
        const std::size_t n_low = options.low_bias_paths ? options.low_bias_paths : m;
        const PathBundle fresh =
            simulate_paths(params, {bundle.schedule.start(), bundle.spot}, bundle.schedule, n_low,
                           substream_seed(bundle.seed, low_bias_stream), options.simulation);
        std::vector<double> value(n_low);
        const bool stop_now = g0 > 0.0 && g0 >= sol.fits[0].continuation.evaluate(spec, bundle.spot);
        for (std::size_t p = 0; p < n_low; ++p) {
            if (stop_now) {
                value[p] = g0;
                continue;
            }
            double v = disc[steps] * payoff(spec, fresh.at(p, steps));
            for (std::size_t k = 1; k < steps; ++k) {
                const double xk = fresh.at(p, k);
                const double g = payoff(spec, xk);
                if (g <= 0.0) continue;
                if (disc[k] * g >= sol.fits[k].continuation.evaluate(spec, xk)) {
                    v = disc[k] * g;
                    break;
                }
            }
            value[p] = v;
        }
        sol.y0_low = mean_and_se(value);
    }
    return sol;
}

Eigen::MatrixXd doob_meyer_K(const BsdeSolution& sol, const OptionSpec& spec,
                             const MarketParams& params) {
    (void)params;
    if (sol.method != BsdeMethod::ReflectedSnell)
        throw std::invalid_argument("Doob-Meyer extraction needs a reflected solution");
    const PathBundle& bundle = *sol.paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t steps = bundle.schedule.steps();
    Eigen::MatrixXd k_out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                                  static_cast<Eigen::Index>(steps + 1));
    std::vector<std::size_t> nodes;
    std::vector<double> prices;
    for (std::size_t k = 0; k < steps; ++k) {
        const auto x = bundle.slice(k);
        const auto col = static_cast<Eigen::Index>(k);
        // reflection binds where the scheme stopped: Y = payoff > 0
        nodes.clear();
        prices.clear();
        for (std::size_t p = 0; p < m; ++p) {
            const double g = payoff(spec, x[p]);
            if (g > 0.0 && sol.y(static_cast<Eigen::Index>(p), col) == g) {
                nodes.push_back(p);
                prices.push_back(x[p]);
            }
        }
        k_out.col(col + 1) = k_out.col(col);
        const auto cont = quadrature_continuation(sol, k, prices);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(nodes[i]);
            k_out(row, col + 1) += std::max(payoff(spec, prices[i]) - cont[i], 0.0);
        }
    }
    return k_out;
}

ContactMatrix contact_from_pde(const PathBundle& paths, const OptionSpec& spec,
                               const PdeSolution& pde) {
    require_valid_boundary(pde.boundary);
    const std::size_t m = paths.n_paths();
    const std::size_t n_times = paths.n_times();
    ContactMatrix out = ContactMatrix::Zero(static_cast<Eigen::Index>(m),
                                            static_cast<Eigen::Index>(n_times));
    for (std::size_t k = 0; k < n_times; ++k) {
        const auto level = pde.boundary.level_at(paths.schedule.time(k));
        if (!level) continue;
        const auto x = paths.slice(k);
        for (std::size_t p = 0; p < m; ++p) {
            const bool inside = spec.is_put() ? x[p] <= *level : x[p] >= *level;
            out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) =
                (inside && payoff(spec, x[p]) > 0.0) ? 1 : 0;
        }
    }
    return out;
}

ContactMatrix contact_from_values(const BsdeSolution& sol, double tol) {
    const PathBundle& bundle = *sol.paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t n_times = bundle.n_times();
    ContactMatrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n_times));
    for (std::size_t k = 0; k < n_times; ++k) {
        const auto x = bundle.slice(k);
        for (std::size_t p = 0; p < m; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            const auto col = static_cast<Eigen::Index>(k);
            const double g = payoff(sol.spec, x[p]);
            out(row, col) = (g > 0.0 && std::abs(sol.y(row, col) - g) <= tol) ? 1 : 0;
        }
    }
    return out;
}

Eigen::MatrixXd k_formula(const PathBundle& paths, const OptionSpec& spec,
                          const MarketParams& params, const ContactMatrix& contact) {
    const std::size_t m = paths.n_paths();
    const std::size_t steps = paths.schedule.steps();
    if (static_cast<std::size_t>(contact.rows()) != m ||
        static_cast<std::size_t>(contact.cols()) < steps)
        throw std::invalid_argument("contact matrix does not match the path bundle");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                                static_cast<Eigen::Index>(steps + 1));
    for (std::size_t k = 0; k < steps; ++k) {
        const double dt = paths.schedule.dt(k);
        const auto x = paths.slice(k);
        const auto col = static_cast<Eigen::Index>(k);
        for (std::size_t p = 0; p < m; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            const double inc = contact(row, col) ? dt * exercise_rate(spec, params, x[p]) : 0.0;
            out(row, col + 1) = out(row, col) + inc;
        }
    }
    return out;
}

std::vector<double> increment_standard_errors(const BsdeSolution& sol) {
    std::vector<double> out(sol.fits.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = sol.fits[k].continuation.prediction_se / sol.discount(k);
    return out;
}

BoundCheck prop21_bound_check(const Eigen::MatrixXd& k, const PathBundle& paths,
                              const OptionSpec& spec, const MarketParams& params,
                              const ContactMatrix& contact, std::span<const double> step_se,
                              double sigmas) {
    const std::size_t m = paths.n_paths();
    const std::size_t steps = paths.schedule.steps();
    if (static_cast<std::size_t>(k.rows()) != m || static_cast<std::size_t>(k.cols()) != steps + 1)
        throw std::invalid_argument("K matrix does not match the path bundle");
    if (step_se.size() < steps) throw std::invalid_argument("need one standard error per step");

    std::vector<double> var_prefix(steps + 1, 0.0);
    for (std::size_t l = 0; l < steps; ++l) var_prefix[l + 1] = var_prefix[l] + step_se[l] * step_se[l];

    BoundCheck report;
    std::vector<double> formula(steps + 1);
    for (std::size_t p = 0; p < m; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        formula[0] = 0.0;
        for (std::size_t l = 0; l < steps; ++l) {
            const auto col = static_cast<Eigen::Index>(l);
            const double rate = contact(row, col) ? exercise_rate(spec, params, paths.at(p, l)) : 0.0;
            formula[l + 1] = formula[l] + paths.schedule.dt(l) * rate;
        }
        for (std::size_t i = 0; i < steps; ++i) {
            const double k_i = k(row, static_cast<Eigen::Index>(i));
            for (std::size_t j = i + 1; j <= steps; ++j) {
                const double excess = (k(row, static_cast<Eigen::Index>(j)) - k_i) - (formula[j] - formula[i]);
                report.max_violation = std::max(report.max_violation, excess);
                if (excess > sigmas * std::sqrt(var_prefix[j] - var_prefix[i])) ++report.violations;
            }
        }
        report.pairs += steps * (steps + 1) / 2;
    }
    return report;
}

BsdeSolution driver_bsde_solve(std::shared_ptr<const PathBundle> paths, const OptionSpec& spec,
                               const MarketParams& params, const RegressionBasis& basis,
                               const DriverOptions& options) {
    check_inputs(paths, spec, params, basis);
    const PathBundle& bundle = *paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t steps = bundle.schedule.steps();
    for (std::size_t k = 0; k < steps; ++k) {
        if (!(bundle.schedule.dt(k) * params.rate < 1.0))
            throw std::invalid_argument("driver scheme needs dt * r < 1 on every step");
    }
    const auto disc = discount_factors(bundle, params);
    const double eps = contact_epsilon(spec);

    BsdeSolution sol;
    sol.method = BsdeMethod::DriverBsde;
    sol.paths = paths;
    sol.params = params;
    sol.spec = spec;
    sol.basis = basis;
    sol.y.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps + 1));
    sol.z.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps + 1));
    sol.k = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps + 1));
    sol.fits.resize(steps);

    std::vector<std::size_t> all_rows(m);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    // regressand: discounted realized value of the scheme along each path
    std::vector<double> realized(m), next_disc(m), current_disc(m), fitted(m), work;
    // q dt per node, accumulated into K after the backward pass
    Eigen::MatrixXd q_dt = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                                 static_cast<Eigen::Index>(steps));
    {
        const auto xt = bundle.slice(steps);
        for (std::size_t p = 0; p < m; ++p) {
            const double g = payoff(spec, xt[p]);
            sol.y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(steps)) = g;
            realized[p] = disc[steps] * g;
            next_disc[p] = realized[p];
        }
    }

    for (std::size_t k = steps; k-- > 0;) {
        const auto x = bundle.slice(k);
        const double dt = bundle.schedule.dt(k);
        const double growth = 1.0 + params.rate * dt;
        auto& fits = sol.fits[k];
        std::span<const double> target = options.multi_step ? std::span<const double>(realized)
                                                            : std::span<const double>(next_disc);
        if (k == 0) {
            fits.value = fit_regression(spec, x, target, all_rows, 0, false);
            fits.continuation = fits.value;
        } else {
            fits.value = fit_regression(spec, x, target, all_rows, basis.degree, true);
            note_reduction(sol, k, "value", fits.value, basis.degree);
            // the driver's contact decision needs the value on both sides of the
            // strike, where the payoff column carries the kink
            fits.continuation = fits.value;
        }
        for (std::size_t p = 0; p < m; ++p) fitted[p] = fits.value.evaluate(spec, x[p]);
        fits.gradient = fit_gradient(bundle, spec, params, target, fitted, k, basis.degree,
                                     all_rows, work);

        for (std::size_t p = 0; p < m; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            // conditional expectation of the next value, in time-t_{k+1} units
            const double a = fitted[p] / disc[k + 1];
            const double g = payoff(spec, x[p]);
            const double c = exercise_rate(spec, params, x[p]);
            // y (1 + r dt) = a + dt c 1{y <= g}; the left side increases in y and the
            // right side decreases, so exactly one branch is consistent
            double y = 0.0;
            double share = 0.0;
            const double with_rate = (a + dt * c) / growth;
            const double without = a / growth;
            if (c > 0.0 && with_rate <= g + eps) {
                y = with_rate;
                share = 1.0;
            } else if (without > g + eps || c == 0.0) {
                y = without;
                share = 0.0;
            } else {
                y = g;
                share = std::clamp((g * growth - a) / (dt * c), 0.0, 1.0);
                ++sol.filippov_nodes;
            }
            sol.y(row, static_cast<Eigen::Index>(k)) = y;
            q_dt(row, static_cast<Eigen::Index>(k)) = dt * share * c;
            current_disc[p] = disc[k] * y;
            const double next_value = realized[p] / disc[k + 1];
            realized[p] = disc[k] * (next_value + dt * share * c) / growth;
        }

        for (std::size_t p = 0; p < m; ++p)
            sol.z(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) =
                fits.gradient.evaluate(spec, x[p]) / disc[k];
        if (!options.multi_step) std::copy(current_disc.begin(), current_disc.end(), realized.begin());
        std::swap(next_disc, current_disc);
    }
    sol.z.col(static_cast<Eigen::Index>(steps)) = sol.z.col(static_cast<Eigen::Index>(steps - 1));
    for (std::size_t k = 0; k < steps; ++k)
        sol.k.col(static_cast<Eigen::Index>(k + 1)) =
            sol.k.col(static_cast<Eigen::Index>(k)) + q_dt.col(static_cast<Eigen::Index>(k));

    sol.y0.value = sol.y(0, 0);
    if (options.multi_step) {
        sol.y0.std_error = mean_and_se(realized).std_error;
    } else {
        // one-step regressand: the spread of the discounted next values
        std::vector<double> next(m);
        for (std::size_t p = 0; p < m; ++p) next[p] = sol.y(static_cast<Eigen::Index>(p), 1) * disc[1];
        sol.y0.std_error = mean_and_se(next).std_error / (1.0 + params.rate * bundle.schedule.dt(0));
    }
    return sol;
}

double skorokhod_sum(const BsdeSolution& sol, const Eigen::MatrixXd& k) {
    const PathBundle& bundle = *sol.paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t steps = bundle.schedule.steps();
    double total = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        double path_sum = 0.0;
        for (std::size_t j = 0; j < steps; ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            const double gap = sol.y(row, col) - payoff(sol.spec, bundle.at(p, j));
            path_sum += gap * (k(row, col + 1) - k(row, col));
        }
        total += path_sum;
    }
    return total / static_cast<double>(m);
}

Estimate discounted_k_total(const BsdeSolution& sol, const Eigen::MatrixXd& k) {
    const std::size_t m = sol.n_paths();
    const std::size_t steps = sol.paths->schedule.steps();
    std::vector<double> disc(steps);
    for (std::size_t j = 0; j < steps; ++j) disc[j] = sol.discount(j);
    std::vector<double> totals(m);
    for (std::size_t p = 0; p < m; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        double t = 0.0;
        for (std::size_t j = 0; j < steps; ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            t += disc[j] * (k(row, col + 1) - k(row, col));
        }
        totals[p] = t;
    }
    return mean_and_se(totals);
}

}  // namespace amerikan
