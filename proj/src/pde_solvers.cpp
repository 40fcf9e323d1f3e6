#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "amerikan/pde.hpp"

namespace amerikan {

namespace {

// Spatial part of L_BS - r in log-price with central differences.
struct Stencil {
    double lower = 0.0;
    double centre = 0.0;
    double upper = 0.0;
};

Stencil make_stencil(const MarketParams& params, double h) {
    const double a = 0.5 * params.sigma * params.sigma;
    const double b = params.rate - params.dividend - a;
    return {a / (h * h) - b / (2.0 * h), -2.0 * a / (h * h) - params.rate,
            a / (h * h) + b / (2.0 * h)};
}

struct DirichletData {
    double lower = 0.0;
    double upper = 0.0;
};

DirichletData dirichlet(const MarketParams& params, const OptionSpec& spec, const GridSpec& grid,
                        double t) {
    const double tau = params.expiry - t;
    if (spec.is_put()) return {payoff(spec, grid.x_min), 0.0};
    const double forward = grid.x_max * std::exp(-params.dividend * tau) -
                           spec.strike * std::exp(-params.rate * tau);
    return {0.0, std::max(forward, payoff(spec, grid.x_max))};
}

// One theta-scheme sub-step: A u = rhs with A = I - theta dt L (constant tridiagonal).
struct StepSystem {
    double lower = 0.0;
    double diag = 0.0;
    double upper = 0.0;
    double dt = 0.0;
    double theta = 1.0;
    double time = 0.0;  ///< time of the new level
    std::vector<double> rhs;
};

// Thomas algorithm with per-node diagonal.
void solve_tridiagonal(double lower, std::span<const double> diag, double upper,
                       std::span<const double> rhs, std::span<double> out,
                       std::vector<double>& scratch_c, std::vector<double>& scratch_d) {
    const std::size_t n = diag.size();
    scratch_c.resize(n);
    scratch_d.resize(n);
    scratch_c[0] = upper / diag[0];
    scratch_d[0] = rhs[0] / diag[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double denom = diag[i] - lower * scratch_c[i - 1];
        scratch_c[i] = upper / denom;
        scratch_d[i] = (rhs[i] - lower * scratch_d[i - 1]) / denom;
    }
    out[n - 1] = scratch_d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) out[i] = scratch_d[i] - scratch_c[i] * out[i + 1];
}

// Thomas algorithm with per-row coefficients.
void solve_tridiagonal_rows(std::span<const double> lower, std::span<const double> diag,
                            std::span<const double> upper, std::span<const double> rhs,
                            std::span<double> out, std::vector<double>& scratch_c,
                            std::vector<double>& scratch_d) {
    const std::size_t n = diag.size();
    scratch_c.resize(n);
    scratch_d.resize(n);
    scratch_c[0] = upper[0] / diag[0];
    scratch_d[0] = rhs[0] / diag[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double denom = diag[i] - lower[i] * scratch_c[i - 1];
        scratch_c[i] = upper[i] / denom;
        scratch_d[i] = (rhs[i] - lower[i] * scratch_d[i - 1]) / denom;
    }
    out[n - 1] = scratch_d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) out[i] = scratch_d[i] - scratch_c[i] * out[i + 1];
}

double row_product(const StepSystem& sys, std::span<const double> u, std::size_t i) {
    const std::size_t n = u.size();
    double v = sys.diag * u[i];
    if (i > 0) v += sys.lower * u[i - 1];
    if (i + 1 < n) v += sys.upper * u[i + 1];
    return v;
}

// Sup over nodes of |min(u - g, A u - b)|.
double lcp_residual(const StepSystem& sys, std::span<const double> u, std::span<const double> g) {
    double worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = std::min(u[i] - g[i], row_product(sys, u, i) - sys.rhs[i]);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

// Direct projected solve, exact when the exercise region is one interval at
// the in-the-money end of the grid.
void brennan_schwartz(const StepSystem& sys, std::span<const double> g, bool put,
                      std::span<double> out) {
    const std::size_t n = g.size();
    std::vector<double> d(n), r(n);
    if (put) {
        d[n - 1] = sys.diag;
        r[n - 1] = sys.rhs[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) {
            const double m = sys.upper / d[i + 1];
            d[i] = sys.diag - m * sys.lower;
            r[i] = sys.rhs[i] - m * r[i + 1];
        }
        out[0] = std::max(g[0], r[0] / d[0]);
        for (std::size_t i = 1; i < n; ++i)
            out[i] = std::max(g[i], (r[i] - sys.lower * out[i - 1]) / d[i]);
    } else {
        d[0] = sys.diag;
        r[0] = sys.rhs[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double m = sys.lower / d[i - 1];
            d[i] = sys.diag - m * sys.upper;
            r[i] = sys.rhs[i] - m * r[i - 1];
        }
        out[n - 1] = std::max(g[n - 1], r[n - 1] / d[n - 1]);
        for (std::size_t i = n - 1; i-- > 0;)
            out[i] = std::max(g[i], (r[i] - sys.upper * out[i + 1]) / d[i]);
    }
}

struct Marcher {
    const MarketParams& params;
    const OptionSpec& spec;
    const GridSpec& grid;
    PdeSolution sol;
    Stencil stencil;

    Marcher(const MarketParams& p, const OptionSpec& s, const GridSpec& g, const PdeTolerances& tol,
            PdeMethod method)
        : params(p), spec(s), grid(g) {
        params.validate();
        spec.validate();
        grid.validate(spec);
        sol.grid = grid;
        sol.params = params;
        sol.spec = spec;
        sol.method = method;
        sol.tolerances = tol;
        const std::size_t n = grid.n_space;
        const std::size_t slices = grid.n_time + 1;
        sol.prices = grid.nodes();
        sol.obstacle.resize(n);
        for (std::size_t i = 0; i < n; ++i) sol.obstacle[i] = payoff(spec, sol.prices[i]);
        sol.times.resize(slices);
        for (std::size_t k = 0; k < slices; ++k)
            sol.times[k] = params.expiry * static_cast<double>(k) / static_cast<double>(grid.n_time);
        sol.times.back() = params.expiry;
        sol.lower_bc.resize(slices);
        sol.upper_bc.resize(slices);
        for (std::size_t k = 0; k < slices; ++k) {
            const auto bc = dirichlet(params, spec, grid, sol.times[k]);
            sol.lower_bc[k] = bc.lower;
            sol.upper_bc[k] = bc.upper;
        }
        // terminal slice carries the exact payoff on both the grid and its ends
        sol.lower_bc.back() = payoff(spec, grid.x_min);
        sol.upper_bc.back() = payoff(spec, grid.x_max);
        sol.u.resize(static_cast<Eigen::Index>(slices), static_cast<Eigen::Index>(n));
        stencil = make_stencil(params, grid.log_step());
    }

    // step(system, previous level, new level) must fill the new level.
    template <class Step>
    void run(Step&& step) {
        const std::size_t n = grid.n_space;
        const std::size_t last = grid.n_time;
        std::vector<double> current(sol.obstacle.begin(), sol.obstacle.end());
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) sol.u(static_cast<Eigen::Index>(last), static_cast<Eigen::Index>(i)) = current[i];

        double lower_prev = sol.lower_bc[last];
        double upper_prev = sol.upper_bc[last];
        for (std::size_t k = last; k-- > 0;) {
            const double t_hi = sol.times[k + 1];
            const double t_lo = sol.times[k];
            const bool rannacher = grid.stepping == Stepping::CrankNicolsonRannacher;
            const std::size_t from_end = last - 1 - k;
            const bool startup = rannacher && from_end < 2;
            const std::size_t substeps = startup ? 2 : 1;
            const double theta = (rannacher && !startup) ? 0.5 : 1.0;
            const double h = (t_hi - t_lo) / static_cast<double>(substeps);
            for (std::size_t sub = 0; sub < substeps; ++sub) {
                const double t_new = (sub + 1 == substeps) ? t_lo : t_hi - h * static_cast<double>(sub + 1);
                const auto bc = (sub + 1 == substeps) ? DirichletData{sol.lower_bc[k], sol.upper_bc[k]}
                                                      : dirichlet(params, spec, grid, t_new);
                StepSystem sys;
                sys.dt = h;
                sys.theta = theta;
                sys.time = t_new;
                sys.lower = -theta * h * stencil.lower;
                sys.diag = 1.0 - theta * h * stencil.centre;
                sys.upper = -theta * h * stencil.upper;
                sys.rhs.resize(n);
                const double explicit_weight = (1.0 - theta) * h;
                for (std::size_t i = 0; i < n; ++i) {
                    double rhs = current[i];
                    if (explicit_weight > 0.0) {
                        const double left = i > 0 ? current[i - 1] : lower_prev;
                        const double right = i + 1 < n ? current[i + 1] : upper_prev;
                        rhs += explicit_weight * (stencil.lower * left + stencil.centre * current[i] +
                                                  stencil.upper * right);
                    }
                    sys.rhs[i] = rhs;
                }
                sys.rhs[0] += theta * h * stencil.lower * bc.lower;
                sys.rhs[n - 1] += theta * h * stencil.upper * bc.upper;
                step(static_cast<const StepSystem&>(sys), std::span<const double>(current),
                     std::span<double>(next));
                std::swap(current, next);
                lower_prev = bc.lower;
                upper_prev = bc.upper;
            }
            for (std::size_t i = 0; i < n; ++i)
                sol.u(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = current[i];
        }
    }

    PdeSolution finish() {
        const std::size_t slices = sol.times.size();
        const std::size_t n = grid.n_space;
        const double eps = sol.contact_tolerance();
        sol.contact.resize(static_cast<Eigen::Index>(slices), static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < slices; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const double u = sol.u(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
                const double g = sol.obstacle[i];
                sol.contact(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
                    (g > eps && u - g <= eps) ? 1 : 0;
            }
        }
        sol.boundary = extract_boundary(sol);
        return std::move(sol);
    }
};

}  // namespace

PdeSolution solve_european(const MarketParams& params, const OptionSpec& spec,
                           const GridSpec& grid) {
    Marcher m(params, spec, grid, PdeTolerances{}, PdeMethod::European);
    std::vector<double> diag(grid.n_space), c, d;
    m.run([&](const StepSystem& sys, std::span<const double>, std::span<double> out) {
        std::fill(diag.begin(), diag.end(), sys.diag);
        solve_tridiagonal(sys.lower, diag, sys.upper, sys.rhs, out, c, d);
    });
    return m.finish();
}

PdeSolution solve_obstacle(const MarketParams& params, const OptionSpec& spec,
                           const GridSpec& grid, const PdeTolerances& tol, PsorStart start) {
    Marcher m(params, spec, grid, tol, PdeMethod::Obstacle);
    const double target = tol.psor_tol * spec.strike;
    const auto& g = m.sol.obstacle;
    auto& diag = m.sol.diagnostics;
    m.run([&](const StepSystem& sys, std::span<const double> previous, std::span<double> out) {
        const std::size_t n = out.size();
        if (start == PsorStart::BrennanSchwartz) {
            brennan_schwartz(sys, g, spec.is_put(), out);
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = std::max(previous[i], g[i]);
        }
        std::size_t sweeps = 0;
        double residual = lcp_residual(sys, out, g);
        while (residual > target) {
            if (sweeps == tol.psor_max_sweeps) {
                std::ostringstream msg;
                msg << "PSOR did not converge at t = " << sys.time << " after " << sweeps
                    << " sweeps; worst residual " << residual << " > " << target;
                throw NumericalError(msg.str());
            }
            for (std::size_t i = 0; i < n; ++i) {
                double off = 0.0;
                if (i > 0) off += sys.lower * out[i - 1];
                if (i + 1 < n) off += sys.upper * out[i + 1];
                const double gs = (sys.rhs[i] - off) / sys.diag;
                out[i] = std::max(g[i], out[i] + tol.psor_omega * (gs - out[i]));
            }
            ++sweeps;
            residual = lcp_residual(sys, out, g);
        }
        diag.psor_sweeps_total += sweeps;
        diag.psor_sweeps_max = std::max(diag.psor_sweeps_max, sweeps);
        diag.psor_residual_max = std::max(diag.psor_residual_max, residual);
    });
    return m.finish();
}

PdeSolution solve_penalized(const MarketParams& params, const OptionSpec& spec,
                            const GridSpec& grid, double penalty, const PdeTolerances& tol) {
    if (!(penalty >= 1.0)) throw std::invalid_argument("penalty must be >= 1");
    Marcher m(params, spec, grid, tol, PdeMethod::Penalized);
    m.sol.penalty = penalty;
    const double target = tol.newton_tol * spec.strike;
    const auto& g = m.sol.obstacle;
    auto& diag = m.sol.diagnostics;
    const std::size_t n = grid.n_space;
    std::vector<double> d(n), rhs(n), c_scratch, d_scratch;
    std::vector<std::uint8_t> active(n);
    m.run([&](const StepSystem& sys, std::span<const double> previous, std::span<double> out) {
        // semismooth Newton on A u - b - dt n (g - u)^+ = 0, active set {u < g}
        const double weight = sys.dt * penalty;
        for (std::size_t i = 0; i < n; ++i) active[i] = previous[i] < g[i] ? 1 : 0;
        std::size_t iterations = 0;
        for (;;) {
            for (std::size_t i = 0; i < n; ++i) {
                d[i] = sys.diag + (active[i] ? weight : 0.0);
                rhs[i] = sys.rhs[i] + (active[i] ? weight * g[i] : 0.0);
            }
            solve_tridiagonal(sys.lower, d, sys.upper, rhs, out, c_scratch, d_scratch);
            ++iterations;
            double worst = 0.0;
            double term = 0.0;
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                const double gap = std::max(g[i] - out[i], 0.0);
                term = std::max(term, penalty * gap);
                const double f = row_product(sys, out, i) - sys.rhs[i] - weight * gap;
                worst = std::max(worst, std::abs(f));
                const std::uint8_t now = out[i] < g[i] ? 1 : 0;
                if (now != active[i]) {
                    active[i] = now;
                    changed = true;
                }
            }
            if (iterations == 1) diag.first_pass_penalty_max = std::max(diag.first_pass_penalty_max, term);
            diag.penalty_term_max = std::max(diag.penalty_term_max, term);
            if (!changed && worst <= target) break;
            if (iterations >= tol.newton_max_iterations) {
                std::ostringstream msg;
                msg << "penalty Newton iteration diverged at t = " << sys.time << ": residual "
                    << worst << " after " << iterations << " iterations";
                throw NumericalError(msg.str());
            }
        }
        diag.newton_iterations_max = std::max(diag.newton_iterations_max, iterations);
    });
    return m.finish();
}

PdeSolution solve_semilinear(const MarketParams& params, const OptionSpec& spec,
                             const GridSpec& grid, const PdeTolerances& tol) {
    Marcher m(params, spec, grid, tol, PdeMethod::Semilinear);
    const auto& g = m.sol.obstacle;
    const auto& x = m.sol.prices;
    auto& diag = m.sol.diagnostics;
    const std::size_t n = grid.n_space;
    const double eps_q = contact_epsilon(spec);
    const double move_tol = tol.fixed_point_tol * spec.strike;

    std::vector<double> rate(n);
    for (std::size_t i = 0; i < n; ++i) rate[i] = exercise_rate(spec, params, x[i]);

    std::vector<double> diag_vec(n), rhs(n), trial(n), c_scratch, d_scratch;
    std::vector<std::uint8_t> active(n), fresh(n), seen_on(n), seen_off(n), state(n);
    std::vector<double> lo_vec(n), diag_pin(n), up_vec(n);
    constexpr double share_tol = 1e-6;

    auto indicator = [&](std::span<const double> u, std::vector<std::uint8_t>& set) {
        for (std::size_t i = 0; i < n; ++i) set[i] = u[i] <= g[i] + eps_q ? 1 : 0;
    };

    m.run([&](const StepSystem& sys, std::span<const double> previous, std::span<double> out) {
        std::fill(diag_vec.begin(), diag_vec.end(), sys.diag);
        const double explicit_part = (1.0 - sys.theta) * sys.dt;
        const double implicit_part = sys.theta * sys.dt;
        indicator(previous, active);
        std::vector<double> base(sys.rhs);
        if (explicit_part > 0.0) {
            for (std::size_t i = 0; i < n; ++i)
                if (active[i]) base[i] += explicit_part * rate[i];
        }
        auto apply = [&](const std::vector<std::uint8_t>& set, std::span<double> result) {
            for (std::size_t i = 0; i < n; ++i)
                rhs[i] = base[i] + (set[i] ? implicit_part * rate[i] : 0.0);
            solve_tridiagonal(sys.lower, diag_vec, sys.upper, rhs, result, c_scratch, d_scratch);
        };

        // nodes whose indicator has taken both values during this step
        std::fill(seen_on.begin(), seen_on.end(), 0);
        std::fill(seen_off.begin(), seen_off.end(), 0);
        auto track = [&](const std::vector<std::uint8_t>& set) {
            for (std::size_t i = 0; i < n; ++i) (set[i] ? seen_on : seen_off)[i] = 1;
        };

        // plain active-set iteration; cycling switches to damped averaging
        std::set<std::vector<std::uint8_t>> seen;
        seen.insert(active);
        track(active);
        std::size_t iterations = 0;
        bool converged = false;
        bool cycling = false;
        apply(active, out);
        ++iterations;
        while (iterations < tol.fixed_point_max_iterations) {
            indicator(out, fresh);
            track(fresh);
            if (fresh == active) {
                converged = true;
                break;
            }
            if (!seen.insert(fresh).second) {
                cycling = true;
                break;
            }
            active = fresh;
            apply(active, out);
            ++iterations;
        }
        if (cycling) {
            ++diag.cycling_steps;
            double amplitude = 0.0;
            while (iterations < tol.fixed_point_max_iterations) {
                indicator(out, fresh);
                track(fresh);
                apply(fresh, trial);
                ++iterations;
                amplitude = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double next = (1.0 - tol.fixed_point_damping) * out[i] +
                                        tol.fixed_point_damping * trial[i];
                    amplitude = std::max(amplitude, std::abs(next - out[i]));
                    out[i] = next;
                }
                if (amplitude <= move_tol) {
                    converged = true;
                    break;
                }
            }
            if (!converged) {
                // Neither value of the indicator is self-consistent on the switching
                // nodes. Resolve with three node states: off (u above g), on (u at
                // or below g, full rate) and pinned (u = g with a share of the rate
                // in [0, 1]), updating states until every node is consistent.
                enum : std::uint8_t { Off = 0, On = 1, Pin = 2 };
                indicator(out, state);
                for (std::size_t i = 0; i < n; ++i)
                    if (seen_on[i] && seen_off[i] && rate[i] > 0.0) state[i] = Pin;
                std::size_t rounds = 0;
                while (rounds++ < tol.fixed_point_max_iterations) {
                    for (std::size_t i = 0; i < n; ++i) {
                        const bool pin = state[i] == Pin;
                        lo_vec[i] = pin ? 0.0 : sys.lower;
                        diag_pin[i] = pin ? 1.0 : sys.diag;
                        up_vec[i] = pin ? 0.0 : sys.upper;
                        rhs[i] = pin ? g[i] : base[i] + (state[i] == On ? implicit_part * rate[i] : 0.0);
                    }
                    solve_tridiagonal_rows(lo_vec, diag_pin, up_vec, rhs, out, c_scratch, d_scratch);
                    bool moved = false;
                    for (std::size_t i = 0; i < n; ++i) {
                        const bool below = out[i] <= g[i] + eps_q;
                        std::uint8_t next = state[i];
                        if (state[i] == Pin) {
                            const double share =
                                (row_product(sys, out, i) - base[i]) / (implicit_part * rate[i]);
                            if (share < -share_tol) next = Off;
                            if (share > 1.0 + share_tol) next = On;
                        } else if (rate[i] == 0.0) {
                            next = below ? On : Off;
                        } else if (state[i] == Off && below) {
                            next = Pin;
                        } else if (state[i] == On && !below) {
                            next = Pin;
                        }
                        if (next != state[i]) {
                            state[i] = next;
                            moved = true;
                        }
                    }
                    if (!moved) {
                        converged = true;
                        break;
                    }
                }
                iterations += rounds;
            }
            if (!converged) {
                ++diag.unresolved_steps;
                diag.unresolved_amplitude_max = std::max(diag.unresolved_amplitude_max, amplitude);
            }
        } else if (!converged) {
            ++diag.unresolved_steps;
        }
        diag.fixed_point_iterations_max = std::max(diag.fixed_point_iterations_max, iterations);
    });
    return m.finish();
}

}  // namespace amerikan
