#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "amerikan/bsde.hpp"

namespace amerikan {

KDiscrepancy k_discrepancy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("K matrices differ in shape");
    KDiscrepancy out;
    for (Eigen::Index p = 0; p < a.rows(); ++p) {
        const double sup = a.cols() ? (a.row(p) - b.row(p)).cwiseAbs().maxCoeff() : 0.0;
        out.mean_sup += sup;
        out.max_sup = std::max(out.max_sup, sup);
    }
    if (a.rows()) out.mean_sup /= static_cast<double>(a.rows());
    return out;
}

bool ProbeResidual::within(double sigmas) const {
    return std::abs(mean_residual) <= sigmas * bootstrap_se + 1e-12;
}

bool RepresentationReport::passed(double sigmas) const {
    for (const auto& p : probes)
        if (!p.within(sigmas)) return false;
    return true;
}

RepresentationReport snell_representation_check(const BsdeSolution& sol, const OptionSpec& spec,
                                                const MarketParams& params,
                                                const RegressionBasis& basis,
                                                std::span<const std::size_t> probe_steps,
                                                std::size_t bootstrap_samples,
                                                std::uint64_t bootstrap_seed,
                                                const WeightSpec& weight) {
    basis.validate();
    weight.validate();
    const PathBundle& bundle = *sol.paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t steps = bundle.schedule.steps();
    for (std::size_t k : probe_steps)
        if (k > steps) throw std::invalid_argument("probe step beyond the schedule");

    std::vector<double> disc(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) disc[k] = sol.discount(k);

    // the reflected scheme accrues q on its own contact set; the driver scheme
    // already carries q dt (with its partial shares) in K
    const Eigen::MatrixXd accrued =
        sol.method == BsdeMethod::ReflectedSnell
            ? k_formula(bundle, spec, params, contact_from_values(sol, 1e-9 * spec.strike))
            : sol.k;

    // cashflow[p] holds e^{-r(T-s)} g(X_T) + sum_{j >= k} e^{-r(t_j - s)} q_j dt while
    // sweeping k downwards
    std::vector<double> cashflow(m), diff(m);
    for (std::size_t p = 0; p < m; ++p) cashflow[p] = disc[steps] * payoff(spec, bundle.at(p, steps));

    std::vector<std::size_t> all_rows(m);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    std::vector<std::uint8_t> wanted(steps + 1, 0);
    for (std::size_t k : probe_steps) wanted[k] = 1;

    RepresentationReport report;
    std::mt19937_64 engine(bootstrap_seed);
    for (std::size_t k = steps + 1; k-- > 0;) {
        if (k < steps) {
            for (std::size_t p = 0; p < m; ++p) {
                const auto row = static_cast<Eigen::Index>(p);
                const auto col = static_cast<Eigen::Index>(k);
                cashflow[p] += disc[k] * (accrued(row, col + 1) - accrued(row, col));
            }
        }
        if (!wanted[k]) continue;

        ProbeResidual probe;
        probe.step = k;
        probe.time = bundle.schedule.time(k);
        double mean = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            diff[p] = cashflow[p] - disc[k] * sol.y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
            mean += diff[p];
        }
        probe.mean_residual = mean / static_cast<double>(m);

        if (bootstrap_samples > 1) {
            std::uniform_int_distribution<std::size_t> pick(0, m - 1);
            std::vector<double> means(bootstrap_samples);
            for (auto& bm : means) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += diff[pick(engine)];
                bm = acc / static_cast<double>(m);
            }
            double centre = 0.0;
            for (double bm : means) centre += bm;
            centre /= static_cast<double>(bootstrap_samples);
            double ss = 0.0;
            for (double bm : means) ss += (bm - centre) * (bm - centre);
            probe.bootstrap_se = std::sqrt(ss / static_cast<double>(bootstrap_samples - 1));
        }

        const auto x = bundle.slice(k);
        const int degree = k == 0 ? 0 : basis.degree;
        const RegressionFit fit = fit_regression(spec, x, cashflow, all_rows, degree, k != 0);
        double num = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            const double w = weight.rho(x[p]);
            const double gap = fit.evaluate(spec, x[p]) -
                               disc[k] * sol.y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k));
            num += gap * gap * w * w;
        }
        probe.weighted_l2 = std::sqrt(num / static_cast<double>(m));
        report.probes.push_back(probe);
    }
    std::reverse(report.probes.begin(), report.probes.end());
    return report;
}

ZReport z_identification_check(const BsdeSolution& sol,
                               const std::function<double(double, double)>& reference_z) {
    const PathBundle& bundle = *sol.paths;
    const std::size_t m = bundle.n_paths();
    const std::size_t steps = bundle.schedule.steps();
    double num = 0.0;
    double den = 0.0;
    ZReport report;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = bundle.schedule.time(k);
        for (std::size_t p = 0; p < m; ++p) {
            const double x = bundle.at(p, k);
            if (!(x > 0.0)) continue;
            const double ref = reference_z(t, x);
            const double gap = sol.z(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) - ref;
            num += gap * gap;
            den += ref * ref;
            ++report.samples;
        }
    }
    report.relative_l2 = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return report;
}

ZReport z_identification_check(const BsdeSolution& sol, const PdeSolution& pde) {
    const double sigma = sol.params.sigma;
    return z_identification_check(
        sol, [&](double t, double x) { return sigma * x * pde.delta_at(t, x); });
}

}  // namespace amerikan
