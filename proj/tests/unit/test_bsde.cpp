#include <cmath>
#include <memory>

#include "doctest.h"

#include "amerikan/bsde.hpp"
#include "amerikan/lattice.hpp"
#include "oracles.hpp"

using namespace amerikan;

namespace {
const OptionSpec put100{OptionKind::Put, 100.0};
const OptionSpec call100{OptionKind::Call, 100.0};
const MarketParams canonical{0.05, 0.0, 0.2, 1.0};
const MarketParams zero_rate{0.0, 0.0, 0.2, 1.0};

std::shared_ptr<const PathBundle> bundle(const MarketParams& p, double x, std::size_t steps,
                                         std::size_t n, std::uint64_t seed) {
    return std::make_shared<const PathBundle>(
        simulate_paths(p, {0.0, x}, TimeSchedule::uniform(0.0, p.expiry, steps), n, seed));
}

struct PutRun {
    std::shared_ptr<const PathBundle> paths;
    BsdeSolution snell;
    BsdeSolution driver;
};

const PutRun& canonical_run() {
    static const PutRun run = [] {
        PutRun r;
        r.paths = bundle(canonical, 100.0, 50, 40000, 101);
        r.snell = snell_lsmc(r.paths, put100, canonical, {});
        r.driver = driver_bsde_solve(r.paths, put100, canonical, {});
        return r;
    }();
    return run;
}

void check_pathwise_invariants(const BsdeSolution& sol) {
    const auto last = static_cast<Eigen::Index>(sol.n_times() - 1);
    for (std::size_t p = 0; p < sol.n_paths(); ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        CHECK(sol.k(row, 0) == 0.0);
        CHECK(sol.y(row, last) == payoff(sol.spec, sol.paths->at(p, sol.n_times() - 1)));
        for (Eigen::Index k = 0; k < last; ++k) CHECK(sol.k(row, k + 1) >= sol.k(row, k));
    }
}
}  // namespace

TEST_CASE("single step prices the discounted terminal payoff") {
    const MarketParams p{0.05, 0.0, 0.2, 1e-3};
    const auto paths = bundle(p, 100.0, 1, 20000, 3);
    const auto sol = snell_lsmc(paths, put100, p, {});
    double mean = 0.0;
    for (std::size_t i = 0; i < paths->n_paths(); ++i) mean += payoff(put100, paths->at(i, 1));
    mean *= std::exp(-0.05 * 1e-3) / 20000.0;
    CHECK(sol.y0.value == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("no-exercise call prices at the European value") {
    const auto paths = bundle(canonical, 100.0, 20, 40000, 5);
    const double ref = oracle::black_scholes(false, 100.0, 100.0, 0.05, 0.0, 0.2, 1.0);
    const auto snell = snell_lsmc(paths, call100, canonical, {});
    const auto driver = driver_bsde_solve(paths, call100, canonical, {});
    CHECK(std::abs(snell.y0.value - ref) <= 3.0 * snell.y0.std_error);
    CHECK(std::abs(driver.y0.value - ref) <= 3.0 * driver.y0.std_error);
    CHECK(driver.k.cwiseAbs().maxCoeff() == 0.0);
    const auto formula = k_formula(*paths, call100, canonical, contact_from_values(snell, 1e-9));
    CHECK(formula.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reflected scheme on the canonical put") {
    const auto& run = canonical_run();
    const auto& sol = run.snell;
    check_pathwise_invariants(sol);
    for (Eigen::Index p = 0; p < sol.y.rows(); ++p)
        for (Eigen::Index k = 0; k < sol.y.cols(); ++k)
            CHECK(sol.y(p, k) >= payoff(put100, run.paths->at(static_cast<std::size_t>(p), static_cast<std::size_t>(k))));

    const double ref = oracle::canonical_put_at_money;
    CHECK(std::abs(sol.y0.value - ref) <= 3.0 * sol.y0.std_error);
    REQUIRE(sol.y0_low.has_value());
    const double combined = std::hypot(sol.y0.std_error, sol.y0_low->std_error);
    CHECK(sol.y0_low->value <= sol.y0.value + 3.0 * combined);
}

TEST_CASE("Doob-Meyer increments live on the contact set") {
    const auto& sol = canonical_run().snell;
    const double tol = 1e-9 * 100.0;
    for (Eigen::Index p = 0; p < sol.y.rows(); ++p) {
        for (Eigen::Index k = 0; k + 1 < sol.y.cols(); ++k) {
            const double g = payoff(put100, sol.paths->at(static_cast<std::size_t>(p), static_cast<std::size_t>(k)));
            if (sol.y(p, k) > g + tol) CHECK(sol.k(p, k + 1) == sol.k(p, k));
        }
    }
    const double flat = skorokhod_sum(sol, sol.k);
    CHECK(flat <= 1e-4 * 100.0 * sol.k.col(sol.k.cols() - 1).mean());
}

TEST_CASE("zero-rate put needs no reflection") {
    const auto paths = bundle(zero_rate, 100.0, 20, 20000, 9);
    const auto sol = snell_lsmc(paths, put100, zero_rate, {});
    check_pathwise_invariants(sol);
    const auto se = increment_standard_errors(sol);
    for (Eigen::Index k = 0; k + 1 < sol.k.cols(); ++k) {
        const double mean_increment = (sol.k.col(k + 1) - sol.k.col(k)).mean();
        CHECK(mean_increment <= 3.0 * se[static_cast<std::size_t>(k)]);
    }
    const auto formula = k_formula(*paths, put100, zero_rate, contact_from_values(sol, 1e-9));
    CHECK(formula.cwiseAbs().maxCoeff() == 0.0);
    const auto check = prop21_bound_check(formula, *paths, put100, zero_rate,
                                          contact_from_values(sol, 1e-9), se);
    CHECK(check.violations == 0);

    const auto driver = driver_bsde_solve(paths, put100, zero_rate, {});
    CHECK(driver.k.cwiseAbs().maxCoeff() == 0.0);
    const double ref = oracle::black_scholes(true, 100.0, 100.0, 0.0, 0.0, 0.2, 1.0);
    CHECK(std::abs(driver.y0.value - ref) <= 3.0 * driver.y0.std_error);
}

TEST_CASE("explicit K formula") {
    const auto& run = canonical_run();
    const auto contact = contact_from_values(run.snell, 1e-9);
    const auto formula = k_formula(*run.paths, put100, canonical, contact);

    for (Eigen::Index p = 0; p < formula.rows(); ++p) {
        bool touched = false;
        for (Eigen::Index k = 0; k + 1 < formula.cols(); ++k) {
            CHECK(formula(p, k + 1) >= formula(p, k));
            touched = touched || contact(p, k);
        }
        if (!touched) CHECK(formula(p, formula.cols() - 1) == 0.0);
    }
    // the bound holds with equality when K is the formula itself
    const std::vector<double> no_noise(run.paths->schedule.steps(), 0.0);
    const auto self = prop21_bound_check(formula, *run.paths, put100, canonical, contact, no_noise);
    CHECK(self.violations == 0);
    CHECK(self.pairs == static_cast<std::size_t>(formula.rows()) * 50 * 51 / 2);

    CHECK_THROWS(k_formula(*run.paths, put100, canonical, ContactMatrix::Zero(3, 3)));
}

TEST_CASE("driver scheme on the canonical put") {
    const auto& run = canonical_run();
    check_pathwise_invariants(run.driver);
    const double combined = std::hypot(run.driver.y0.std_error, run.snell.y0.std_error);
    CHECK(std::abs(run.driver.y0.value - run.snell.y0.value) <= 3.0 * combined);
    CHECK(run.driver.filippov_nodes > 0);
}

TEST_CASE("representation identity for the driver scheme") {
    const auto& run = canonical_run();
    const std::vector<std::size_t> probes{0, 12, 25, 37, 50};
    const auto rep = snell_representation_check(run.driver, put100, canonical, {}, probes);
    REQUIRE(rep.probes.size() == probes.size());
    const auto& terminal = rep.probes.back();
    CHECK(terminal.step == 50);
    CHECK(terminal.mean_residual == 0.0);
    CHECK(rep.passed(3.0));

    const auto paths = bundle(zero_rate, 100.0, 20, 20000, 13);
    const auto driver = driver_bsde_solve(paths, put100, zero_rate, {});
    const std::vector<std::size_t> zero_probes{0, 10, 20};
    CHECK(snell_representation_check(driver, put100, zero_rate, {}, zero_probes).passed(3.0));
    const std::vector<std::size_t> beyond{30};
    CHECK_THROWS(snell_representation_check(driver, put100, zero_rate, {}, beyond));
}

TEST_CASE("gradient identification against the European delta") {
    const auto paths = bundle(canonical, 100.0, 20, 20000, 17);
    const auto sol = snell_lsmc(paths, call100, canonical, {});
    auto reference = [](double t, double x) {
        return 0.2 * x * oracle::black_scholes_delta(false, x, 100.0, 0.05, 0.0, 0.2, 1.0 - t);
    };
    const auto report = z_identification_check(sol, reference);
    CHECK(report.samples == 20000 * 20);
    CHECK(std::isfinite(report.relative_l2));

    // deep out of the money at the last step both sides vanish
    const auto far = bundle(canonical, 20.0, 4, 5000, 19);
    const auto far_sol = snell_lsmc(far, call100, canonical, {});
    for (Eigen::Index p = 0; p < far_sol.z.rows(); ++p) CHECK(std::abs(far_sol.z(p, 3)) < 1e-6);
    CHECK(std::abs(reference(0.9, 20.0)) < 1e-6);
}

TEST_CASE("same seed gives identical solutions") {
    const auto a = bundle(canonical, 100.0, 10, 8000, 23);
    const auto b = bundle(canonical, 100.0, 10, 8000, 23);
    const auto sa = snell_lsmc(a, put100, canonical, {});
    const auto sb = snell_lsmc(b, put100, canonical, {});
    CHECK(sa.y == sb.y);
    CHECK(sa.z == sb.z);
    CHECK(sa.k == sb.k);
    CHECK(sa.y0_low->value == sb.y0_low->value);
    const auto da = driver_bsde_solve(a, put100, canonical, {});
    const auto db = driver_bsde_solve(b, put100, canonical, {});
    CHECK(da.y == db.y);
    CHECK(da.k == db.k);
}

TEST_CASE("K discrepancy and totals") {
    Eigen::MatrixXd a(2, 3), b(2, 3);
    a << 0, 1, 2, 0, 0, 1;
    b << 0, 1.5, 2, 0, 0, 0;
    const auto d = k_discrepancy(a, b);
    CHECK(d.mean_sup == doctest::Approx(0.75));
    CHECK(d.max_sup == doctest::Approx(1.0));
    CHECK_THROWS(k_discrepancy(a, Eigen::MatrixXd::Zero(2, 2)));

    const auto& sol = canonical_run().snell;
    const auto total = discounted_k_total(sol, sol.k);
    CHECK(total.value > 0.0);
    CHECK(total.std_error > 0.0);
}

TEST_CASE("regression basis guards") {
    CHECK_THROWS(RegressionBasis{0, true}.validate());
    const std::vector<double> x{90.0, 95.0, 105.0, 110.0, 120.0}, y{10.0, 5.0, 0.0, 0.0, 0.0};
    const std::vector<std::size_t> rows{0, 1, 2, 3, 4};
    const auto fit = fit_regression(put100, x, y, rows, 3, true);
    CHECK(fit.samples == 5);
    CHECK(fit.evaluate(put100, 95.0) == doctest::Approx(5.0).epsilon(1e-6));
    // two distinct states cannot carry a cubic: the fit shrinks instead of failing
    const std::vector<double> two{90.0, 90.0, 110.0, 110.0, 110.0};
    const auto reduced = fit_regression(put100, two, y, rows, 3, true);
    CHECK(reduced.reduced);
    CHECK(reduced.columns() <= 2);
}
