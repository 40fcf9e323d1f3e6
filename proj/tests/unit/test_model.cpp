#include <cmath>
#include <numeric>

#include "doctest.h"

#include "amerikan/model.hpp"
#include "amerikan/validation.hpp"

using namespace amerikan;

namespace {
const OptionSpec put100{OptionKind::Put, 100.0};
const OptionSpec call100{OptionKind::Call, 100.0};
const MarketParams canonical{0.05, 0.0, 0.2, 1.0};
}  // namespace

TEST_CASE("payoff values and domain") {
    CHECK(payoff(call100, 120.0) == 20.0);
    CHECK(payoff(put100, 120.0) == 0.0);
    CHECK(payoff(put100, 80.0) == 20.0);
    CHECK(payoff(put100, 0.0) == 100.0);
    CHECK_THROWS_AS(payoff(put100, -1.0), std::invalid_argument);
}

TEST_CASE("payoff is nonnegative, convex and 1-Lipschitz") {
    for (const auto& spec : {put100, call100}) {
        for (double x = 0.5; x < 300.0; x += 0.5) {
            const double lo = payoff(spec, x - 0.5), mid = payoff(spec, x), hi = payoff(spec, x + 0.5);
            CHECK(mid >= 0.0);
            CHECK(lo + hi - 2.0 * mid >= -1e-12);
            CHECK(std::abs(hi - mid) <= 0.5 + 1e-12);
        }
    }
}

TEST_CASE("driver rate and its indicator") {
    CHECK(driver_q(put100, canonical, 80.0, 20.0) == doctest::Approx(5.0));
    CHECK(driver_q(put100, canonical, 80.0, 25.0) == 0.0);
    CHECK(full_driver(put100, canonical, 80.0, 20.0) == doctest::Approx(4.0));
    CHECK(full_driver(call100, canonical, 150.0, 10.0) == doctest::Approx(-0.5));
    CHECK(full_driver(call100, canonical, 150.0, 0.0) == 0.0);
    CHECK(full_driver(put100, {0.05, 0.04, 0.2, 1.0}, 150.0, 0.0) == 0.0);
    for (double x : {10.0, 100.0, 500.0})
        for (double y : {0.0, 5.0, 50.0}) CHECK(driver_q(call100, {0.07, 0.0, 0.3, 1.0}, x, y) == 0.0);
}

TEST_CASE("indicator is inclusive within the floating-point allowance") {
    const double g = payoff(put100, 80.0);
    CHECK(driver_q(put100, canonical, 80.0, g + 0.5 * contact_epsilon(put100)) > 0.0);
    CHECK(driver_q(put100, canonical, 80.0, g + 1e-6) == 0.0);
}

TEST_CASE("driver properties over a grid of states") {
    const MarketParams with_dividend{0.05, 0.03, 0.25, 1.0};
    for (const auto& spec : {put100, call100}) {
        for (double x = 0.0; x <= 250.0; x += 5.0) {
            double previous = INFINITY;
            for (double y = 0.0; y <= 150.0; y += 0.25) {
                const double q = driver_q(spec, with_dividend, x, y);
                CHECK(q >= 0.0);
                if (y > payoff(spec, x) + contact_epsilon(spec)) CHECK(q == 0.0);
                const double f = full_driver(spec, with_dividend, x, y);
                CHECK(f <= previous);
                previous = f;
            }
        }
    }
    CHECK(driver_vanishes(call100, canonical));
    CHECK(driver_vanishes(put100, {0.0, 0.0, 0.2, 1.0}));
    CHECK_FALSE(driver_vanishes(put100, canonical));
}

TEST_CASE("transition density normalizes and has the forward as its mean") {
    CHECK(transition_density(canonical, 0.0, 100.0, 1.0, -1.0) == 0.0);
    CHECK_THROWS_AS(transition_density(canonical, 0.5, 100.0, 0.5, 90.0), std::invalid_argument);
    CHECK_THROWS_AS(transition_density(canonical, 0.0, 0.0, 1.0, 90.0), std::invalid_argument);
    for (const MarketParams& p : {canonical, MarketParams{0.02, 0.04, 0.45, 2.0}}) {
        const auto m = density_moments(p, 0.1, 100.0, 0.9);
        CHECK(std::abs(m.mass - 1.0) <= 1e-8);
        const double forward = 100.0 * std::exp((p.rate - p.dividend) * 0.8);
        CHECK(std::abs(m.mean / forward - 1.0) <= 1e-6);
    }
}

TEST_CASE("density matches the lognormal closed form") {
    const double s = 0.0, t = 0.7, x = 90.0, sd = 0.2 * std::sqrt(t);
    for (double y : {50.0, 90.0, 130.0}) {
        const double z = (std::log(y / x) - (0.05 - 0.02) * t) / sd;
        const double expected = std::exp(-0.5 * z * z) / (y * sd * std::sqrt(2.0 * M_PI));
        CHECK(transition_density(canonical, s, x, t, y) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("schedules keep their endpoints exactly") {
    const auto u = TimeSchedule::uniform(0.25, 1.0, 7);
    CHECK(u.start() == 0.25);
    CHECK(u.end() == 1.0);
    CHECK(u.steps() == 7);
    for (std::size_t k = 0; k < u.steps(); ++k) CHECK(u.dt(k) > 0.0);
    CHECK_THROWS(TimeSchedule::uniform(0.0, 1.0, 0));
    CHECK_THROWS(TimeSchedule::custom({0.0, 0.5, 0.5, 1.0}));
    CHECK(TimeSchedule::custom({0.0, 0.3, 1.0}).policy() == StepPolicy::Custom);
}

TEST_CASE("path simulation") {
    const auto schedule = TimeSchedule::uniform(0.0, 1.0, 4);

    SUBCASE("zero spot stays at zero") {
        const auto b = simulate_paths(canonical, {0.0, 0.0}, schedule, 100, 3);
        CHECK(b.values.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("positive paths starting at the spot") {
        const auto b = simulate_paths(canonical, {0.0, 100.0}, schedule, 1000, 3);
        CHECK(b.values.minCoeff() > 0.0);
        CHECK((b.values.col(0).array() == 100.0).all());
        CHECK(b.scheme == "exact-lognormal");
    }
    SUBCASE("seed and worker count do not change the bits") {
        SimulationOptions one{1, 512}, four{4, 512};
        const auto a = simulate_paths(canonical, {0.0, 100.0}, schedule, 5000, 11, one);
        const auto b = simulate_paths(canonical, {0.0, 100.0}, schedule, 5000, 11, four);
        CHECK(a.values == b.values);
        const auto c = simulate_paths(canonical, {0.0, 100.0}, schedule, 5000, 12, one);
        CHECK(a.values != c.values);
    }
    SUBCASE("rejects empty requests") {
        CHECK_THROWS(simulate_paths(canonical, {0.0, 100.0}, schedule, 0, 1));
    }
}

TEST_CASE("terminal mean and log-increment moments over 1e6 paths") {
    const MarketParams p{0.05, 0.02, 0.3, 1.0};
    const auto schedule = TimeSchedule::uniform(0.0, 1.0, 2);
    const std::size_t n = 1000000;
    const auto b = simulate_paths(p, {0.0, 100.0}, schedule, n, 20240501);

    const Eigen::ArrayXd xt = b.values.col(2).array();
    const double mean = xt.mean();
    const double se = std::sqrt((xt - mean).square().sum() / (n - 1.0) / n);
    CHECK(std::abs(mean - 100.0 * std::exp(0.03)) <= 3.0 * se);

    const double dt = 0.5;
    const Eigen::ArrayXd inc = (b.values.col(1).array() / b.values.col(0).array()).log();
    const double m = inc.mean();
    const double v = (inc - m).square().sum() / (n - 1.0);
    const double drift = (0.05 - 0.02 - 0.045) * dt, var = 0.09 * dt;
    CHECK(std::abs(m - drift) <= 4.0 * std::sqrt(var / n));
    // sample variance of a normal has standard error var sqrt(2 / (n - 1))
    CHECK(std::abs(v - var) <= 4.0 * var * std::sqrt(2.0 / (n - 1.0)));
}

TEST_CASE("brownian increments invert the exact step") {
    const auto schedule = TimeSchedule::uniform(0.0, 1.0, 1);
    const auto b = simulate_paths(canonical, {0.0, 100.0}, schedule, 20000, 5);
    double sum = 0.0, sq = 0.0;
    for (std::size_t p = 0; p < b.n_paths(); ++p) {
        const double dw = brownian_increment(canonical, b.at(p, 0), b.at(p, 1), 1.0);
        sum += dw;
        sq += dw * dw;
    }
    CHECK(std::abs(sum / 20000.0) < 4.0 / std::sqrt(20000.0));
    CHECK(std::abs(sq / 20000.0 - 1.0) < 4.0 * std::sqrt(2.0 / 20000.0));
}

TEST_CASE("parameter validation") {
    CHECK_THROWS(MarketParams{-0.01, 0.0, 0.2, 1.0}.validate());
    CHECK_THROWS(MarketParams{0.05, 0.0, 0.0, 1.0}.validate());
    CHECK_THROWS(MarketParams{0.05, 0.0, 0.2, 0.0}.validate());
    CHECK_THROWS(OptionSpec{OptionKind::Put, 0.0}.validate());
    CHECK_THROWS(EvalPoint{1.0, 100.0}.validate(canonical));
    CHECK_THROWS(EvalPoint{0.0, -5.0}.validate(canonical));
    CHECK(parse_option_kind("put") == OptionKind::Put);
    CHECK_THROWS(parse_option_kind("straddle"));
}
