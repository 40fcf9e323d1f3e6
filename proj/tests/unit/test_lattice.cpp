#include <cmath>

#include "doctest.h"

#include "amerikan/lattice.hpp"
#include "oracles.hpp"

using namespace amerikan;

namespace {
const OptionSpec put100{OptionKind::Put, 100.0};
const OptionSpec call100{OptionKind::Call, 100.0};
const MarketParams canonical{0.05, 0.0, 0.2, 1.0};
}  // namespace

TEST_CASE("tree at expiry returns the payoff") {
    for (double x : {80.0, 120.0}) {
        const EvalPoint point{1.0 - 1e-9, x};
        CHECK(std::abs(tree_price_american(canonical, put100, point, {1}) - payoff(put100, x)) < 1e-6);
        CHECK(std::abs(tree_price_american(canonical, call100, point, {1}) - payoff(call100, x)) < 1e-6);
    }
    // at the strike the remaining time value is of order sigma x sqrt(T - s)
    const double at_money = tree_price_american(canonical, put100, {1.0 - 1e-9, 100.0}, {1});
    CHECK(at_money < 0.2 * 100.0 * std::sqrt(1e-9));
}

TEST_CASE("call without dividends is never exercised early") {
    const TreeConfig cfg{20000};
    const double am = tree_price_american(canonical, call100, {0.0, 100.0}, cfg);
    const double eu = tree_price_european(canonical, call100, {0.0, 100.0}, cfg);
    CHECK(std::abs(am - eu) < 1e-9);
}

TEST_CASE("canonical put oracle") {
    const auto v = tree_oracle_american(canonical, put100, {0.0, 100.0}, 20000);
    CHECK(v.relative_gap() < 2e-4);
    CHECK(v.value == doctest::Approx(oracle::canonical_put_at_money).epsilon(1e-6));
    CHECK(v.value == doctest::Approx(2.0 * v.fine - v.coarse));
}

TEST_CASE("European tree and quadrature agree with the closed form") {
    const TreeConfig cfg{20000};
    for (double x : {80.0, 100.0, 120.0}) {
        const EvalPoint point{0.0, x};
        const double bs = oracle::black_scholes(true, x, 100.0, 0.05, 0.0, 0.2, 1.0);
        CHECK(european_quadrature(canonical, put100, point) == doctest::Approx(bs).epsilon(1e-9));
        CHECK(std::abs(tree_price_european(canonical, put100, point, cfg) / bs - 1.0) < 1e-4);
    }
    CHECK(european_quadrature(canonical, put100, {0.0, 100.0}) ==
          doctest::Approx(oracle::canonical_european_at_money).epsilon(1e-8));
}

TEST_CASE("European degenerate cases") {
    SUBCASE("far out of the money put") {
        CHECK(tree_price_european(canonical, put100, {0.0, 1e8}, {2000}) < 1e-12);
    }
    SUBCASE("zero rate put is the undiscounted expected payoff") {
        const MarketParams zero{0.0, 0.0, 0.2, 1.0};
        const double bs = oracle::black_scholes(true, 90.0, 100.0, 0.0, 0.0, 0.2, 1.0);
        CHECK(european_quadrature(zero, put100, {0.0, 90.0}) == doctest::Approx(bs).epsilon(1e-9));
    }
    SUBCASE("call with vanishing strike is the discounted forward") {
        const MarketParams p{0.05, 0.03, 0.2, 1.0};
        const double v = european_quadrature(p, {OptionKind::Call, 1e-9}, {0.25, 100.0});
        CHECK(std::abs(v - 100.0 * std::exp(-0.03 * 0.75)) < 1e-8);
    }
    SUBCASE("zero carry put and call coincide at the money") {
        const MarketParams zero{0.0, 0.0, 0.2, 1.0};
        const double put = european_quadrature(zero, put100, {0.0, 100.0});
        const double call = european_quadrature(zero, call100, {0.0, 100.0});
        CHECK(put == doctest::Approx(call).epsilon(1e-10));
    }
}

TEST_CASE("European quadrature delta") {
    const MarketParams p{0.04, 0.02, 0.3, 1.5};
    for (double x : {70.0, 100.0, 140.0}) {
        CHECK(european_quadrature_delta(p, put100, {0.0, x}) ==
              doctest::Approx(oracle::black_scholes_delta(true, x, 100.0, 0.04, 0.02, 0.3, 1.5)).epsilon(1e-7));
        CHECK(european_quadrature_delta(p, call100, {0.0, x}) ==
              doctest::Approx(oracle::black_scholes_delta(false, x, 100.0, 0.04, 0.02, 0.3, 1.5)).epsilon(1e-7));
    }
}

TEST_CASE("lattice ordering and monotonicity") {
    const TreeConfig cfg{800};
    const MarketParams with_dividend{0.05, 0.04, 0.25, 1.0};
    for (const auto& spec : {put100, call100}) {
        for (double x : {60.0, 90.0, 100.0, 110.0, 150.0}) {
            const double am = tree_price_american(with_dividend, spec, {0.0, x}, cfg);
            CHECK(am >= tree_price_european(with_dividend, spec, {0.0, x}, cfg) - 1e-12);
            CHECK(am >= payoff(spec, x) - 1e-12);
        }
    }
    double previous = 0.0;
    for (double sigma : {0.1, 0.2, 0.3, 0.4}) {
        const double v = tree_price_american({0.05, 0.0, sigma, 1.0}, put100, {0.0, 100.0}, cfg);
        CHECK(v > previous);
        previous = v;
    }
    previous = 0.0;
    for (double expiry : {0.25, 0.5, 1.0, 2.0}) {
        const double v = tree_price_american({0.05, 0.0, 0.2, expiry}, put100, {0.0, 100.0}, cfg);
        CHECK(v > previous);
        previous = v;
    }
}

TEST_CASE("tree self-convergence gap shrinks") {
    double previous = INFINITY;
    for (std::size_t n : {250, 500, 1000, 2000, 4000}) {
        const double gap = std::abs(tree_price_american(canonical, put100, {0.0, 100.0}, {2 * n}) -
                                    tree_price_american(canonical, put100, {0.0, 100.0}, {n}));
        CHECK(gap < previous);
        previous = gap;
    }
}

TEST_CASE("lattice rejects bad configurations") {
    CHECK_THROWS(TreeConfig{0}.validate());
    CHECK_THROWS_AS(tree_price_american({0.05, 0.0, 1e-4, 1.0}, put100, {0.0, 100.0}, {2}),
                    NumericalError);
    CHECK_THROWS(european_quadrature(canonical, put100, {0.0, 0.0}));
}
