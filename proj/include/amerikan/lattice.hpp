#pragma once

#include <cstddef>

#include "amerikan/model.hpp"

namespace amerikan {

/// Cox-Ross-Rubinstein lattice, up factor e^{sigma sqrt(dt)}, up * down = 1.
struct TreeConfig {
    std::size_t steps = 20000;

    void validate() const;
};

double tree_price_american(const MarketParams& params, const OptionSpec& spec,
                           const EvalPoint& point, const TreeConfig& cfg);
double tree_price_european(const MarketParams& params, const OptionSpec& spec,
                           const EvalPoint& point, const TreeConfig& cfg);

/// American value from the (N, 2N) lattice pair, extrapolated as 2 V(2N) - V(N).
struct OracleValue {
    double value = 0.0;
    double coarse = 0.0;  ///< V(N)
    double fine = 0.0;    ///< V(2N)

    double relative_gap() const;
};

OracleValue tree_oracle_american(const MarketParams& params, const OptionSpec& spec,
                                 const EvalPoint& point, std::size_t steps = 20000);

/// e^{-r(T-s)} * integral of g(y) p(s, x, T, y) dy.
double european_quadrature(const MarketParams& params, const OptionSpec& spec,
                           const EvalPoint& point);

/// d/dx of european_quadrature, differentiated under the integral.
double european_quadrature_delta(const MarketParams& params, const OptionSpec& spec,
                                 const EvalPoint& point);

}  // namespace amerikan
