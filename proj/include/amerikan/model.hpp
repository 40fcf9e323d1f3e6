#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace amerikan {

/// Raised when an iterative or quadrature method fails to meet its tolerance.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OptionKind { Call, Put };

std::string to_string(OptionKind kind);
OptionKind parse_option_kind(const std::string& text);

/// Risk-neutral market for a dividend-paying stock following geometric Brownian motion.
struct MarketParams {
    double rate = 0.0;      ///< risk-free rate r (per year)
    double dividend = 0.0;  ///< continuous dividend yield d (per year)
    double sigma = 0.0;     ///< volatility (per sqrt-year)
    double expiry = 0.0;    ///< expiration time T (years)

    void validate() const;
};

struct OptionSpec {
    OptionKind kind = OptionKind::Put;
    double strike = 0.0;

    void validate() const;
    bool is_put() const { return kind == OptionKind::Put; }
};

/// Evaluation point (s, x) with 0 <= s < T and x >= 0.
struct EvalPoint {
    double start = 0.0;
    double spot = 0.0;

    void validate(const MarketParams& params) const;
};

enum class StepPolicy { Uniform, Custom };

/// Strictly increasing times from s to T, endpoints exact.
class TimeSchedule {
public:
    static TimeSchedule uniform(double start, double end, std::size_t steps);
    static TimeSchedule custom(std::vector<double> times);

    std::span<const double> times() const { return times_; }
    double time(std::size_t k) const { return times_[k]; }
    double dt(std::size_t k) const { return times_[k + 1] - times_[k]; }
    std::size_t steps() const { return times_.size() - 1; }
    std::size_t size() const { return times_.size(); }
    double start() const { return times_.front(); }
    double end() const { return times_.back(); }
    StepPolicy policy() const { return policy_; }

private:
    TimeSchedule(std::vector<double> times, StepPolicy policy);

    std::vector<double> times_;
    StepPolicy policy_;
};

/// Simulated stock paths. Logically one row per path; stored as an
/// n_paths x n_times column-major matrix so each time slice is contiguous.
struct PathBundle {
    TimeSchedule schedule;
    Eigen::MatrixXd values;
    std::uint64_t seed = 0;
    std::size_t block_size = 0;
    std::string scheme = "exact-lognormal";
    double spot = 0.0;

    std::size_t n_paths() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_times() const { return static_cast<std::size_t>(values.cols()); }
    double at(std::size_t path, std::size_t k) const { return values(path, k); }
    std::span<const double> slice(std::size_t k) const {
        return {values.col(static_cast<Eigen::Index>(k)).data(), n_paths()};
    }
};

double payoff(const OptionSpec& spec, double x);

/// Indicator tolerance used for the inclusive test y <= g(x).
double contact_epsilon(const OptionSpec& spec);

/// Rate (d x - r K)^+ for a call or (r K - d x)^+ for a put, before the contact indicator.
double exercise_rate(const OptionSpec& spec, const MarketParams& params, double x);

/// Discontinuous driver q(x, y): exercise_rate gated by y <= g(x).
double driver_q(const OptionSpec& spec, const MarketParams& params, double x, double y);

/// -r y + q(x, y).
double full_driver(const OptionSpec& spec, const MarketParams& params, double x, double y);

/// True when q vanishes identically (call without dividends, put at zero rate).
bool driver_vanishes(const OptionSpec& spec, const MarketParams& params);

/// Lognormal density of X_t given X_s = x.
double transition_density(const MarketParams& params, double s, double x, double t, double y);

struct SimulationOptions {
    std::size_t workers = 0;        ///< 0 selects std::thread::hardware_concurrency()
    std::size_t block_size = 4096;  ///< paths per RNG substream
};

/// Exact lognormal stepping; block b draws from a generator seeded by (seed, b),
/// so the result does not depend on the worker count.
PathBundle simulate_paths(const MarketParams& params, const EvalPoint& point,
                          const TimeSchedule& schedule, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& options = {});

/// Brownian increment recovered from a pair of exact lognormal samples.
double brownian_increment(const MarketParams& params, double x0, double x1, double dt);

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace amerikan
