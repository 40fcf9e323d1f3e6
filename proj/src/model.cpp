#include "amerikan/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "parallel.hpp"

namespace amerikan {

std::string to_string(OptionKind kind) { return kind == OptionKind::Call ? "call" : "put"; }

OptionKind parse_option_kind(const std::string& text) {
    if (text == "call" || text == "Call" || text == "CALL") return OptionKind::Call;
    if (text == "put" || text == "Put" || text == "PUT") return OptionKind::Put;
    throw std::invalid_argument("option kind must be 'call' or 'put', got '" + text + "'");
}

void MarketParams::validate() const {
    if (!std::isfinite(rate) || rate < 0.0) throw std::invalid_argument("rate must be >= 0");
    if (!std::isfinite(dividend) || dividend < 0.0)
        throw std::invalid_argument("dividend yield must be >= 0");
    if (!std::isfinite(sigma) || sigma <= 0.0) throw std::invalid_argument("sigma must be > 0");
    if (!std::isfinite(expiry) || expiry <= 0.0) throw std::invalid_argument("expiry must be > 0");
}

void OptionSpec::validate() const {
    if (!std::isfinite(strike) || strike <= 0.0) throw std::invalid_argument("strike must be > 0");
}

void EvalPoint::validate(const MarketParams& params) const {
    if (!std::isfinite(start) || start < 0.0 || start >= params.expiry)
        throw std::invalid_argument("start time must satisfy 0 <= s < T");
    if (!std::isfinite(spot) || spot < 0.0) throw std::invalid_argument("spot must be >= 0");
}

TimeSchedule::TimeSchedule(std::vector<double> times, StepPolicy policy)
    : times_(std::move(times)), policy_(policy) {}

TimeSchedule TimeSchedule::uniform(double start, double end, std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("schedule needs at least one step");
    if (!(end > start)) throw std::invalid_argument("schedule end must exceed its start");
    std::vector<double> times(steps + 1);
    const double h = (end - start) / static_cast<double>(steps);
    for (std::size_t k = 0; k <= steps; ++k) times[k] = start + h * static_cast<double>(k);
    times.back() = end;
    return {std::move(times), StepPolicy::Uniform};
}

TimeSchedule TimeSchedule::custom(std::vector<double> times) {
    if (times.size() < 2) throw std::invalid_argument("schedule needs at least one step");
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (!(times[k] > times[k - 1]))
            throw std::invalid_argument("schedule times must be strictly increasing");
    }
    return {std::move(times), StepPolicy::Custom};
}

double payoff(const OptionSpec& spec, double x) {
    if (x < 0.0 || std::isnan(x)) throw std::invalid_argument("payoff: price must be >= 0");
    return spec.kind == OptionKind::Call ? std::max(x - spec.strike, 0.0)
                                         : std::max(spec.strike - x, 0.0);
}

double contact_epsilon(const OptionSpec& spec) { return 1e-12 * std::max(1.0, spec.strike); }

double exercise_rate(const OptionSpec& spec, const MarketParams& params, double x) {
    const double rk = params.rate * spec.strike;
    const double dx = params.dividend * x;
    return spec.kind == OptionKind::Call ? std::max(dx - rk, 0.0) : std::max(rk - dx, 0.0);
}

double driver_q(const OptionSpec& spec, const MarketParams& params, double x, double y) {
    const double g = payoff(spec, x);
    if (y > g + contact_epsilon(spec)) return 0.0;
    return exercise_rate(spec, params, x);
}

double full_driver(const OptionSpec& spec, const MarketParams& params, double x, double y) {
    return -params.rate * y + driver_q(spec, params, x, y);
}

bool driver_vanishes(const OptionSpec& spec, const MarketParams& params) {
    return spec.kind == OptionKind::Call ? params.dividend == 0.0 : params.rate == 0.0;
}

double transition_density(const MarketParams& params, double s, double x, double t, double y) {
    if (!(t > s)) throw std::invalid_argument("transition_density requires t > s");
    if (!(x > 0.0)) throw std::invalid_argument("transition_density requires x > 0");
    if (!(y > 0.0)) return 0.0;
    const double tau = t - s;
    const double vol = params.sigma * std::sqrt(tau);
    const double z = (std::log(y / x) - (params.rate - params.dividend - 0.5 * params.sigma * params.sigma) * tau) / vol;
    return std::exp(-0.5 * z * z) / (y * vol * std::sqrt(2.0 * std::numbers::pi));
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PathBundle simulate_paths(const MarketParams& params, const EvalPoint& point,
                          const TimeSchedule& schedule, std::size_t n_paths, std::uint64_t seed,
                          const SimulationOptions& options) {
    params.validate();
    if (point.spot < 0.0) throw std::invalid_argument("spot must be >= 0");
    if (n_paths == 0) throw std::invalid_argument("n_paths must be >= 1");
    if (schedule.size() < 2) throw std::invalid_argument("empty schedule");
    if (options.block_size == 0) throw std::invalid_argument("block_size must be >= 1");

    const std::size_t n_times = schedule.size();
    PathBundle bundle{schedule, Eigen::MatrixXd(static_cast<Eigen::Index>(n_paths),
                                                static_cast<Eigen::Index>(n_times)),
                      seed, options.block_size, "exact-lognormal", point.spot};

    std::vector<double> drift(n_times - 1), diffusion(n_times - 1);
    const double mu = params.rate - params.dividend - 0.5 * params.sigma * params.sigma;
    for (std::size_t k = 0; k + 1 < n_times; ++k) {
        const double h = schedule.dt(k);
        drift[k] = mu * h;
        diffusion[k] = params.sigma * std::sqrt(h);
    }

    auto& values = bundle.values;
    const std::size_t n_blocks = (n_paths + options.block_size - 1) / options.block_size;
    detail::parallel_tasks(n_blocks, options.workers, [&](std::size_t block) {
        std::mt19937_64 engine(substream_seed(seed, block));
        std::normal_distribution<double> normal(0.0, 1.0);
        const std::size_t first = block * options.block_size;
        const std::size_t last = std::min(n_paths, first + options.block_size);
        for (std::size_t p = first; p < last; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            double x = point.spot;
            values(row, 0) = x;
            for (std::size_t k = 0; k + 1 < n_times; ++k) {
                x *= std::exp(drift[k] + diffusion[k] * normal(engine));
                values(row, static_cast<Eigen::Index>(k + 1)) = x;
            }
        }
    });
    return bundle;
}

double brownian_increment(const MarketParams& params, double x0, double x1, double dt) {
    if (!(x0 > 0.0) || !(x1 > 0.0)) return 0.0;
    const double mu = params.rate - params.dividend - 0.5 * params.sigma * params.sigma;
    return (std::log(x1 / x0) - mu * dt) / params.sigma;
}

}  // namespace amerikan
