#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "amerikan/model.hpp"

namespace amerikan {

/// Malformed or inconsistent suite configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How a measured value is compared with its tolerance.
enum class Bound {
    AtMost,  ///< measured <= tolerance
    Below,   ///< measured < tolerance (ratios that must strictly decrease)
    AtLeast  ///< measured >= tolerance (fitted orders)
};

struct CheckInfo {
    std::string name;
    Bound bound = Bound::AtMost;
    double default_tolerance = 0.0;
    std::string description;
};

/// Every check the harness knows, in execution order.
const std::vector<CheckInfo>& check_catalogue();
const CheckInfo& check_info(const std::string& name);

struct ParameterSet {
    std::string name;
    MarketParams params;
    OptionSpec spec;
    double start = 0.0;
    std::vector<double> spots;  ///< the first spot also anchors the path-level studies
    std::vector<std::string> checks;
    std::map<std::string, double> tolerances;  ///< per-set overrides of the suite table
};

struct SuiteConfig {
    std::vector<ParameterSet> sets;

    std::size_t grid = 800;       ///< n x n obstacle/penalized/semilinear grid
    std::size_t fine_grid = 1600;  ///< refinement grid for the measure identity
    std::vector<std::size_t> grid_ladder{100, 200, 400, 800};
    double penalty = 1e5;
    std::vector<double> penalty_ladder{1e2, 1e3, 1e4, 1e5};
    std::size_t tree_steps = 20000;

    std::size_t paths = 100000;
    std::size_t steps = 50;
    std::vector<std::size_t> step_ladder{25, 50, 100};
    std::vector<std::size_t> path_ladder{25000, 100000, 400000};
    std::vector<std::size_t> se_path_ladder{10000, 40000, 160000};
    std::vector<std::size_t> worker_counts{1, 2, 4};
    std::vector<double> probe_fractions{0.0, 0.25, 0.5, 0.75, 1.0};  ///< of the step count

    double weight_alpha = 1.0;
    std::map<std::string, double> tolerances;  ///< keyed by check name
    std::uint64_t seed = 20240501;
    std::size_t workers = 1;  ///< parameter sets run concurrently on this many threads

    /// Catalogue defaults for every tolerance and no parameter sets.
    static SuiteConfig empty();
    /// The shipped configuration: degenerate call and put sets plus the canonical put set.
    static SuiteConfig defaults();
    /// Missing keys keep their defaults; unknown keys and wrong types raise ConfigError.
    static SuiteConfig from_json(const nlohmann::json& doc);
    static SuiteConfig load(const std::string& path);
    nlohmann::json to_json() const;

    void validate() const;
    double tolerance(const ParameterSet& set, const std::string& check) const;
};

struct CheckOutcome {
    std::string check;
    std::string set;
    double measured = 0.0;
    double tolerance = 0.0;
    Bound bound = Bound::AtMost;
    bool passed = false;
    double runtime_seconds = 0.0;
    nlohmann::json detail;
};

/// Errors of a refinement ladder against its reference, with the least-squares
/// slope of log(error) on log(parameter).
struct ConvergenceSeries {
    std::string study;
    std::string set;
    std::string parameter_name;
    std::vector<double> parameters;
    std::vector<double> errors;
    double fitted_order = 0.0;
    std::vector<std::size_t> non_monotone_rungs;  ///< rungs whose error did not decrease

    bool monotone() const { return non_monotone_rungs.empty(); }
    nlohmann::json to_json() const;
};

struct SuiteReport {
    std::vector<CheckOutcome> checks;
    std::vector<ConvergenceSeries> series;
    nlohmann::json environment;
    nlohmann::json config;
    double runtime_seconds = 0.0;

    bool passed() const;
    std::size_t failures() const;
    nlohmann::json to_json() const;
    /// check,parameter_set,measured,tolerance,pass
    void write_csv(std::ostream& out) const;
};

/// Runs every configured check of every parameter set. A check that hits a
/// NumericalError is recorded as failed and the suite moves on; other
/// exceptions abort.
SuiteReport run_equivalence_suite(const SuiteConfig& cfg);

/// Grid, penalty, standard-error and K-process ladders for every parameter set.
std::vector<ConvergenceSeries> refinement_study(const SuiteConfig& cfg);

/// Compiler, library versions and thread count.
nlohmann::json environment_fingerprint();

/// Least-squares slope of log(errors) against log(parameters), over positive pairs.
double fitted_order(const std::vector<double>& parameters, const std::vector<double>& errors);

/// Mass and first moment of the transition density from (s, x) to t by adaptive quadrature.
struct DensityMoments {
    double mass = 0.0;
    double mean = 0.0;
};
DensityMoments density_moments(const MarketParams& params, double s, double x, double t);

std::string to_string(Bound bound);

}  // namespace amerikan
