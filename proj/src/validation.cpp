#include "amerikan/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include <Eigen/Core>
#include <boost/version.hpp>

#include "amerikan/bsde.hpp"
#include "amerikan/io.hpp"
#include "amerikan/lattice.hpp"
#include "amerikan/pde.hpp"
#include "amerikan/quadrature.hpp"
#include "parallel.hpp"

namespace amerikan {

using nlohmann::json;

std::string to_string(Bound bound) {
    switch (bound) {
        case Bound::AtMost: return "at_most";
        case Bound::Below: return "below";
        case Bound::AtLeast: return "at_least";
    }
    return "?";
}

const std::vector<CheckInfo>& check_catalogue() {
    static const std::vector<CheckInfo> catalogue = {
        {"tree_richardson_gap", Bound::AtMost, 2e-4,
         "relative gap between the N and 2N lattice values"},
        {"pde_vs_european", Bound::AtMost, 5e-4,
         "relative error of obstacle, penalized and semilinear values against the European quadrature"},
        {"pde_vs_tree", Bound::AtMost, 1e-3,
         "relative error of obstacle, penalized and semilinear values against the tree oracle"},
        {"pde_pairwise_sup", Bound::AtMost, 1e-3,
         "largest pairwise sup-norm distance between PDE solutions, in units of the strike"},
        {"pde_pairwise_weighted_l2", Bound::AtMost, 1e-3,
         "largest pairwise weighted L2 distance between PDE solutions, in units of the strike"},
        {"emergent_obstacle", Bound::AtMost, 1e-2,
         "largest undershoot (payoff - semilinear value)^+, in units of the strike"},
        {"bsde_vs_european", Bound::AtMost, 3.0,
         "|Y0 - European quadrature| in standard errors, both schemes"},
        {"bsde_vs_pde", Bound::AtMost, 3.0, "|Y0 - obstacle PDE value| in standard errors, both schemes"},
        {"lsmc_estimator_order", Bound::AtMost, 3.0,
         "(low-bias - in-sample estimate) in combined standard errors"},
        {"representation_residual", Bound::AtMost, 3.0,
         "largest |mean representation residual| in bootstrap standard errors"},
        {"z_identification", Bound::AtMost, 0.10,
         "relative L2 distance between regressed Z and sigma x du/dx, both schemes"},
        {"k_equivalence_refinement", Bound::Below, 1.0,
         "largest ratio of consecutive mean pathwise sup|K_dm - K_formula| under joint refinement"},
        {"k_bound_violation_fraction", Bound::AtMost, 0.01,
         "fraction of schedule pairs where the K increment exceeds the formula bound at 3 sigma"},
        {"skorokhod_flatness", Bound::AtMost, 1e-4,
         "sum (Y - g) dK divided by K E[K_T]"},
        {"k_total_vs_premium", Bound::AtMost, 3.0,
         "|discounted E[K_T] - early exercise premium| in standard errors"},
        {"measure_identity", Bound::AtMost, 5e-2,
         "relative L1 gap between residual density and q on the contact interior"},
        {"measure_refinement", Bound::Below, 1.0,
         "ratio of the measure gap on the fine grid to the main grid"},
        {"premium_decomposition", Bound::AtMost, 2e-3,
         "relative error of European quadrature + premium against the tree oracle"},
        {"boundary_structure", Bound::AtMost, 0.0,
         "structural violations plus monotonicity breaks of the exercise boundary"},
        {"penalty_monotone", Bound::Below, 1.0,
         "largest ratio of consecutive sup distances from penalized to obstacle solution"},
        {"penalty_rate_fit", Bound::AtMost, 0.25,
         "relative spread of n * max(g - u_n)^+ along the penalty ladder"},
        {"grid_ladder_monotone", Bound::Below, 1.0,
         "largest ratio of consecutive obstacle errors against the tree oracle along the grid ladder"},
        {"grid_convergence_order", Bound::AtLeast, 0.9,
         "fitted order of the obstacle error in the time step along the grid ladder"},
        {"lsmc_se_halving", Bound::AtMost, 0.1,
         "largest |SE ratio - 1/2| along the path ladder (paths x4 per rung)"},
        {"density_normalization", Bound::AtMost, 1e-8, "|integral of the transition density - 1|"},
        {"density_mean", Bound::AtMost, 1e-6, "relative error of the density mean against x e^{(r-d)t}"},
        {"determinism", Bound::AtMost, 0.0,
         "largest absolute difference of Monte Carlo outputs across worker counts"},
    };
    return catalogue;
}

const CheckInfo& check_info(const std::string& name) {
    for (const auto& c : check_catalogue())
        if (c.name == name) return c;
    throw ConfigError("unknown check '" + name + "'");
}

// ---------------------------------------------------------------- configuration

namespace {

void require_increasing(const char* what, const auto& ladder, std::size_t min_length) {
    if (ladder.size() < min_length)
        throw ConfigError(std::string(what) + " needs at least " + std::to_string(min_length) + " rungs");
    for (std::size_t i = 1; i < ladder.size(); ++i)
        if (!(ladder[i] > ladder[i - 1])) throw ConfigError(std::string(what) + " must be strictly increasing");
}

template <class T>
void read_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

ParameterSet parse_set(const json& obj) {
    reject_unknown(obj,
                   {"name", "kind", "strike", "rate", "dividend", "sigma", "expiry", "start", "spots",
                    "checks", "tolerances"},
                   "parameter set");
    for (const char* key : {"name", "kind", "strike", "rate", "dividend", "sigma", "expiry", "spots", "checks"})
        if (!obj.contains(key)) throw ConfigError(std::string("parameter set is missing '") + key + "'");
    ParameterSet set;
    set.name = obj.at("name").get<std::string>();
    try {
        set.spec.kind = parse_option_kind(obj.at("kind").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    set.spec.strike = obj.at("strike").get<double>();
    set.params.rate = obj.at("rate").get<double>();
    set.params.dividend = obj.at("dividend").get<double>();
    set.params.sigma = obj.at("sigma").get<double>();
    set.params.expiry = obj.at("expiry").get<double>();
    read_if(obj, "start", set.start);
    set.spots = obj.at("spots").get<std::vector<double>>();
    set.checks = obj.at("checks").get<std::vector<std::string>>();
    read_if(obj, "tolerances", set.tolerances);
    return set;
}

json set_to_json(const ParameterSet& set) {
    json j = {{"name", set.name},
              {"kind", to_string(set.spec.kind)},
              {"strike", set.spec.strike},
              {"rate", set.params.rate},
              {"dividend", set.params.dividend},
              {"sigma", set.params.sigma},
              {"expiry", set.params.expiry},
              {"start", set.start},
              {"spots", set.spots},
              {"checks", set.checks}};
    if (!set.tolerances.empty()) j["tolerances"] = set.tolerances;
    return j;
}

}  // namespace

SuiteConfig SuiteConfig::empty() {
    SuiteConfig cfg;
    for (const auto& c : check_catalogue()) cfg.tolerances[c.name] = c.default_tolerance;
    return cfg;
}

SuiteConfig SuiteConfig::defaults() {
    SuiteConfig cfg = empty();
    const MarketParams base{0.05, 0.0, 0.2, 1.0};

    ParameterSet call;
    call.name = "call_no_dividend";
    call.params = base;
    call.spec = {OptionKind::Call, 100.0};
    call.spots = {100.0, 80.0, 120.0};
    call.checks = {"pde_vs_european", "pde_pairwise_sup", "bsde_vs_european", "boundary_structure",
                   "skorokhod_flatness", "z_identification", "density_normalization", "density_mean"};
    // the European delta is smooth enough here to hold Z to a tighter bound
    call.tolerances = {{"z_identification", 0.05}};

    ParameterSet put_r0;
    put_r0.name = "put_zero_rate";
    put_r0.params = base;
    put_r0.params.rate = 0.0;
    put_r0.spec = {OptionKind::Put, 100.0};
    put_r0.spots = call.spots;
    put_r0.checks = {"pde_vs_european", "pde_pairwise_sup", "bsde_vs_european", "boundary_structure",
                     "skorokhod_flatness", "representation_residual", "density_normalization",
                     "density_mean"};

    ParameterSet put;
    put.name = "canonical_put";
    put.params = base;
    put.spec = {OptionKind::Put, 100.0};
    put.spots = {100.0, 80.0, 120.0};
    for (const auto& c : check_catalogue())
        if (c.name != "pde_vs_european" && c.name != "bsde_vs_european") put.checks.push_back(c.name);

    cfg.sets = {call, put_r0, put};
    return cfg;
}

SuiteConfig SuiteConfig::from_json(const json& doc) {
    SuiteConfig cfg = empty();
    try {
        reject_unknown(doc,
                       {"seed", "workers", "weight_alpha", "pde", "tree", "monte_carlo", "tolerances",
                        "parameter_sets"},
                       "suite config");
        read_if(doc, "seed", cfg.seed);
        read_if(doc, "workers", cfg.workers);
        read_if(doc, "weight_alpha", cfg.weight_alpha);
        if (doc.contains("pde")) {
            const json& pde = doc.at("pde");
            reject_unknown(pde, {"grid", "fine_grid", "grid_ladder", "penalty", "penalty_ladder"}, "pde");
            read_if(pde, "grid", cfg.grid);
            read_if(pde, "fine_grid", cfg.fine_grid);
            read_if(pde, "grid_ladder", cfg.grid_ladder);
            read_if(pde, "penalty", cfg.penalty);
            read_if(pde, "penalty_ladder", cfg.penalty_ladder);
        }
        if (doc.contains("tree")) {
            reject_unknown(doc.at("tree"), {"steps"}, "tree");
            read_if(doc.at("tree"), "steps", cfg.tree_steps);
        }
        if (doc.contains("monte_carlo")) {
            const json& mc = doc.at("monte_carlo");
            reject_unknown(mc,
                           {"paths", "steps", "step_ladder", "path_ladder", "se_path_ladder",
                            "worker_counts", "probe_fractions"},
                           "monte_carlo");
            read_if(mc, "paths", cfg.paths);
            read_if(mc, "steps", cfg.steps);
            read_if(mc, "step_ladder", cfg.step_ladder);
            read_if(mc, "path_ladder", cfg.path_ladder);
            read_if(mc, "se_path_ladder", cfg.se_path_ladder);
            read_if(mc, "worker_counts", cfg.worker_counts);
            read_if(mc, "probe_fractions", cfg.probe_fractions);
        }
        if (doc.contains("tolerances")) {
            for (const auto& [name, value] : doc.at("tolerances").items()) {
                check_info(name);
                cfg.tolerances[name] = value.get<double>();
            }
        }
        if (!doc.contains("parameter_sets")) throw ConfigError("suite config needs 'parameter_sets'");
        for (const json& s : doc.at("parameter_sets")) cfg.sets.push_back(parse_set(s));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("suite config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

SuiteConfig SuiteConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open suite config " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    return from_json(doc);
}

json SuiteConfig::to_json() const {
    json sets_json = json::array();
    for (const auto& s : sets) sets_json.push_back(set_to_json(s));
    return {{"seed", seed},
            {"workers", workers},
            {"weight_alpha", weight_alpha},
            {"pde",
             {{"grid", grid},
              {"fine_grid", fine_grid},
              {"grid_ladder", grid_ladder},
              {"penalty", penalty},
              {"penalty_ladder", penalty_ladder}}},
            {"tree", {{"steps", tree_steps}}},
            {"monte_carlo",
             {{"paths", paths},
              {"steps", steps},
              {"step_ladder", step_ladder},
              {"path_ladder", path_ladder},
              {"se_path_ladder", se_path_ladder},
              {"worker_counts", worker_counts},
              {"probe_fractions", probe_fractions}}},
            {"tolerances", tolerances},
            {"parameter_sets", sets_json}};
}

void SuiteConfig::validate() const {
    if (sets.empty()) throw ConfigError("suite config needs at least one parameter set");
    std::set<std::string> names;
    for (const auto& set : sets) {
        if (set.name.empty()) throw ConfigError("parameter set without a name");
        if (!names.insert(set.name).second) throw ConfigError("duplicate parameter set '" + set.name + "'");
        try {
            set.params.validate();
            set.spec.validate();
            if (set.spots.empty()) throw ConfigError("no spots");
            for (double x : set.spots) {
                EvalPoint{set.start, x}.validate(set.params);
                if (!(x > 0.0)) throw ConfigError("spots must be positive");
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError("parameter set '" + set.name + "': " + e.what());
        }
        std::set<std::string> seen;
        for (const auto& c : set.checks) {
            check_info(c);
            if (!seen.insert(c).second)
                throw ConfigError("check '" + c + "' listed twice in '" + set.name + "'");
        }
        for (const auto& [name, value] : set.tolerances) {
            check_info(name);
            if (!std::isfinite(value)) throw ConfigError("tolerance for '" + name + "' is not finite");
        }
        for (const auto& c : set.checks)
            if (!set.tolerances.count(c) && !tolerances.count(c))
                throw ConfigError("no tolerance for check '" + c + "'");
    }
    for (const auto& [name, value] : tolerances) {
        check_info(name);
        if (!std::isfinite(value)) throw ConfigError("tolerance for '" + name + "' is not finite");
    }
    if (grid < 3 || fine_grid <= grid) throw ConfigError("need 3 <= grid < fine_grid");
    require_increasing("grid_ladder", grid_ladder, 2);
    if (grid_ladder.front() < 3) throw ConfigError("grid_ladder rungs must be >= 3");
    require_increasing("penalty_ladder", penalty_ladder, 2);
    if (penalty_ladder.front() < 1.0 || penalty < 1.0) throw ConfigError("penalties must be >= 1");
    if (tree_steps == 0) throw ConfigError("tree steps must be positive");
    if (paths < 2 || steps == 0) throw ConfigError("need at least 2 paths and 1 step");
    require_increasing("step_ladder", step_ladder, 2);
    require_increasing("path_ladder", path_ladder, 2);
    if (step_ladder.size() != path_ladder.size())
        throw ConfigError("step_ladder and path_ladder must have the same length");
    require_increasing("se_path_ladder", se_path_ladder, 2);
    if (worker_counts.empty() || std::count(worker_counts.begin(), worker_counts.end(), 0u))
        throw ConfigError("worker_counts must be nonempty and positive");
    for (double f : probe_fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("probe fractions must lie in [0, 1]");
    if (!(weight_alpha > 0.75)) throw ConfigError("weight_alpha must exceed 3/4");
    if (workers == 0) throw ConfigError("workers must be positive");
}

double SuiteConfig::tolerance(const ParameterSet& set, const std::string& check) const {
    if (auto it = set.tolerances.find(check); it != set.tolerances.end()) return it->second;
    if (auto it = tolerances.find(check); it != tolerances.end()) return it->second;
    throw ConfigError("no tolerance for check '" + check + "'");
}

// ---------------------------------------------------------------- report

json ConvergenceSeries::to_json() const {
    json j = {{"study", study},
              {"set", set},
              {"parameter", parameter_name},
              {"parameters", parameters},
              {"errors", errors},
              {"non_monotone_rungs", non_monotone_rungs},
              {"monotone", monotone()}};
    j["fitted_order"] = std::isfinite(fitted_order) ? json(fitted_order) : json(nullptr);
    return j;
}

bool SuiteReport::passed() const { return failures() == 0; }

std::size_t SuiteReport::failures() const {
    return static_cast<std::size_t>(
        std::count_if(checks.begin(), checks.end(), [](const CheckOutcome& c) { return !c.passed; }));
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json SuiteReport::to_json() const {
    json out;
    out["passed"] = passed();
    out["failures"] = failures();
    out["runtime_seconds"] = runtime_seconds;
    out["environment"] = environment;
    out["config"] = config;
    json list = json::array();
    for (const auto& c : checks) {
        list.push_back({{"check", c.check},
                        {"set", c.set},
                        {"measured", number_or_null(c.measured)},
                        {"tolerance", c.tolerance},
                        {"bound", to_string(c.bound)},
                        {"passed", c.passed},
                        {"runtime_seconds", c.runtime_seconds},
                        {"detail", c.detail}});
    }
    out["checks"] = list;
    json s = json::array();
    for (const auto& series_entry : series) s.push_back(series_entry.to_json());
    out["series"] = s;
    return out;
}

void SuiteReport::write_csv(std::ostream& out) const {
    out << "check,parameter_set,measured,tolerance,pass\n";
    for (const auto& c : checks)
        out << c.check << ',' << c.set << ',' << format_double(c.measured) << ','
            << format_double(c.tolerance) << ',' << (c.passed ? "true" : "false") << '\n';
}

json environment_fingerprint() {
    json env;
#if defined(__clang__)
    env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    env["compiler"] = std::string("gcc ") + __VERSION__;
#else
    env["compiler"] = "unknown";
#endif
    env["cplusplus"] = static_cast<long>(__cplusplus);
    env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                   std::to_string(EIGEN_MINOR_VERSION);
    env["boost"] = BOOST_LIB_VERSION;
#ifdef NDEBUG
    env["assertions"] = false;
#else
    env["assertions"] = true;
#endif
    env["hardware_threads"] = std::thread::hardware_concurrency();
    return env;
}

double fitted_order(const std::vector<double>& parameters, const std::vector<double>& errors) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < std::min(parameters.size(), errors.size()); ++i) {
        if (!(parameters[i] > 0.0) || !(errors[i] > 0.0)) continue;
        const double x = std::log(parameters[i]);
        const double y = std::log(errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) return NAN;
    const double denom = static_cast<double>(n) * sxx - sx * sx;
    if (denom == 0.0) return NAN;
    return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

DensityMoments density_moments(const MarketParams& params, double s, double x, double t) {
    params.validate();
    if (!(x > 0.0) || !(t > s)) throw std::invalid_argument("density moments need x > 0 and t > s");
    const double tau = t - s;
    const double sd = params.sigma * std::sqrt(tau);
    const double centre = std::log(x) + (params.rate - params.dividend - 0.5 * params.sigma * params.sigma) * tau;
    // the mean's integrand peaks one variance above the centre
    const double lo = centre - 14.0 * sd;
    const double hi = centre + sd * sd + 14.0 * sd;
    auto density_dv = [&](double v) {
        const double y = std::exp(v);
        return transition_density(params, s, x, t, y) * y;
    };
    DensityMoments m;
    m.mass = integrate(density_dv, lo, hi, 1e-12).value;
    m.mean = integrate([&](double v) { return std::exp(v) * density_dv(v); }, lo, hi, 1e-10 * x).value;
    return m;
}

// ---------------------------------------------------------------- the suite

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t name_hash(const std::string& name) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

enum SeedTag : std::uint64_t { MainRun = 1, KLadder = 2, SeLadder = 3 };

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
    if (a.size() == 0) return 0.0;
    return (a - b).cwiseAbs().maxCoeff();
}

double sup_distance(const Surface& a, const Surface& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Ratio of consecutive values; two zeros count as a decrease.
double worst_ratio(const std::vector<double>& v) {
    double worst = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double r = v[i - 1] > 0.0 ? v[i] / v[i - 1] : (v[i] > 0.0 ? INFINITY : 0.0);
        worst = std::max(worst, r);
    }
    return worst;
}

ConvergenceSeries make_series(std::string study, const std::string& set, std::string parameter_name,
                              std::vector<double> parameters, std::vector<double> errors) {
    ConvergenceSeries s;
    s.study = std::move(study);
    s.set = set;
    s.parameter_name = std::move(parameter_name);
    s.parameters = std::move(parameters);
    s.errors = std::move(errors);
    s.fitted_order = fitted_order(s.parameters, s.errors);
    for (std::size_t i = 1; i < s.errors.size(); ++i) {
        const bool flat_zero = s.errors[i] == 0.0 && s.errors[i - 1] == 0.0;
        if (!(s.errors[i] < s.errors[i - 1]) && !flat_zero) s.non_monotone_rungs.push_back(i);
    }
    return s;
}

struct MonteCarloRun {
    std::shared_ptr<const PathBundle> paths;
    BsdeSolution snell;
    BsdeSolution driver;
};

struct Measurement {
    double value = 0.0;
    json detail = json::object();
    std::vector<ConvergenceSeries> series;
};

/// Lazily computed artefacts of one parameter set, shared between its checks.
class SetContext {
public:
    SetContext(const SuiteConfig& cfg, const ParameterSet& set) : cfg_(cfg), set_(set) {
        base_seed_ = substream_seed(cfg.seed, name_hash(set.name));
        weight_.alpha = cfg.weight_alpha;
    }

    const ParameterSet& set() const { return set_; }
    const SuiteConfig& cfg() const { return cfg_; }
    const WeightSpec& weight() const { return weight_; }
    EvalPoint point(std::size_t i) const { return {set_.start, set_.spots[i]}; }
    std::size_t n_spots() const { return set_.spots.size(); }

    std::uint64_t seed(SeedTag tag, std::size_t index) const {
        return substream_seed(base_seed_, static_cast<std::uint64_t>(tag) * 1024 + index);
    }

    const OracleValue& tree(std::size_t i) {
        if (trees_.empty()) trees_.resize(n_spots());
        if (!trees_[i]) trees_[i] = tree_oracle_american(set_.params, set_.spec, point(i), cfg_.tree_steps);
        return *trees_[i];
    }

    double european(std::size_t i) {
        if (europeans_.empty()) europeans_.resize(n_spots());
        if (!europeans_[i]) europeans_[i] = european_quadrature(set_.params, set_.spec, point(i));
        return *europeans_[i];
    }

    GridSpec grid(std::size_t n) const { return GridSpec::standard(set_.params, set_.spec, n, n); }

    const PdeSolution& obstacle() {
        if (!obstacle_) obstacle_ = solve_obstacle(set_.params, set_.spec, grid(cfg_.grid));
        return *obstacle_;
    }
    const PdeSolution& penalized() {
        if (!penalized_) penalized_ = solve_penalized(set_.params, set_.spec, grid(cfg_.grid), cfg_.penalty);
        return *penalized_;
    }
    const PdeSolution& semilinear() {
        if (!semilinear_) semilinear_ = solve_semilinear(set_.params, set_.spec, grid(cfg_.grid));
        return *semilinear_;
    }

    const MeasureDensity& measure() {
        if (!measure_) measure_ = reconstruct_measure(obstacle(), set_.params, set_.spec);
        return *measure_;
    }

    double premium(std::size_t i) {
        if (premiums_.empty()) premiums_.resize(n_spots());
        if (!premiums_[i]) premiums_[i] = eep_premium(set_.params, set_.spec, point(i), obstacle().boundary);
        return *premiums_[i];
    }

    MonteCarloRun run_monte_carlo(std::size_t spot, std::size_t steps, std::size_t paths, std::uint64_t seed,
                                  std::size_t workers, bool low_bias, bool driver) const {
        SimulationOptions sim;
        sim.workers = workers;
        const auto schedule = TimeSchedule::uniform(set_.start, set_.params.expiry, steps);
        MonteCarloRun run;
        run.paths = std::make_shared<const PathBundle>(
            simulate_paths(set_.params, point(spot), schedule, paths, seed, sim));
        LsmcOptions opts;
        opts.low_bias = low_bias;
        opts.simulation = sim;
        run.snell = snell_lsmc(run.paths, set_.spec, set_.params, RegressionBasis{}, opts);
        if (driver) run.driver = driver_bsde_solve(run.paths, set_.spec, set_.params, RegressionBasis{});
        return run;
    }

    const MonteCarloRun& main_run(std::size_t spot) {
        if (runs_.empty()) runs_.resize(n_spots());
        if (!runs_[spot])
            runs_[spot] = run_monte_carlo(spot, cfg_.steps, cfg_.paths, seed(MainRun, spot), 0, true, true);
        return *runs_[spot];
    }

    /// Ladders shared by more than one check are computed once.
    Measurement cached(const std::string& key, Measurement (*study)(SetContext&)) {
        auto it = ladders_.find(key);
        if (it == ladders_.end()) it = ladders_.emplace(key, study(*this)).first;
        return it->second;
    }

    const ContactMatrix& main_contact() {
        if (!contact_) contact_ = contact_from_pde(*main_run(0).paths, set_.spec, obstacle());
        return *contact_;
    }

private:
    const SuiteConfig& cfg_;
    const ParameterSet& set_;
    std::uint64_t base_seed_ = 0;
    WeightSpec weight_;
    std::vector<std::optional<OracleValue>> trees_;
    std::vector<std::optional<double>> europeans_;
    std::vector<std::optional<double>> premiums_;
    std::optional<PdeSolution> obstacle_, penalized_, semilinear_;
    std::optional<MeasureDensity> measure_;
    std::vector<std::optional<MonteCarloRun>> runs_;
    std::optional<ContactMatrix> contact_;
    std::map<std::string, Measurement> ladders_;
};

double relative(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<const PdeSolution*> pde_trio(SetContext& ctx) {
    return {&ctx.obstacle(), &ctx.penalized(), &ctx.semilinear()};
}

Measurement pde_vs(SetContext& ctx, const std::function<double(std::size_t)>& reference) {
    Measurement m;
    for (const PdeSolution* sol : pde_trio(ctx)) {
        json per_spot = json::array();
        for (std::size_t i = 0; i < ctx.n_spots(); ++i) {
            const double ref = reference(i);
            const double v = sol->value_at(ctx.set().start, ctx.set().spots[i]);
            const double err = relative(v, ref);
            m.value = std::max(m.value, err);
            per_spot.push_back({{"spot", ctx.set().spots[i]}, {"value", v}, {"reference", ref}, {"relative_error", err}});
        }
        m.detail[to_string(sol->method)] = per_spot;
    }
    return m;
}

Measurement bsde_vs(SetContext& ctx, const std::function<double(std::size_t)>& reference) {
    Measurement m;
    json rows = json::array();
    for (std::size_t i = 0; i < ctx.n_spots(); ++i) {
        const MonteCarloRun& run = ctx.main_run(i);
        const double ref = reference(i);
        for (const BsdeSolution* sol : {&run.snell, &run.driver}) {
            const double gap = std::abs(sol->y0.value - ref);
            // a start deep in the exercise region stops every path at once, leaving
            // no sampling error to measure the reference's own discretization against
            const double se = std::max(sol->y0.std_error, 1e-9 * ctx.set().spec.strike);
            const double z = gap / se;
            m.value = std::max(m.value, z);
            rows.push_back({{"spot", ctx.set().spots[i]},
                            {"method", to_string(sol->method)},
                            {"y0", sol->y0.value},
                            {"std_error", sol->y0.std_error},
                            {"reference", ref},
                            {"sigmas", number_or_null(z)}});
        }
    }
    m.detail["runs"] = rows;
    return m;
}

Measurement grid_ladder(SetContext& ctx) {
    const auto& set = ctx.set();
    std::vector<double> dts, errors;
    json rows = json::array();
    for (std::size_t n : ctx.cfg().grid_ladder) {
        const PdeSolution sol = solve_obstacle(set.params, set.spec, ctx.grid(n));
        double err = 0.0;
        for (std::size_t i = 0; i < ctx.n_spots(); ++i)
            err = std::max(err, relative(sol.value_at(set.start, set.spots[i]), ctx.tree(i).value));
        dts.push_back(set.params.expiry / static_cast<double>(n));
        errors.push_back(err);
        rows.push_back({{"grid", n}, {"relative_error", err}});
    }
    Measurement m;
    m.detail["rungs"] = rows;
    m.series.push_back(make_series("obstacle_grid_ladder", set.name, "time_step", dts, errors));
    return m;
}

Measurement penalty_ladder(SetContext& ctx) {
    const auto& set = ctx.set();
    const PdeSolution& obstacle = ctx.obstacle();
    std::vector<double> inverse, distances, scaled;
    json rows = json::array();
    for (double n : ctx.cfg().penalty_ladder) {
        const PdeSolution sol = solve_penalized(set.params, set.spec, ctx.grid(ctx.cfg().grid), n);
        const double dist = sup_distance(sol.u, obstacle.u);
        double undershoot = 0.0;
        for (Eigen::Index k = 0; k < sol.u.rows(); ++k)
            for (Eigen::Index i = 0; i < sol.u.cols(); ++i)
                undershoot = std::max(undershoot, sol.obstacle[static_cast<std::size_t>(i)] - sol.u(k, i));
        inverse.push_back(1.0 / n);
        distances.push_back(dist);
        scaled.push_back(n * undershoot);
        rows.push_back({{"penalty", n}, {"sup_distance", dist}, {"undershoot", undershoot}, {"n_times_undershoot", n * undershoot}});
    }
    // least-squares C in undershoot = C / n
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < inverse.size(); ++i) {
        num += scaled[i] * inverse[i] * inverse[i];
        den += inverse[i] * inverse[i];
    }
    Measurement m;
    m.detail["rungs"] = rows;
    m.detail["fitted_c"] = den > 0.0 ? num / den : 0.0;
    m.series.push_back(make_series("penalty_ladder", set.name, "inverse_penalty", inverse, distances));
    m.detail["distances"] = distances;
    m.detail["scaled_undershoot"] = scaled;
    return m;
}

Measurement k_ladder(SetContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto& set = ctx.set();
    std::vector<double> dts, sups, y_sups;
    json rows = json::array();
    for (std::size_t r = 0; r < cfg.step_ladder.size(); ++r) {
        const MonteCarloRun run =
            ctx.run_monte_carlo(0, cfg.step_ladder[r], cfg.path_ladder[r], ctx.seed(KLadder, r), 0, false, false);
        const ContactMatrix contact = contact_from_pde(*run.paths, set.spec, ctx.obstacle());
        const Eigen::MatrixXd kf = k_formula(*run.paths, set.spec, set.params, contact);
        const double sup = k_discrepancy(run.snell.k, kf).mean_sup;
        const ContactMatrix y_contact = contact_from_values(run.snell, ctx.obstacle().contact_tolerance());
        const Eigen::MatrixXd kf_y = k_formula(*run.paths, set.spec, set.params, y_contact);
        const double y_sup = k_discrepancy(run.snell.k, kf_y).mean_sup;
        dts.push_back((set.params.expiry - set.start) / static_cast<double>(cfg.step_ladder[r]));
        sups.push_back(sup);
        y_sups.push_back(y_sup);
        rows.push_back({{"steps", cfg.step_ladder[r]},
                        {"paths", cfg.path_ladder[r]},
                        {"mean_sup_pde_contact", sup},
                        {"mean_sup_value_contact", y_sup}});
    }
    Measurement m;
    m.detail["rungs"] = rows;
    m.series.push_back(make_series("k_equivalence_pde_contact", set.name, "time_step", dts, sups));
    m.series.push_back(make_series("k_equivalence_value_contact", set.name, "time_step", dts, y_sups));
    m.value = worst_ratio(sups);
    return m;
}

Measurement se_ladder(SetContext& ctx) {
    const auto& cfg = ctx.cfg();
    std::vector<double> inverse, ses;
    for (std::size_t r = 0; r < cfg.se_path_ladder.size(); ++r) {
        const MonteCarloRun run =
            ctx.run_monte_carlo(0, cfg.steps, cfg.se_path_ladder[r], ctx.seed(SeLadder, r), 0, false, false);
        inverse.push_back(1.0 / static_cast<double>(cfg.se_path_ladder[r]));
        ses.push_back(run.snell.y0.std_error);
    }
    Measurement m;
    m.detail["paths"] = cfg.se_path_ladder;
    m.detail["std_errors"] = ses;
    m.series.push_back(make_series("lsmc_standard_error", ctx.set().name, "inverse_paths", inverse, ses));
    double worst = 0.0;
    json ratios = json::array();
    for (std::size_t i = 1; i < ses.size(); ++i) {
        const double growth = static_cast<double>(cfg.se_path_ladder[i]) / static_cast<double>(cfg.se_path_ladder[i - 1]);
        const double expected = 1.0 / std::sqrt(growth);
        const double ratio = ses[i - 1] > 0.0 ? ses[i] / ses[i - 1] : (ses[i] > 0.0 ? INFINITY : expected);
        ratios.push_back({{"ratio", number_or_null(ratio)}, {"expected", expected}});
        worst = std::max(worst, std::abs(ratio - expected));
    }
    m.detail["ratios"] = ratios;
    m.value = worst;
    return m;
}

Measurement measure_check(SetContext& ctx, const std::string& check) {
    const MeasureDensity& main = ctx.measure();
    Measurement m;
    m.detail["interior_cells"] = main.interior_cells;
    m.detail["relative_l1"] = number_or_null(main.relative_l1);
    if (check == "measure_identity") {
        m.value = main.relative_l1;
        return m;
    }
    const auto& set = ctx.set();
    const PdeSolution fine = solve_obstacle(set.params, set.spec, ctx.grid(ctx.cfg().fine_grid));
    const MeasureDensity fm = reconstruct_measure(fine, set.params, set.spec);
    m.detail["fine_relative_l1"] = number_or_null(fm.relative_l1);
    m.detail["fine_interior_cells"] = fm.interior_cells;
    m.value = worst_ratio({main.relative_l1, fm.relative_l1});
    return m;
}

Measurement boundary_check(SetContext& ctx) {
    const PdeSolution& sol = ctx.obstacle();
    const BoundaryCurve& curve = sol.boundary;
    Measurement m;
    json violations = json::array();
    for (const auto& v : curve.violations) violations.push_back({{"slice", v.slice}, {"reason", v.reason}});
    std::size_t breaks = 0;
    std::optional<double> previous;
    json level_breaks = json::array();
    for (std::size_t k = 0; k < curve.levels.size(); ++k) {
        if (!curve.levels[k]) continue;
        const double level = *curve.levels[k];
        if (previous) {
            const bool wrong = ctx.set().spec.is_put() ? level < *previous : level > *previous;
            if (wrong) {
                ++breaks;
                if (level_breaks.size() < 20) level_breaks.push_back({{"slice", k}, {"level", level}, {"previous", *previous}});
            }
        }
        previous = level;
    }
    std::size_t empty = 0;
    for (const auto& l : curve.levels) empty += l ? 0 : 1;
    m.detail["violations"] = violations;
    m.detail["monotonicity_breaks"] = level_breaks;
    m.detail["slices_without_contact"] = empty;
    m.detail["slices"] = curve.levels.size();
    if (curve.levels.size() >= 2 && curve.levels[curve.levels.size() - 2])
        m.detail["level_before_expiry"] = *curve.levels[curve.levels.size() - 2];
    if (curve.levels.front()) m.detail["level_at_start"] = *curve.levels.front();
    m.value = static_cast<double>(curve.violations.size() + breaks);
    return m;
}

Measurement determinism_check(SetContext& ctx) {
    const auto& cfg = ctx.cfg();
    std::optional<MonteCarloRun> first;
    Measurement m;
    json rows = json::array();
    for (std::size_t w : cfg.worker_counts) {
        MonteCarloRun run = ctx.run_monte_carlo(0, cfg.steps, cfg.paths, ctx.seed(MainRun, 0), w, true, true);
        if (!first) {
            first = std::move(run);
            rows.push_back({{"workers", w}, {"max_difference", 0.0}});
            continue;
        }
        double diff = 0.0;
        diff = std::max(diff, max_abs_diff(run.paths->values, first->paths->values));
        diff = std::max(diff, max_abs_diff(run.snell.y, first->snell.y));
        diff = std::max(diff, max_abs_diff(run.snell.k, first->snell.k));
        diff = std::max(diff, max_abs_diff(run.driver.y, first->driver.y));
        diff = std::max(diff, max_abs_diff(run.driver.z, first->driver.z));
        diff = std::max(diff, std::abs(run.snell.y0.value - first->snell.y0.value));
        diff = std::max(diff, std::abs(run.snell.y0_low->value - first->snell.y0_low->value));
        diff = std::max(diff, std::abs(run.driver.y0.value - first->driver.y0.value));
        // bitwise comparison: any difference, even a NaN, must register
        if (run.snell.y0.value != first->snell.y0.value || run.driver.y0.value != first->driver.y0.value)
            diff = std::max(diff, std::numeric_limits<double>::min());
        rows.push_back({{"workers", w}, {"max_difference", diff}});
        m.value = std::max(m.value, diff);
    }
    m.detail["runs"] = rows;
    m.detail["snell_y0"] = first->snell.y0.value;
    m.detail["driver_y0"] = first->driver.y0.value;
    return m;
}

Measurement measure(SetContext& ctx, const std::string& check) {
    const auto& set = ctx.set();
    const double strike = set.spec.strike;
    Measurement m;

    if (check == "tree_richardson_gap") {
        json rows = json::array();
        for (std::size_t i = 0; i < ctx.n_spots(); ++i) {
            const OracleValue& o = ctx.tree(i);
            m.value = std::max(m.value, o.relative_gap());
            rows.push_back({{"spot", set.spots[i]}, {"value", o.value}, {"coarse", o.coarse}, {"fine", o.fine}});
        }
        m.detail["oracle"] = rows;
    } else if (check == "pde_vs_european") {
        m = pde_vs(ctx, [&](std::size_t i) { return ctx.european(i); });
    } else if (check == "pde_vs_tree") {
        m = pde_vs(ctx, [&](std::size_t i) { return ctx.tree(i).value; });
    } else if (check == "pde_pairwise_sup" || check == "pde_pairwise_weighted_l2") {
        const auto trio = pde_trio(ctx);
        const bool sup = check == "pde_pairwise_sup";
        for (std::size_t a = 0; a < trio.size(); ++a) {
            for (std::size_t b = a + 1; b < trio.size(); ++b) {
                const Surface diff = trio[a]->u - trio[b]->u;
                const double d = sup ? diff.cwiseAbs().maxCoeff() / strike
                                     : weighted_norm(diff, trio[a]->times, trio[a]->prices, ctx.weight()) / strike;
                m.value = std::max(m.value, d);
                m.detail[to_string(trio[a]->method) + "-" + to_string(trio[b]->method)] = d;
            }
        }
    } else if (check == "emergent_obstacle") {
        const PdeSolution& semi = ctx.semilinear();
        double worst = 0.0;
        for (Eigen::Index k = 0; k < semi.u.rows(); ++k)
            for (Eigen::Index i = 0; i < semi.u.cols(); ++i)
                worst = std::max(worst, semi.obstacle[static_cast<std::size_t>(i)] - semi.u(k, i));
        m.value = worst / strike;
        m.detail["cycling_steps"] = semi.diagnostics.cycling_steps;
        m.detail["unresolved_steps"] = semi.diagnostics.unresolved_steps;
    } else if (check == "bsde_vs_european") {
        m = bsde_vs(ctx, [&](std::size_t i) { return ctx.european(i); });
    } else if (check == "bsde_vs_pde") {
        m = bsde_vs(ctx, [&](std::size_t i) { return ctx.obstacle().value_at(set.start, set.spots[i]); });
    } else if (check == "lsmc_estimator_order") {
        json rows = json::array();
        for (std::size_t i = 0; i < ctx.n_spots(); ++i) {
            const BsdeSolution& sn = ctx.main_run(i).snell;
            const Estimate low = *sn.y0_low;
            const double se = std::hypot(low.std_error, sn.y0.std_error);
            const double z = se > 0.0 ? (low.value - sn.y0.value) / se : 0.0;
            m.value = i == 0 ? z : std::max(m.value, z);
            rows.push_back({{"spot", set.spots[i]}, {"in_sample", sn.y0.value}, {"low_bias", low.value}, {"sigmas", z}});
        }
        m.detail["runs"] = rows;
    } else if (check == "representation_residual") {
        const MonteCarloRun& run = ctx.main_run(0);
        std::vector<std::size_t> probes;
        for (double f : ctx.cfg().probe_fractions)
            probes.push_back(static_cast<std::size_t>(std::lround(f * static_cast<double>(ctx.cfg().steps))));
        std::sort(probes.begin(), probes.end());
        probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
        for (const BsdeSolution* sol : {&run.snell, &run.driver}) {
            const RepresentationReport rep =
                snell_representation_check(*sol, set.spec, set.params, RegressionBasis{}, probes, 200,
                                           ctx.seed(MainRun, 999), ctx.weight());
            json rows = json::array();
            for (const auto& p : rep.probes) {
                const double z = p.bootstrap_se > 0.0 ? std::abs(p.mean_residual) / p.bootstrap_se
                                                      : (p.mean_residual != 0.0 ? INFINITY : 0.0);
                // the identity is stated for the driver scheme; the reflected one is
                // reported alongside, carrying its in-sample max bias
                if (sol->method == BsdeMethod::DriverBsde) m.value = std::max(m.value, z);
                rows.push_back({{"time", p.time},
                                {"sigmas", number_or_null(z)},
                                {"mean_residual", p.mean_residual},
                                {"bootstrap_se", p.bootstrap_se},
                                {"weighted_l2", p.weighted_l2}});
            }
            m.detail[to_string(sol->method)] = rows;
        }
    } else if (check == "z_identification") {
        const MonteCarloRun& run = ctx.main_run(0);
        for (const BsdeSolution* sol : {&run.snell, &run.driver}) {
            const ZReport z = z_identification_check(*sol, ctx.obstacle());
            m.value = std::max(m.value, z.relative_l2);
            m.detail[to_string(sol->method)] = z.relative_l2;
        }
    } else if (check == "k_equivalence_refinement") {
        m = k_ladder(ctx);
    } else if (check == "k_bound_violation_fraction") {
        const MonteCarloRun& run = ctx.main_run(0);
        const auto se = increment_standard_errors(run.snell);
        const BoundCheck bc = prop21_bound_check(run.snell.k, *run.paths, set.spec, set.params, ctx.main_contact(), se);
        m.value = bc.fraction();
        m.detail = {{"pairs", bc.pairs}, {"violations", bc.violations}, {"max_violation", bc.max_violation}};
    } else if (check == "skorokhod_flatness") {
        const BsdeSolution& sn = ctx.main_run(0).snell;
        const double sum = skorokhod_sum(sn, sn.k);
        const double expected_k = sn.k.col(sn.k.cols() - 1).mean();
        m.value = expected_k > 0.0 ? sum / (strike * expected_k) : (sum > 0.0 ? INFINITY : 0.0);
        m.detail = {{"sum", sum}, {"expected_terminal_k", expected_k}};
    } else if (check == "k_total_vs_premium") {
        const BsdeSolution& sn = ctx.main_run(0).snell;
        const Estimate total = discounted_k_total(sn, sn.k);
        const double premium = ctx.premium(0);
        const double gap = std::abs(total.value - premium);
        m.value = total.std_error > 0.0 ? gap / total.std_error : (gap > 1e-12 * strike ? INFINITY : 0.0);
        m.detail = {{"discounted_k_total", total.value}, {"std_error", total.std_error}, {"premium", premium}};
    } else if (check == "measure_identity" || check == "measure_refinement") {
        m = measure_check(ctx, check);
    } else if (check == "premium_decomposition") {
        json rows = json::array();
        for (std::size_t i = 0; i < ctx.n_spots(); ++i) {
            const double euro = ctx.european(i);
            const double premium = ctx.premium(i);
            const double tree = ctx.tree(i).value;
            const double err = relative(euro + premium, tree);
            m.value = std::max(m.value, err);
            rows.push_back({{"spot", set.spots[i]}, {"european", euro}, {"premium", premium}, {"tree", tree}, {"relative_error", err}});
        }
        m.detail["spots"] = rows;
    } else if (check == "boundary_structure") {
        m = boundary_check(ctx);
    } else if (check == "penalty_monotone") {
        m = ctx.cached("penalty", &penalty_ladder);
        m.value = worst_ratio(m.detail["distances"].get<std::vector<double>>());
    } else if (check == "penalty_rate_fit") {
        m = ctx.cached("penalty", &penalty_ladder);
        m.series.clear();  // reported once, by penalty_monotone
        const auto scaled = m.detail["scaled_undershoot"].get<std::vector<double>>();
        const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
        double mean = 0.0;
        for (double c : scaled) mean += c;
        mean /= static_cast<double>(scaled.size());
        m.value = mean > 0.0 ? (*hi - *lo) / mean : 0.0;
    } else if (check == "grid_ladder_monotone" || check == "grid_convergence_order") {
        m = ctx.cached("grid", &grid_ladder);
        const ConvergenceSeries& s = m.series.front();
        m.detail["fitted_order"] = number_or_null(s.fitted_order);
        m.value = check == "grid_ladder_monotone" ? worst_ratio(s.errors) : s.fitted_order;
        if (check != "grid_ladder_monotone") m.series.clear();
    } else if (check == "lsmc_se_halving") {
        m = se_ladder(ctx);
    } else if (check == "density_normalization" || check == "density_mean") {
        const bool mass = check == "density_normalization";
        const double t = set.params.expiry;
        json rows = json::array();
        for (double x : set.spots) {
            const DensityMoments dm = density_moments(set.params, set.start, x, t);
            const double target = x * std::exp((set.params.rate - set.params.dividend) * (t - set.start));
            const double err = mass ? std::abs(dm.mass - 1.0) : relative(dm.mean, target);
            m.value = std::max(m.value, err);
            rows.push_back({{"spot", x}, {"mass", dm.mass}, {"mean", dm.mean}, {"closed_form_mean", target}});
        }
        m.detail["spots"] = rows;
    } else if (check == "determinism") {
        m = determinism_check(ctx);
    } else {
        throw ConfigError("unknown check '" + check + "'");
    }
    return m;
}

bool compare(double measured, double tolerance, Bound bound) {
    if (std::isnan(measured)) return false;
    switch (bound) {
        case Bound::AtMost: return measured <= tolerance;
        case Bound::Below: return measured < tolerance;
        case Bound::AtLeast: return measured >= tolerance;
    }
    return false;
}

struct SetResult {
    std::vector<CheckOutcome> checks;
    std::vector<ConvergenceSeries> series;
};

SetResult run_set(const SuiteConfig& cfg, const ParameterSet& set) {
    SetContext ctx(cfg, set);
    SetResult result;
    for (const auto& name : set.checks) {
        const auto start = std::chrono::steady_clock::now();
        CheckOutcome out;
        out.check = name;
        out.set = set.name;
        out.bound = check_info(name).bound;
        out.tolerance = cfg.tolerance(set, name);
        try {
            Measurement m = measure(ctx, name);
            out.measured = m.value;
            out.detail = std::move(m.detail);
            for (auto& s : m.series) result.series.push_back(std::move(s));
            out.passed = compare(out.measured, out.tolerance, out.bound);
        } catch (const NumericalError& e) {
            out.measured = NAN;
            out.passed = false;
            out.detail = {{"error", e.what()}};
        } catch (const StructuralViolation& e) {
            out.measured = NAN;
            out.passed = false;
            out.detail = {{"error", e.what()}};
        }
        out.runtime_seconds = seconds_since(start);
        result.checks.push_back(std::move(out));
    }
    return result;
}

}  // namespace

SuiteReport run_equivalence_suite(const SuiteConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    std::vector<SetResult> results(cfg.sets.size());
    detail::parallel_tasks(cfg.sets.size(), cfg.workers,
                           [&](std::size_t i) { results[i] = run_set(cfg, cfg.sets[i]); });
    SuiteReport report;
    report.environment = environment_fingerprint();
    report.config = cfg.to_json();
    for (auto& r : results) {
        for (auto& c : r.checks) report.checks.push_back(std::move(c));
        for (auto& s : r.series) report.series.push_back(std::move(s));
    }
    report.runtime_seconds = seconds_since(start);
    return report;
}

std::vector<ConvergenceSeries> refinement_study(const SuiteConfig& cfg) {
    cfg.validate();
    require_increasing("grid_ladder", cfg.grid_ladder, 3);
    require_increasing("penalty_ladder", cfg.penalty_ladder, 3);
    require_increasing("step_ladder", cfg.step_ladder, 3);
    require_increasing("path_ladder", cfg.path_ladder, 3);
    require_increasing("se_path_ladder", cfg.se_path_ladder, 3);
    std::vector<std::vector<ConvergenceSeries>> per_set(cfg.sets.size());
    detail::parallel_tasks(cfg.sets.size(), cfg.workers, [&](std::size_t i) {
        SetContext ctx(cfg, cfg.sets[i]);
        for (auto* study : {&grid_ladder, &penalty_ladder, &se_ladder, &k_ladder}) {
            Measurement m = (*study)(ctx);
            for (auto& s : m.series) per_set[i].push_back(std::move(s));
        }
    });
    std::vector<ConvergenceSeries> out;
    for (auto& v : per_set)
        for (auto& s : v) out.push_back(std::move(s));
    return out;
}

}  // namespace amerikan
