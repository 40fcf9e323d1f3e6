// Command-line front end: price, boundary, kprocess, validate.
//
// Exit codes: 0 success, 1 numerical or check failure, 2 usage or config error.
// Price records go to stdout as one JSON line; everything else diagnostic goes to stderr.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <type_traits>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "amerikan/bsde.hpp"
#include "amerikan/io.hpp"
#include "amerikan/lattice.hpp"
#include "amerikan/pde.hpp"
#include "amerikan/validation.hpp"

using namespace amerikan;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_usage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raw flag storage for one leaf command; `opts` records which flags exist so
/// the resolver can tell "given" from "defaulted".
struct Flags {
    std::string kind, method, config, out, format, contact;
    double strike = 0, rate = 0, dividend = 0, sigma = 0, expiry = 0, spot = 0, start = 0, penalty = 0;
    std::size_t grid = 0, paths = 0, steps = 0, csv_paths = 0;
    std::uint64_t seed = 0;
    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void add_config_flag(CLI::App* cmd, Flags& f) {
    f.opts["config"] = cmd->add_option("--config", f.config, "JSON file with default values for the flags")
                           ->check(CLI::ExistingFile);
}

void add_market_flags(CLI::App* cmd, Flags& f) {
    f.opts["kind"] = cmd->add_option("--kind", f.kind, "call or put (default put)");
    f.opts["strike"] = cmd->add_option("--strike", f.strike, "strike K > 0 (required)");
    f.opts["rate"] = cmd->add_option("--rate", f.rate, "risk-free rate r (default 0)");
    f.opts["dividend"] = cmd->add_option("--dividend", f.dividend, "dividend yield d (default 0)");
    f.opts["sigma"] = cmd->add_option("--sigma", f.sigma, "volatility (required)");
    f.opts["expiry"] = cmd->add_option("--expiry", f.expiry, "expiration T in years (required)");
    f.opts["spot"] = cmd->add_option("--spot", f.spot, "spot price x (required)");
    f.opts["start"] = cmd->add_option("--start", f.start, "start time s (default 0)");
    add_config_flag(cmd, f);
}

void add_seed_flag(CLI::App* cmd, Flags& f) {
    f.opts["seed"] = cmd->add_option("--seed", f.seed, "RNG seed (AMERIKAN_SEED overrides; default 1)");
}

void add_grid_flag(CLI::App* cmd, Flags& f) {
    f.opts["grid"] = cmd->add_option("--grid", f.grid, "n for an n x n PDE grid (default 800)");
}

json load_config(const Flags& f) {
    if (!f.given("config")) return json::object();
    std::ifstream in(f.config);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("malformed JSON in " + f.config + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
    static const std::set<std::string> known = {"kind", "strike", "rate", "dividend", "sigma", "expiry",
                                                "spot", "start", "method", "grid", "paths", "steps",
                                                "seed", "penalty", "out", "format", "contact", "csv_paths"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!known.count(key)) throw UsageError("unknown key '" + key + "' in " + f.config);
    }
    return doc;
}

/// Flag if given, else config file, else fallback; missing without fallback is a usage error.
template <class T>
T resolve(const Flags& f, const json& file, const std::string& key, const T& flag_value,
          std::type_identity_t<std::optional<T>> fallback = std::nullopt) {
    if (f.given(key)) return flag_value;
    if (file.contains(key)) {
        try {
            return file.at(key).get<T>();
        } catch (const json::exception& e) {
            throw UsageError("config key '" + key + "': " + e.what());
        }
    }
    if (fallback) return *fallback;
    throw UsageError("missing required option --" + key);
}

std::uint64_t resolve_seed(const Flags& f, const json& file, std::uint64_t fallback) {
    if (const char* env = std::getenv("AMERIKAN_SEED"); env && *env) {
        std::uint64_t v = 0;
        std::istringstream in(env);
        if (!(in >> v) || !in.eof()) throw UsageError(std::string("AMERIKAN_SEED is not an integer: ") + env);
        return v;
    }
    return resolve<std::uint64_t>(f, file, "seed", f.seed, fallback);
}

struct Market {
    MarketParams params;
    OptionSpec spec;
    EvalPoint point;
};

Market resolve_market(const Flags& f, const json& file) {
    Market m;
    try {
        m.spec.kind = parse_option_kind(resolve<std::string>(f, file, "kind", f.kind, std::string("put")));
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    m.spec.strike = resolve(f, file, "strike", f.strike);
    m.params.rate = resolve(f, file, "rate", f.rate, 0.0);
    m.params.dividend = resolve(f, file, "dividend", f.dividend, 0.0);
    m.params.sigma = resolve(f, file, "sigma", f.sigma);
    m.params.expiry = resolve(f, file, "expiry", f.expiry);
    m.point.spot = resolve(f, file, "spot", f.spot);
    m.point.start = resolve(f, file, "start", f.start, 0.0);
    try {
        m.params.validate();
        m.spec.validate();
        m.point.validate(m.params);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return m;
}

json params_json(const Market& m) {
    return {{"kind", to_string(m.spec.kind)}, {"strike", m.spec.strike},   {"rate", m.params.rate},
            {"dividend", m.params.dividend},  {"sigma", m.params.sigma},   {"expiry", m.params.expiry},
            {"spot", m.point.spot},           {"start", m.point.start}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void emit(const json& record) { std::cout << record.dump() << std::endl; }

/// Output stream for --out, or stdout when absent.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw UsageError("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

PdeSolution solve_pde(const std::string& method, const Market& m, std::size_t grid, double penalty) {
    const GridSpec spec = GridSpec::standard(m.params, m.spec, grid, grid);
    if (method == "obstacle") return solve_obstacle(m.params, m.spec, spec);
    if (method == "penalized") return solve_penalized(m.params, m.spec, spec, penalty);
    if (method == "semilinear") return solve_semilinear(m.params, m.spec, spec);
    throw UsageError("PDE method must be obstacle, penalized or semilinear, got '" + method + "'");
}

void require_method(const std::string& method, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
        if (method == a) return;
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
    throw UsageError("--method must be one of " + list + ", got '" + method + "'");
}

// ---------------------------------------------------------------- commands

int cmd_price_tree(const Flags& f) {
    const json file = load_config(f);
    const Market m = resolve_market(f, file);
    const auto steps = resolve<std::size_t>(f, file, "steps", f.steps, std::size_t{20000});
    if (steps == 0) throw UsageError("--steps must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    const OracleValue o = tree_oracle_american(m.params, m.spec, m.point, steps);
    emit({{"price", o.value},
          {"method", "tree"},
          {"params", params_json(m)},
          {"steps", steps},
          {"coarse", o.coarse},
          {"fine", o.fine},
          {"runtime_seconds", seconds_since(t0)}});
    return exit_ok;
}

int cmd_price_pde(const Flags& f) {
    const json file = load_config(f);
    const Market m = resolve_market(f, file);
    const auto method = resolve<std::string>(f, file, "method", f.method, std::string("obstacle"));
    require_method(method, {"obstacle", "penalized", "semilinear"});
    const auto grid = resolve<std::size_t>(f, file, "grid", f.grid, std::size_t{800});
    const double penalty = resolve(f, file, "penalty", f.penalty, 1e5);
    const auto out = resolve<std::string>(f, file, "out", f.out, std::string());
    const auto t0 = std::chrono::steady_clock::now();
    const PdeSolution sol = solve_pde(method, m, grid, penalty);
    const double price = sol.value_at(m.point.start, m.point.spot);
    const double runtime = seconds_since(t0);
    if (!out.empty()) {
        Sink sink(out);
        const MeasureDensity measure = reconstruct_measure(sol, m.params, m.spec);
        write_surface_csv(sink.stream(), sol, &measure);
    }
    json record = {{"price", price},
                   {"method", "pde-" + method},
                   {"params", params_json(m)},
                   {"grid", grid},
                   {"runtime_seconds", runtime}};
    if (method == "penalized") record["penalty"] = penalty;
    if (method == "semilinear") {
        record["unresolved_steps"] = sol.diagnostics.unresolved_steps;
        record["cycling_steps"] = sol.diagnostics.cycling_steps;
    }
    if (!out.empty()) record["surface_csv"] = out;
    emit(record);
    return exit_ok;
}

int cmd_price_bsde(const Flags& f) {
    const json file = load_config(f);
    const Market m = resolve_market(f, file);
    const auto method = resolve<std::string>(f, file, "method", f.method, std::string("snell"));
    require_method(method, {"snell", "driver"});
    const auto paths = resolve<std::size_t>(f, file, "paths", f.paths, std::size_t{100000});
    const auto steps = resolve<std::size_t>(f, file, "steps", f.steps, std::size_t{50});
    const std::uint64_t seed = resolve_seed(f, file, 1);
    if (paths < 2 || steps == 0) throw UsageError("need --paths >= 2 and --steps >= 1");
    const auto t0 = std::chrono::steady_clock::now();
    auto bundle = std::make_shared<const PathBundle>(simulate_paths(
        m.params, m.point, TimeSchedule::uniform(m.point.start, m.params.expiry, steps), paths, seed));
    const BsdeSolution sol = method == "snell" ? snell_lsmc(bundle, m.spec, m.params, RegressionBasis{})
                                               : driver_bsde_solve(bundle, m.spec, m.params, RegressionBasis{});
    for (const auto& w : sol.warnings) std::cerr << "warning: " << w << '\n';
    json record = {{"price", sol.y0.value},
                   {"stderr", sol.y0.std_error},
                   {"method", "bsde-" + method},
                   {"params", params_json(m)},
                   {"paths", paths},
                   {"steps", steps},
                   {"seed", seed},
                   {"runtime_seconds", seconds_since(t0)}};
    if (sol.y0_low) record["low_bias"] = {{"price", sol.y0_low->value}, {"stderr", sol.y0_low->std_error}};
    if (method == "driver") record["filippov_nodes"] = sol.filippov_nodes;
    emit(record);
    return exit_ok;
}

int cmd_boundary(const Flags& f) {
    const json file = load_config(f);
    const Market m = resolve_market(f, file);
    const auto method = resolve<std::string>(f, file, "method", f.method, std::string("obstacle"));
    require_method(method, {"obstacle", "penalized", "semilinear"});
    const auto grid = resolve<std::size_t>(f, file, "grid", f.grid, std::size_t{800});
    const double penalty = resolve(f, file, "penalty", f.penalty, 1e5);
    const auto out = resolve<std::string>(f, file, "out", f.out, std::string());
    const auto format = resolve<std::string>(f, file, "format", f.format, std::string("csv"));
    if (format != "csv" && format != "json") throw UsageError("--format must be csv or json");
    const PdeSolution sol = solve_pde(method, m, grid, penalty);
    if (!sol.boundary.valid()) {
        json report = json::array();
        for (const auto& v : sol.boundary.violations) report.push_back({{"slice", v.slice}, {"reason", v.reason}});
        std::cerr << "boundary structure violated: " << report.dump() << '\n';
        return exit_failure;
    }
    Sink sink(out);
    if (format == "csv") {
        write_boundary_csv(sink.stream(), sol.boundary);
    } else {
        json rows = json::array();
        for (std::size_t k = 0; k < sol.boundary.times.size(); ++k) {
            const auto& level = sol.boundary.levels[k];
            rows.push_back({{"time", sol.boundary.times[k]},
                            {"boundary_price", level ? json(*level) : json("none")},
                            {"contact_nodes", sol.boundary.contact_nodes[k]}});
        }
        sink.stream() << rows.dump() << '\n';
    }
    return exit_ok;
}

int cmd_kprocess(const Flags& f) {
    const json file = load_config(f);
    const Market m = resolve_market(f, file);
    const auto paths = resolve<std::size_t>(f, file, "paths", f.paths, std::size_t{100000});
    const auto steps = resolve<std::size_t>(f, file, "steps", f.steps, std::size_t{50});
    const auto grid = resolve<std::size_t>(f, file, "grid", f.grid, std::size_t{800});
    const auto csv_paths = resolve<std::size_t>(f, file, "csv_paths", f.csv_paths, std::size_t{100});
    const auto contact_kind = resolve<std::string>(f, file, "contact", f.contact, std::string("pde"));
    const auto out = resolve<std::string>(f, file, "out", f.out, std::string("kprocess.csv"));
    const std::uint64_t seed = resolve_seed(f, file, 1);
    if (paths < 2 || steps == 0) throw UsageError("need --paths >= 2 and --steps >= 1");
    if (contact_kind != "pde" && contact_kind != "values") throw UsageError("--contact must be pde or values");

    const auto t0 = std::chrono::steady_clock::now();
    auto bundle = std::make_shared<const PathBundle>(simulate_paths(
        m.params, m.point, TimeSchedule::uniform(m.point.start, m.params.expiry, steps), paths, seed));
    LsmcOptions opts;
    opts.low_bias = false;
    const BsdeSolution sol = snell_lsmc(bundle, m.spec, m.params, RegressionBasis{}, opts);
    for (const auto& w : sol.warnings) std::cerr << "warning: " << w << '\n';
    const PdeSolution pde = solve_obstacle(m.params, m.spec, GridSpec::standard(m.params, m.spec, grid, grid));
    const ContactMatrix contact = contact_kind == "pde" ? contact_from_pde(*bundle, m.spec, pde)
                                                        : contact_from_values(sol, pde.contact_tolerance());
    const Eigen::MatrixXd kf = k_formula(*bundle, m.spec, m.params, contact);
    {
        Sink sink(out);
        write_kprocess_csv(sink.stream(), sol, sol.k, kf, csv_paths);
    }
    const KDiscrepancy gap = k_discrepancy(sol.k, kf);
    const auto se = increment_standard_errors(sol);
    double noise = 0.0;
    for (double s : se) noise = std::max(noise, 3.0 * s);
    const BoundCheck bound = prop21_bound_check(sol.k, *bundle, m.spec, m.params, contact, se);
    const Estimate k_dm = discounted_k_total(sol, sol.k);
    const Estimate k_f = discounted_k_total(sol, kf);
    emit({{"method", "kprocess"},
          {"params", params_json(m)},
          {"paths", paths},
          {"steps", steps},
          {"seed", seed},
          {"contact", contact_kind},
          {"mean_sup_discrepancy", gap.mean_sup},
          {"max_sup_discrepancy", gap.max_sup},
          {"increment_noise", noise},
          {"discounted_k_dm", {{"mean", k_dm.value}, {"stderr", k_dm.std_error}}},
          {"discounted_k_formula", {{"mean", k_f.value}, {"stderr", k_f.std_error}}},
          {"bound_violation_fraction", bound.fraction()},
          {"skorokhod_sum", skorokhod_sum(sol, sol.k)},
          {"csv", out},
          {"csv_paths", std::min(csv_paths, paths)},
          {"runtime_seconds", seconds_since(t0)}});
    return exit_ok;
}

int cmd_validate(const Flags& f) {
    SuiteConfig cfg;
    try {
        cfg = SuiteConfig::load(f.config);
        if (f.given("seed")) cfg.seed = f.seed;
        if (const char* env = std::getenv("AMERIKAN_SEED"); env && *env) cfg.seed = resolve_seed(f, json::object(), 1);
        if (f.given("grid")) cfg.grid = f.grid;
        if (f.given("paths")) cfg.paths = f.paths;
        if (f.given("steps")) cfg.steps = f.steps;
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const std::string prefix = f.out.empty() ? "suite_report" : f.out;
    const SuiteReport report = run_equivalence_suite(cfg);
    {
        Sink js(prefix + ".json");
        js.stream() << report.to_json().dump(2) << '\n';
        Sink csv(prefix + ".csv");
        report.write_csv(csv.stream());
    }
    json failed = json::array();
    for (const auto& c : report.checks) {
        if (c.passed) continue;
        failed.push_back({{"check", c.check}, {"set", c.set}, {"measured", std::isfinite(c.measured) ? json(c.measured) : json(nullptr)},
                          {"tolerance", c.tolerance}});
        std::cerr << "FAIL " << c.check << " [" << c.set << "] measured " << c.measured << " tolerance "
                  << c.tolerance << '\n';
    }
    emit({{"passed", report.passed()},
          {"checks", report.checks.size()},
          {"failures", failed},
          {"report_json", prefix + ".json"},
          {"report_csv", prefix + ".csv"},
          {"runtime_seconds", report.runtime_seconds}});
    return report.passed() ? exit_ok : exit_failure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"American option pricing by lattice, PDE and BSDE methods"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    std::map<std::string, Flags> flags;
    std::map<std::string, std::function<int(const Flags&)>> handlers;
    std::map<std::string, CLI::App*> commands;

    auto* price = app.add_subcommand("price", "Price one option and print a JSON record");
    price->require_subcommand(1);

    auto* tree = price->add_subcommand("tree", "Richardson-extrapolated binomial lattice");
    add_market_flags(tree, flags["tree"]);
    flags["tree"].opts["steps"] = tree->add_option("--steps", flags["tree"].steps, "lattice steps N (default 20000)");
    handlers["tree"] = cmd_price_tree;
    commands["tree"] = tree;

    auto* pde = price->add_subcommand("pde", "Finite-difference solution");
    add_market_flags(pde, flags["pde"]);
    flags["pde"].opts["method"] = pde->add_option("--method", flags["pde"].method, "obstacle|penalized|semilinear");
    add_grid_flag(pde, flags["pde"]);
    flags["pde"].opts["penalty"] = pde->add_option("--penalty", flags["pde"].penalty, "penalty n (default 1e5)");
    flags["pde"].opts["out"] = pde->add_option("--out", flags["pde"].out, "surface CSV path");
    handlers["pde"] = cmd_price_pde;
    commands["pde"] = pde;

    auto* bsde = price->add_subcommand("bsde", "Monte Carlo backward scheme");
    add_market_flags(bsde, flags["bsde"]);
    flags["bsde"].opts["method"] = bsde->add_option("--method", flags["bsde"].method, "snell|driver");
    flags["bsde"].opts["paths"] = bsde->add_option("--paths", flags["bsde"].paths, "paths (default 100000)");
    flags["bsde"].opts["steps"] = bsde->add_option("--steps", flags["bsde"].steps, "time steps (default 50)");
    add_seed_flag(bsde, flags["bsde"]);
    handlers["bsde"] = cmd_price_bsde;
    commands["bsde"] = bsde;

    auto* boundary = app.add_subcommand("boundary", "Exercise boundary as CSV");
    add_market_flags(boundary, flags["boundary"]);
    flags["boundary"].opts["method"] = boundary->add_option("--method", flags["boundary"].method, "obstacle|penalized|semilinear");
    add_grid_flag(boundary, flags["boundary"]);
    flags["boundary"].opts["penalty"] = boundary->add_option("--penalty", flags["boundary"].penalty, "penalty n (default 1e5)");
    flags["boundary"].opts["out"] = boundary->add_option("--out", flags["boundary"].out, "output path (default stdout)");
    flags["boundary"].opts["format"] = boundary->add_option("--format", flags["boundary"].format, "csv|json (default csv)");
    handlers["boundary"] = cmd_boundary;
    commands["boundary"] = boundary;

    auto* kprocess = app.add_subcommand("kprocess", "Per-path K processes as CSV plus a JSON summary");
    add_market_flags(kprocess, flags["kprocess"]);
    flags["kprocess"].opts["paths"] = kprocess->add_option("--paths", flags["kprocess"].paths, "paths (default 100000)");
    flags["kprocess"].opts["steps"] = kprocess->add_option("--steps", flags["kprocess"].steps, "time steps (default 50)");
    add_grid_flag(kprocess, flags["kprocess"]);
    add_seed_flag(kprocess, flags["kprocess"]);
    flags["kprocess"].opts["out"] = kprocess->add_option("--out", flags["kprocess"].out, "CSV path (default kprocess.csv)");
    flags["kprocess"].opts["csv_paths"] = kprocess->add_option("--csv-paths", flags["kprocess"].csv_paths, "paths written to the CSV (default 100)");
    flags["kprocess"].opts["contact"] = kprocess->add_option("--contact", flags["kprocess"].contact, "pde|values (default pde)");
    handlers["kprocess"] = cmd_kprocess;
    commands["kprocess"] = kprocess;

    auto* validate = app.add_subcommand("validate", "Run the cross-method validation suite");
    {
        Flags& f = flags["validate"];
        f.opts["config"] = validate->add_option("--config", f.config, "suite configuration JSON")->required();
        f.opts["out"] = validate->add_option("--out", f.out, "report prefix (default suite_report)");
        add_seed_flag(validate, f);
        add_grid_flag(validate, f);
        f.opts["paths"] = validate->add_option("--paths", f.paths, "override Monte Carlo paths");
        f.opts["steps"] = validate->add_option("--steps", f.steps, "override Monte Carlo steps");
    }
    handlers["validate"] = cmd_validate;
    commands["validate"] = validate;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return exit_usage;
    }

    std::string leaf;
    for (const auto& [name, cmd] : commands)
        if (cmd->parsed()) leaf = name;
    try {
        return handlers.at(leaf)(flags.at(leaf));
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << commands.at(leaf)->help();
        return exit_usage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_usage;
    } catch (const StructuralViolation& e) {
        std::cerr << "structural violation: " << e.what() << '\n';
        return exit_failure;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_failure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n\n" << commands.at(leaf)->help();
        return exit_usage;
    }
}
