#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "amerikan/validation.hpp"

using namespace amerikan;
using nlohmann::json;

namespace {

// A desk-sized suite: coarse grids and small path counts so each run takes seconds.
SuiteConfig small_config() {
    SuiteConfig cfg = SuiteConfig::empty();
    cfg.grid = 120;
    cfg.fine_grid = 240;
    cfg.grid_ladder = {30, 60, 120};
    cfg.penalty_ladder = {1e2, 1e3, 1e4};
    cfg.penalty = 1e4;
    cfg.tree_steps = 2000;
    cfg.paths = 4000;
    cfg.steps = 10;
    cfg.step_ladder = {5, 10, 20};
    cfg.path_ladder = {2000, 4000, 8000};
    cfg.se_path_ladder = {1000, 4000, 16000};
    cfg.worker_counts = {1, 2};

    ParameterSet call;
    call.name = "call";
    call.params = {0.05, 0.0, 0.2, 1.0};
    call.spec = {OptionKind::Call, 100.0};
    call.spots = {100.0};
    call.checks = {"pde_pairwise_sup", "bsde_vs_european", "boundary_structure", "density_normalization"};
    cfg.sets = {call};
    return cfg;
}

ParameterSet canonical_put(std::vector<std::string> checks) {
    ParameterSet put;
    put.name = "put";
    put.params = {0.05, 0.0, 0.2, 1.0};
    put.spec = {OptionKind::Put, 100.0};
    put.spots = {100.0};
    put.checks = std::move(checks);
    return put;
}

const CheckOutcome& find(const SuiteReport& r, const std::string& check) {
    for (const auto& c : r.checks)
        if (c.check == check) return c;
    throw std::runtime_error("check not in report: " + check);
}

}  // namespace

TEST_CASE("catalogue and tolerance lookup") {
    std::set<std::string> names;
    for (const auto& c : check_catalogue()) CHECK(names.insert(c.name).second);
    CHECK(check_info("grid_convergence_order").bound == Bound::AtLeast);
    CHECK_THROWS_AS(check_info("no_such_check"), ConfigError);

    auto cfg = SuiteConfig::defaults();
    const auto& call = cfg.sets.front();
    CHECK(cfg.tolerance(call, "z_identification") == 0.05);
    CHECK(cfg.tolerance(cfg.sets.back(), "z_identification") == 0.10);
}

TEST_CASE("shipped configuration equals the built-in defaults") {
    std::ifstream in(AMERIKAN_SOURCE_DIR "/config/default_suite.json");
    REQUIRE(in);
    const auto loaded = SuiteConfig::from_json(json::parse(in));
    CHECK(loaded.to_json() == SuiteConfig::defaults().to_json());
}

TEST_CASE("configuration round trip and rejection") {
    const auto cfg = small_config();
    const auto back = SuiteConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());

    auto doc = cfg.to_json();
    doc["surprise"] = 1;
    CHECK_THROWS_AS(SuiteConfig::from_json(doc), ConfigError);

    doc = cfg.to_json();
    doc["pde"]["grid_ladder"] = {100, 100, 200};
    CHECK_THROWS_AS(SuiteConfig::from_json(doc), ConfigError);

    doc = cfg.to_json();
    doc["parameter_sets"] = json::array();
    CHECK_THROWS_AS(SuiteConfig::from_json(doc), ConfigError);

    doc = cfg.to_json();
    doc["parameter_sets"][0]["checks"].push_back("made_up");
    CHECK_THROWS_AS(SuiteConfig::from_json(doc), ConfigError);

    doc = cfg.to_json();
    doc["monte_carlo"]["paths"] = "many";
    CHECK_THROWS_AS(SuiteConfig::from_json(doc), ConfigError);

    doc = cfg.to_json();
    doc["parameter_sets"][0]["sigma"] = -0.2;
    CHECK_THROWS_AS(SuiteConfig::from_json(doc), ConfigError);

    CHECK_THROWS_AS(SuiteConfig::load("/nonexistent/suite.json"), ConfigError);
}

TEST_CASE("fitted order recovers a known slope") {
    const std::vector<double> h{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> e;
    for (double v : h) e.push_back(3.0 * v * v);
    CHECK(fitted_order(h, e) == doctest::Approx(2.0));
}

TEST_CASE("degenerate call suite passes and reports every configured check once") {
    const auto cfg = small_config();
    const auto report = run_equivalence_suite(cfg);
    CHECK(report.checks.size() == cfg.sets.front().checks.size());
    for (const auto& name : cfg.sets.front().checks) {
        const auto& c = find(report, name);
        CHECK_MESSAGE(c.passed, name << " measured " << c.measured << " tolerance " << c.tolerance);
        CHECK(c.tolerance == cfg.tolerance(cfg.sets.front(), name));
    }
    CHECK(report.passed());
    CHECK(report.environment.contains("compiler"));
    CHECK(report.config == cfg.to_json());

    std::ostringstream csv;
    report.write_csv(csv);
    std::istringstream lines(csv.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "check,parameter_set,measured,tolerance,pass");
}

TEST_CASE("suite numerics are reproducible") {
    auto cfg = small_config();
    cfg.sets.push_back(canonical_put({"bsde_vs_pde", "lsmc_estimator_order", "determinism"}));
    const auto a = run_equivalence_suite(cfg);
    cfg.workers = 2;
    const auto b = run_equivalence_suite(cfg);
    REQUIRE(a.checks.size() == b.checks.size());
    for (std::size_t i = 0; i < a.checks.size(); ++i) {
        CHECK(a.checks[i].check == b.checks[i].check);
        CHECK(a.checks[i].measured == b.checks[i].measured);
        CHECK(a.checks[i].detail == b.checks[i].detail);
    }
    CHECK(find(a, "determinism").passed);
}

TEST_CASE("zero tolerance on a Monte Carlo check fails") {
    auto cfg = small_config();
    cfg.sets.front().checks = {"bsde_vs_european"};
    cfg.sets.front().tolerances["bsde_vs_european"] = 0.0;
    const auto report = run_equivalence_suite(cfg);
    CHECK_FALSE(report.passed());
    CHECK(report.failures() == 1);
    CHECK(report.checks.front().measured > 0.0);
}

TEST_CASE("a coarse 50x50 grid is caught") {
    auto cfg = small_config();
    cfg.grid = 50;
    cfg.fine_grid = 100;
    cfg.tree_steps = 20000;
    cfg.sets = {canonical_put({"pde_vs_tree", "pde_pairwise_sup", "premium_decomposition", "measure_identity"})};
    const auto report = run_equivalence_suite(cfg);
    CHECK_FALSE(report.passed());
    const auto& tree = find(report, "pde_vs_tree");
    CHECK_FALSE(tree.passed);
    CHECK(tree.measured > tree.tolerance);
    const auto j = report.to_json();
    bool listed = false;
    CHECK(j.at("failures").get<std::size_t>() == report.failures());
    for (const auto& c : j.at("checks"))
        listed = listed || (c.at("check") == "pde_vs_tree" && !c.at("passed").get<bool>() &&
                            c.at("measured").get<double>() > c.at("tolerance").get<double>());
    CHECK(listed);
}

TEST_CASE("refinement study produces flagged ladders") {
    auto cfg = small_config();
    cfg.sets = {canonical_put({"pde_vs_tree"})};
    const auto series = refinement_study(cfg);
    std::set<std::string> studies;
    for (const auto& s : series) {
        studies.insert(s.study);
        CHECK(s.parameters.size() == s.errors.size());
        CHECK(s.parameters.size() >= 3);
    }
    CHECK(studies.count("obstacle_grid_ladder") == 1);
    for (const auto& s : series) {
        if (s.study == "obstacle_grid_ladder") {
            CHECK(s.monotone());
            CHECK(s.fitted_order > 0.5);
        }
    }
    cfg.grid_ladder = {60, 120};
    CHECK_THROWS_AS(refinement_study(cfg), ConfigError);
}

TEST_CASE("non-monotone ladders are flagged") {
    ConvergenceSeries s;
    s.parameters = {1, 2, 3};
    s.errors = {1.0, 0.5, 0.7};
    s.non_monotone_rungs = {2};
    CHECK_FALSE(s.monotone());
    CHECK(s.to_json().at("non_monotone_rungs").size() == 1);
}
