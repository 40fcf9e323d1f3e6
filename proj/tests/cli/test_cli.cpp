#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "amerikan/io.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
    std::string err;
};

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("amerikan_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Runs the executable with stdout and stderr captured through files.
Result run(const std::string& args, const std::string& env = "") {
    const fs::path out = scratch_dir() / "stdout.txt";
    const fs::path err = scratch_dir() / "stderr.txt";
    const std::string cmd = env + " " AMERIKAN_CLI " " + args + " > " + out.string() + " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

const std::string canonical = "--kind put --strike 100 --rate 0.05 --dividend 0 --sigma 0.2 --expiry 1 --spot 100";

json single_record(const Result& r) {
    REQUIRE(r.status == 0);
    // exactly one line of JSON on stdout
    REQUIRE(!r.out.empty());
    CHECK(r.out.find('\n') == r.out.size() - 1);
    return json::parse(r.out);
}

}  // namespace

TEST_CASE("price tree prints the oracle record") {
    const auto rec = single_record(run("price tree " + canonical + " --steps 20000"));
    CHECK(rec.at("price").get<double>() == doctest::Approx(6.09037069).epsilon(1e-7));
    CHECK(rec.at("method") == "tree");
    CHECK(rec.at("params").at("strike") == 100.0);
    CHECK(rec.contains("runtime_seconds"));
}

TEST_CASE("semilinear PDE agrees with the tree record") {
    const auto tree = single_record(run("price tree " + canonical));
    const auto pde = single_record(run("price pde --method semilinear " + canonical));
    const double a = tree.at("price").get<double>(), b = pde.at("price").get<double>();
    CHECK(std::abs(b / a - 1.0) < 1e-3);
}

TEST_CASE("Monte Carlo records carry a standard error") {
    const auto rec = single_record(run("price bsde --method driver " + canonical + " --paths 4000 --steps 10 --seed 3"));
    CHECK(rec.at("stderr").get<double>() > 0.0);
    CHECK(rec.at("method") == "bsde-driver");
}

TEST_CASE("usage errors exit 2 with help on stderr") {
    const auto missing = run("price tree --kind put --rate 0.05 --sigma 0.2 --expiry 1 --spot 100");
    CHECK(missing.status == 2);
    CHECK(missing.out.empty());
    CHECK(missing.err.find("--strike") != std::string::npos);

    CHECK(run("price pde --method obstacle --method semilinear " + canonical).status == 2);
    CHECK(run("price pde --method sideways " + canonical).status == 2);
    CHECK(run("price bsde --method snell " + canonical + " --paths many").status == 2);
    CHECK(run("frobnicate").status == 2);
    CHECK(run("price tree " + canonical + " --config /nonexistent.json").status == 2);
}

TEST_CASE("numerical failures exit 1") {
    const auto r = run("price tree --strike 100 --sigma 0.0001 --expiry 1 --spot 100 --rate 0.05 --steps 2");
    CHECK(r.status == 1);
    CHECK(r.out.empty());
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("config file supplies defaults and flags override it") {
    const fs::path cfg = scratch_dir() / "run.json";
    std::ofstream(cfg) << R"({"kind": "put", "strike": 100, "rate": 0.05, "sigma": 0.2, "expiry": 1, "spot": 100, "steps": 2000})";
    const auto from_file = single_record(run("price tree --config " + cfg.string()));
    const auto flagged = single_record(run("price tree --config " + cfg.string() + " --spot 90"));
    const auto direct = single_record(run("price tree --kind put --strike 100 --rate 0.05 --sigma 0.2 --expiry 1 --spot 90 --steps 2000"));
    CHECK(from_file.at("params").at("spot") == 100.0);
    CHECK(flagged.at("price") == direct.at("price"));
}

TEST_CASE("boundary CSV") {
    const fs::path put_csv = scratch_dir() / "put_boundary.csv";
    REQUIRE(run("boundary " + canonical + " --grid 200 --out " + put_csv.string()).status == 0);
    std::ifstream in(put_csv);
    const auto curve = amerikan::read_boundary_csv(in);
    double previous = 0.0;
    for (const auto& level : curve.levels) {
        REQUIRE(level.has_value());
        CHECK(*level >= previous);
        previous = *level;
    }

    const auto call = run("boundary --kind call --strike 100 --rate 0.05 --sigma 0.2 --expiry 1 --spot 100 --grid 100");
    REQUIRE(call.status == 0);
    std::istringstream lines(call.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line == amerikan::boundary_csv_header);
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        if (rows <= 100) CHECK(amerikan::split_csv_line(line)[1] == "none");
    }
    CHECK(rows == 101);
}

TEST_CASE("kprocess output") {
    const fs::path a = scratch_dir() / "k_a.csv", b = scratch_dir() / "k_b.csv", c = scratch_dir() / "k_c.csv";
    const std::string zero_rate = "--kind put --strike 100 --rate 0 --sigma 0.2 --expiry 1 --spot 100 --paths 4000 --steps 10 --grid 100";

    const auto first = single_record(run("kprocess " + zero_rate + " --seed 5 --out " + a.string()));
    std::ifstream in(a);
    std::string line;
    std::getline(in, line);
    CHECK(line == amerikan::kprocess_csv_header);
    while (std::getline(in, line)) {
        const auto f = amerikan::split_csv_line(line);
        CHECK(std::abs(std::stod(f[4])) <= first.at("increment_noise").get<double>());
        CHECK(std::stod(f[5]) == 0.0);
    }

    const auto again = single_record(run("kprocess " + zero_rate + " --seed 5 --out " + b.string()));
    CHECK(slurp(a) == slurp(b));
    CHECK(first.at("mean_sup_discrepancy") == again.at("mean_sup_discrepancy"));

    // the environment seed wins over the flag
    run("kprocess " + zero_rate + " --seed 99 --out " + c.string(), "AMERIKAN_SEED=5");
    CHECK(slurp(a) == slurp(c));
}

TEST_CASE("kprocess summary matches the pathwise discrepancy of its own CSV") {
    const fs::path csv = scratch_dir() / "k_put.csv";
    const auto rec = single_record(run("kprocess " + canonical + " --paths 3000 --steps 10 --grid 200 --csv-paths 3000 --seed 2 --out " + csv.string()));
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    double total = 0.0, sup = 0.0;
    long current = -1, paths = 0;
    while (std::getline(in, line)) {
        const auto f = amerikan::split_csv_line(line);
        const long id = std::stol(f[0]);
        if (id != current) {
            total += sup;
            sup = 0.0;
            current = id;
            ++paths;
        }
        sup = std::max(sup, std::abs(std::stod(f[4]) - std::stod(f[5])));
    }
    total += sup;
    CHECK(paths == 3000);
    CHECK(total / static_cast<double>(paths) == doctest::Approx(rec.at("mean_sup_discrepancy").get<double>()).epsilon(1e-9));
}

TEST_CASE("validate exit codes") {
    const fs::path bad = scratch_dir() / "bad.json";
    std::ofstream(bad) << R"({"seed": 1, "parameter_sets": [)";
    CHECK(run("validate --config " + bad.string()).status == 2);

    const fs::path unknown = scratch_dir() / "unknown.json";
    std::ofstream(unknown) << R"({"seed": 1, "colour": "blue", "parameter_sets": []})";
    CHECK(run("validate --config " + unknown.string()).status == 2);

    const std::string small = R"("pde": {"grid": 100, "fine_grid": 200, "grid_ladder": [25, 50, 100], "penalty_ladder": [1e2, 1e3, 1e4], "penalty": 1e4},
        "tree": {"steps": 2000},
        "monte_carlo": {"paths": 4000, "steps": 10, "step_ladder": [5, 10, 20], "path_ladder": [1000, 2000, 4000], "se_path_ladder": [1000, 4000, 16000]},)";
    const std::string set = R"({"name": "call", "kind": "call", "strike": 100, "rate": 0.05, "dividend": 0, "sigma": 0.2, "expiry": 1, "start": 0, "spots": [100],
        "checks": ["bsde_vs_european", "boundary_structure"])";

    const fs::path zero = scratch_dir() / "zero.json";
    std::ofstream(zero) << "{" << small << R"("tolerances": {"bsde_vs_european": 0}, "parameter_sets": [)" << set << "}]}";
    CHECK(run("validate --config " + zero.string() + " --out " + (scratch_dir() / "zero").string()).status == 1);

    const fs::path good = scratch_dir() / "good.json";
    std::ofstream(good) << "{" << small << R"("parameter_sets": [)" << set << "}]}";
    const auto prefix = scratch_dir() / "good";
    const auto r = run("validate --config " + good.string() + " --out " + prefix.string());
    CHECK(r.status == 0);
    const auto report = json::parse(slurp(prefix.string() + ".json"));
    CHECK(report.at("passed") == true);
    CHECK(report.at("checks").size() == 2);
    CHECK(slurp(prefix.string() + ".csv").rfind("check,parameter_set,measured,tolerance,pass\n", 0) == 0);
}
