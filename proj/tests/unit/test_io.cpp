#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"

#include "amerikan/io.hpp"

using namespace amerikan;

namespace {
const MarketParams canonical{0.05, 0.0, 0.2, 1.0};
}

TEST_CASE("doubles survive the text form") {
    for (double v : {0.1, 1.0 / 3.0, 6.090370690123456, 1e-300, -2.5e17}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("boundary CSV round trip") {
    const OptionSpec put{OptionKind::Put, 100.0};
    const auto sol = solve_obstacle(canonical, put, GridSpec::standard(canonical, put, 80, 40));
    std::stringstream text;
    write_boundary_csv(text, sol.boundary);
    std::string header;
    std::getline(text, header);
    CHECK(header == boundary_csv_header);
    text.seekg(0);
    const auto back = read_boundary_csv(text);
    REQUIRE(back.times.size() == sol.boundary.times.size());
    for (std::size_t k = 0; k < back.times.size(); ++k) {
        CHECK(back.times[k] == sol.boundary.times[k]);
        CHECK(back.levels[k] == sol.boundary.levels[k]);
        CHECK(back.contact_nodes[k] == sol.boundary.contact_nodes[k]);
    }
}

TEST_CASE("boundary CSV without contact and with a bad header") {
    const OptionSpec call{OptionKind::Call, 100.0};
    const auto sol = solve_obstacle(canonical, call, GridSpec::standard(canonical, call, 40, 10));
    std::stringstream text;
    write_boundary_csv(text, sol.boundary);
    std::string line;
    std::getline(text, line);
    std::getline(text, line);
    CHECK(split_csv_line(line)[1] == "none");

    std::istringstream bad("time,boundary,contact_nodes\n0,none,0\n");
    CHECK_THROWS(read_boundary_csv(bad));
    std::istringstream short_row(std::string(boundary_csv_header) + "\n0,none\n");
    CHECK_THROWS(read_boundary_csv(short_row));
}

TEST_CASE("surface CSV has one row per node and slice") {
    const OptionSpec put{OptionKind::Put, 100.0};
    const auto sol = solve_obstacle(canonical, put, GridSpec::standard(canonical, put, 30, 6));
    const auto measure = reconstruct_measure(sol, canonical, put);
    std::stringstream text;
    write_surface_csv(text, sol, &measure);
    std::string line;
    std::getline(text, line);
    CHECK(line == surface_csv_header);
    std::size_t rows = 0, positive_density = 0;
    while (std::getline(text, line)) {
        const auto f = split_csv_line(line);
        REQUIRE(f.size() == 5);
        if (std::stod(f[4]) > 0.0) {
            ++positive_density;
            CHECK(f[3] == "1");
        }
        ++rows;
    }
    CHECK(rows == 7 * 30);
    CHECK(positive_density > 0);
}

TEST_CASE("kprocess CSV") {
    const OptionSpec put{OptionKind::Put, 100.0};
    auto paths = std::make_shared<const PathBundle>(
        simulate_paths(canonical, {0.0, 95.0}, TimeSchedule::uniform(0.0, 1.0, 5), 3000, 2));
    const auto sol = snell_lsmc(paths, put, canonical, {});
    const auto formula = k_formula(*paths, put, canonical, contact_from_values(sol, 1e-9));
    std::stringstream text;
    write_kprocess_csv(text, sol, sol.k, formula, 4);
    std::string line;
    std::getline(text, line);
    CHECK(line == kprocess_csv_header);
    std::size_t rows = 0;
    while (std::getline(text, line)) {
        CHECK(split_csv_line(line).size() == 6);
        ++rows;
    }
    CHECK(rows == 4 * 6);
}
