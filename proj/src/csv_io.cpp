#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "amerikan/io.hpp"

namespace amerikan {

std::string format_double(double value) {
    char buf[40];
    const int len = std::snprintf(buf, sizeof buf, "%.17g", value);
    return std::string(buf, static_cast<std::size_t>(len));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

void write_boundary_csv(std::ostream& out, const BoundaryCurve& curve) {
    out << boundary_csv_header << '\n';
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        out << format_double(curve.times[k]) << ',';
        if (curve.levels[k]) out << format_double(*curve.levels[k]);
        else out << "none";
        out << ',' << curve.contact_nodes[k] << '\n';
    }
}

namespace {

double parse_number(const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) throw std::runtime_error("not a number: '" + text + "'");
    return v;
}

}  // namespace

BoundaryCurve read_boundary_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != boundary_csv_header)
        throw std::runtime_error("boundary CSV header mismatch");
    BoundaryCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 3) throw std::runtime_error("boundary CSV row needs 3 fields: " + line);
        curve.times.push_back(parse_number(f[0]));
        if (f[1] == "none") curve.levels.emplace_back();
        else curve.levels.emplace_back(parse_number(f[1]));
        std::size_t nodes = 0;
        const auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), nodes);
        if (res.ec != std::errc{} || res.ptr != f[2].data() + f[2].size())
            throw std::runtime_error("bad contact_nodes field: " + f[2]);
        curve.contact_nodes.push_back(nodes);
    }
    return curve;
}

void write_surface_csv(std::ostream& out, const PdeSolution& sol, const MeasureDensity* measure) {
    out << surface_csv_header << '\n';
    const std::size_t n = sol.prices.size();
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        for (std::size_t i = 0; i < n; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            double density = 0.0;
            if (measure && row < measure->density.rows()) density = measure->density(row, col);
            out << format_double(sol.times[k]) << ',' << format_double(sol.prices[i]) << ','
                << format_double(sol.u(row, col)) << ',' << int{sol.contact(row, col)} << ','
                << format_double(density) << '\n';
        }
    }
}

void write_kprocess_csv(std::ostream& out, const BsdeSolution& sol, const Eigen::MatrixXd& k_dm,
                        const Eigen::MatrixXd& k_formula, std::size_t max_paths) {
    out << kprocess_csv_header << '\n';
    const PathBundle& bundle = *sol.paths;
    const std::size_t m = std::min(max_paths, bundle.n_paths());
    for (std::size_t p = 0; p < m; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        for (std::size_t k = 0; k < bundle.n_times(); ++k) {
            const auto col = static_cast<Eigen::Index>(k);
            out << p << ',' << format_double(bundle.schedule.time(k)) << ','
                << format_double(bundle.at(p, k)) << ',' << format_double(sol.y(row, col)) << ','
                << format_double(k_dm(row, col)) << ',' << format_double(k_formula(row, col)) << '\n';
        }
    }
}

}  // namespace amerikan
