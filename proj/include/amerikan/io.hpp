#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amerikan/bsde.hpp"
#include "amerikan/pde.hpp"

namespace amerikan {

/// 17 significant digits, enough for the text to read back as the same double.
std::string format_double(double value);

inline constexpr const char* boundary_csv_header = "time,boundary_price,contact_nodes";
inline constexpr const char* surface_csv_header = "time,price,value,contact,measure_density";
inline constexpr const char* kprocess_csv_header = "path_id,time,x,y,k_dm,k_formula";

/// One row per slice; slices without contact print "none".
void write_boundary_csv(std::ostream& out, const BoundaryCurve& curve);

/// Parses the boundary schema back; throws std::runtime_error on a header or field mismatch.
BoundaryCurve read_boundary_csv(std::istream& in);

/// One row per (slice, node). measure may be null, in which case the density
/// column is zero; the terminal slice always carries zero density.
void write_surface_csv(std::ostream& out, const PdeSolution& sol, const MeasureDensity* measure);

/// One row per (path, time) for the first `max_paths` paths.
void write_kprocess_csv(std::ostream& out, const BsdeSolution& sol, const Eigen::MatrixXd& k_dm,
                        const Eigen::MatrixXd& k_formula, std::size_t max_paths);

/// Splits one CSV line on commas (the schemas never quote).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace amerikan
