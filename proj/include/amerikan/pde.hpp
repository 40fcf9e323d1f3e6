#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amerikan/model.hpp"

namespace amerikan {

enum class Stepping { ImplicitEuler, CrankNicolsonRannacher };

/// Uniform grid in log-price between x_min and x_max (Dirichlet ends) with
/// n_space interior nodes, and n_time uniform steps over [0, T].
struct GridSpec {
    double x_min = 0.0;
    double x_max = 0.0;
    std::size_t n_space = 0;
    std::size_t n_time = 0;
    Stepping stepping = Stepping::ImplicitEuler;

    /// x_min = K e^{-6 sigma sqrt(T)}, x_max = K e^{+6 sigma sqrt(T)}.
    static GridSpec standard(const MarketParams& params, const OptionSpec& spec,
                             std::size_t n_space, std::size_t n_time,
                             Stepping stepping = Stepping::ImplicitEuler);

    void validate(const OptionSpec& spec) const;
    double log_step() const;
    /// Interior node i in [0, n_space); node(-1) and node(n_space) are the Dirichlet ends.
    double node(std::ptrdiff_t i) const;
    std::vector<double> nodes() const;
};

/// Solver tolerances, scaled by the strike where they are prices.
struct PdeTolerances {
    double psor_omega = 1.5;
    double psor_tol = 1e-9;  ///< x K, sup of |min(u - g, A u - b)|
    std::size_t psor_max_sweeps = 10000;
    double contact_tol = 1e-7;  ///< x K
    double newton_tol = 1e-10;  ///< x K
    std::size_t newton_max_iterations = 200;
    std::size_t fixed_point_max_iterations = 50;
    double fixed_point_damping = 0.5;
    double fixed_point_tol = 1e-10;  ///< x K
};

enum class PsorStart { BrennanSchwartz, PreviousSlice };

enum class PdeMethod { European, Obstacle, Penalized, Semilinear };

std::string to_string(PdeMethod method);

struct PdeDiagnostics {
    std::size_t psor_sweeps_total = 0;
    std::size_t psor_sweeps_max = 0;
    double psor_residual_max = 0.0;
    std::size_t newton_iterations_max = 0;
    double penalty_term_max = 0.0;        ///< max over the run of n (g - u)^+
    double first_pass_penalty_max = 0.0;  ///< same, after the first Newton solve of each step
    std::size_t fixed_point_iterations_max = 0;
    std::size_t cycling_steps = 0;     ///< steps where the active set revisited an earlier state
    std::size_t unresolved_steps = 0;  ///< steps still moving after the iteration budget
    double unresolved_amplitude_max = 0.0;
};

struct BoundaryViolation {
    std::size_t slice = 0;
    std::string reason;
};

/// Per-slice exercise boundary. levels[k] is empty when slice k has no contact.
struct BoundaryCurve {
    std::vector<double> times;
    std::vector<std::optional<double>> levels;
    std::vector<std::size_t> contact_nodes;
    std::vector<BoundaryViolation> violations;

    bool valid() const { return violations.empty(); }
    /// Linear in t between slices; a slice without contact contributes no region.
    std::optional<double> level_at(double t) const;
};

using Surface = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Value surface on the (n_time + 1) x n_space grid, row k at t_k = k T / n_time.
struct PdeSolution {
    GridSpec grid;
    MarketParams params;
    OptionSpec spec;
    PdeMethod method = PdeMethod::Obstacle;
    double penalty = 0.0;
    PdeTolerances tolerances;

    std::vector<double> times;
    std::vector<double> prices;
    std::vector<double> obstacle;
    std::vector<double> lower_bc;  ///< value at x_min per slice
    std::vector<double> upper_bc;  ///< value at x_max per slice
    Surface u;
    Mask contact;
    BoundaryCurve boundary;
    PdeDiagnostics diagnostics;

    double contact_tolerance() const { return tolerances.contact_tol * spec.strike; }
    std::size_t n_slices() const { return times.size(); }
    bool in_contact(std::size_t k, std::size_t i) const { return contact(k, i) != 0; }

    /// Linear in time, cubic Lagrange in log-price; Dirichlet data beyond the ends.
    double value_at(double t, double x) const;
    /// d u / d x from central log-price differences, interpolated like value_at.
    double delta_at(double t, double x) const;
};

PdeSolution solve_european(const MarketParams& params, const OptionSpec& spec,
                           const GridSpec& grid);

PdeSolution solve_obstacle(const MarketParams& params, const OptionSpec& spec,
                           const GridSpec& grid, const PdeTolerances& tol = {},
                           PsorStart start = PsorStart::BrennanSchwartz);

PdeSolution solve_penalized(const MarketParams& params, const OptionSpec& spec,
                            const GridSpec& grid, double penalty, const PdeTolerances& tol = {});

PdeSolution solve_semilinear(const MarketParams& params, const OptionSpec& spec,
                             const GridSpec& grid, const PdeTolerances& tol = {});

/// Boundary from the contact mask: the contact set of each slice must be one
/// interval anchored at the in-the-money edge (low prices for a put, high for a
/// call). The reported level is the log-midpoint between the last contact node
/// and the first continuation node.
BoundaryCurve extract_boundary(const PdeSolution& sol);

class StructuralViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws StructuralViolation listing the offending slices.
void require_valid_boundary(const BoundaryCurve& curve);

struct MeasureDensity {
    Surface density;   ///< q(x, u) on the contact mask, zero elsewhere; rows 0..n_time-1
    Surface residual;  ///< r u - L_BS^h u of the discrete solution
    Mask interior;     ///< contact cells whose space and time neighbours are also in contact
    std::size_t interior_cells = 0;
    double relative_l1 = 0.0;  ///< sum |residual - density| / sum |density| over interior cells
    double max_off_contact = 0.0;
};

MeasureDensity reconstruct_measure(const PdeSolution& sol, const MarketParams& params,
                                   const OptionSpec& spec);

/// Early exercise premium E int_s^T e^{-r(t-s)} rate(X_t) 1{X_t in exercise region} dt.
double eep_premium(const MarketParams& params, const OptionSpec& spec, const EvalPoint& point,
                   const BoundaryCurve& boundary, double abs_tol = 1e-8);

struct WeightSpec {
    double alpha = 1.0;  ///< rho(x) = (1 + x^2)^{-alpha}; needs alpha > 3/4

    void validate() const;
    double rho(double x) const;
};

/// sqrt(int f(x)^2 rho(x)^2 dx) by the trapezoidal rule on the given nodes.
double weighted_norm(std::span<const double> values, std::span<const double> prices,
                     const WeightSpec& weight);

/// sqrt(int int f(t, x)^2 rho(x)^2 dx dt), trapezoidal in both directions.
double weighted_norm(const Surface& surface, std::span<const double> times,
                     std::span<const double> prices, const WeightSpec& weight);

}  // namespace amerikan
