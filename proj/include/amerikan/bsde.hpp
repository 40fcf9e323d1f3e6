#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amerikan/model.hpp"
#include "amerikan/pde.hpp"
#include "amerikan/regression.hpp"

namespace amerikan {

enum class BsdeMethod { ReflectedSnell, DriverBsde };

std::string to_string(BsdeMethod method);

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Per-step regression record; entry k holds the fits made at time t_k.
struct StepFits {
    RegressionFit continuation;  ///< stopping regression (in-the-money paths for the reflected scheme)
    RegressionFit value;         ///< all-path conditional expectation of the next value
    RegressionFit gradient;      ///< Z regression
};

/// Monte Carlo solution (Y, Z, K) on a path bundle. Matrices are
/// paths x times, column k at schedule time t_k; Z has no entry at T and its
/// last column repeats the previous one.
struct BsdeSolution {
    BsdeMethod method = BsdeMethod::ReflectedSnell;
    std::shared_ptr<const PathBundle> paths;
    MarketParams params;
    OptionSpec spec;
    RegressionBasis basis;

    Eigen::MatrixXd y;
    Eigen::MatrixXd z;
    Eigen::MatrixXd k;

    Estimate y0;                     ///< in-sample estimate (high-biased for the reflected scheme)
    std::optional<Estimate> y0_low;  ///< independent-path estimate under the fitted stopping rule
    std::vector<StepFits> fits;      ///< size steps
    std::vector<std::string> warnings;
    std::size_t filippov_nodes = 0;  ///< driver scheme: nodes resolved at y = g

    std::size_t n_paths() const { return paths->n_paths(); }
    std::size_t n_times() const { return paths->n_times(); }
    double discount(std::size_t k) const;  ///< e^{-r (t_k - s)}
};

/// What the continuation regression at t_k is fitted to: the realized
/// discounted cashflow of the current stopping rule (Longstaff-Schwartz), or
/// the scheme's discounted value at t_{k+1}.
enum class LsmcRegressand { Cashflow, NextValue };

struct LsmcOptions {
    bool low_bias = true;             ///< also price on an independent path set
    std::size_t low_bias_paths = 0;   ///< 0 uses the size of the main bundle
    SimulationOptions simulation;
    LsmcRegressand regressand = LsmcRegressand::Cashflow;
};

/// Least-squares Monte Carlo for the reflected equation: Y = max(payoff, continuation).
BsdeSolution snell_lsmc(std::shared_ptr<const PathBundle> paths, const OptionSpec& spec,
                        const MarketParams& params, const RegressionBasis& basis,
                        const LsmcOptions& options = {});

/// Discrete Doob-Meyer increasing process of a reflected solution:
/// K_{k+1} - K_k = (payoff - continuation)^+ at t_k, K_0 = 0.
Eigen::MatrixXd doob_meyer_K(const BsdeSolution& sol, const OptionSpec& spec,
                             const MarketParams& params);

using ContactMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Contact indicator per (path, time) from a PDE exercise boundary, linear in time.
ContactMatrix contact_from_pde(const PathBundle& paths, const OptionSpec& spec,
                               const PdeSolution& pde);

/// Contact indicator |Y - payoff| <= tol from a Monte Carlo solution; the
/// payoff must be positive.
ContactMatrix contact_from_values(const BsdeSolution& sol, double tol);

/// Integral of rate(X) 1{contact} over the schedule, left-endpoint rule.
Eigen::MatrixXd k_formula(const PathBundle& paths, const OptionSpec& spec,
                          const MarketParams& params, const ContactMatrix& contact);

struct BoundCheck {
    std::size_t pairs = 0;
    std::size_t violations = 0;
    double max_violation = 0.0;  ///< largest excess over the formula integral, before tolerance
    double fraction() const {
        return pairs ? static_cast<double>(violations) / static_cast<double>(pairs) : 0.0;
    }
};

/// For every path and every schedule pair i < j, checks
/// K_j - K_i <= sum_{l=i}^{j-1} dt rate(X_l) 1{contact_l} + sigmas * se_{i,j},
/// with se_{i,j} the root-sum-square of the per-step standard errors.
BoundCheck prop21_bound_check(const Eigen::MatrixXd& k, const PathBundle& paths,
                              const OptionSpec& spec, const MarketParams& params,
                              const ContactMatrix& contact, std::span<const double> step_se,
                              double sigmas = 3.0);

/// Per-step standard errors of the Doob-Meyer increments (the stopping
/// regression's prediction error).
std::vector<double> increment_standard_errors(const BsdeSolution& sol);

struct DriverOptions {
    /// Regress the discounted realized cashflow of the scheme rather than the
    /// previous step's fitted value.
    bool multi_step = true;
};

/// Implicit Euler scheme for the non-reflected equation with driver -r y + q(x, y).
BsdeSolution driver_bsde_solve(std::shared_ptr<const PathBundle> paths, const OptionSpec& spec,
                               const MarketParams& params, const RegressionBasis& basis,
                               const DriverOptions& options = {});

/// Mean over paths of sum_k (Y_k - payoff(X_k)) (K_{k+1} - K_k).
double skorokhod_sum(const BsdeSolution& sol, const Eigen::MatrixXd& k);

/// Mean and standard error of the discounted terminal K, sum_k e^{-r(t_k - s)} dK_k.
Estimate discounted_k_total(const BsdeSolution& sol, const Eigen::MatrixXd& k);

struct KDiscrepancy {
    double mean_sup = 0.0;  ///< mean over paths of sup_t |K_a - K_b|
    double max_sup = 0.0;
};

KDiscrepancy k_discrepancy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct ProbeResidual {
    std::size_t step = 0;
    double time = 0.0;
    double mean_residual = 0.0;  ///< mean of (discounted cashflow - discounted Y)
    double bootstrap_se = 0.0;
    double weighted_l2 = 0.0;    ///< rho-weighted L2 of (regressed cashflow - discounted Y)
    bool within(double sigmas) const;
};

struct RepresentationReport {
    std::vector<ProbeResidual> probes;
    bool passed(double sigmas = 3.0) const;
};

/// Regresses e^{-r(T-s)} g(X_T) + sum_{j>=k} e^{-r(t_j-s)} q_j dt at probe steps
/// and compares with e^{-r(t_k-s)} Y_k.
RepresentationReport snell_representation_check(const BsdeSolution& sol, const OptionSpec& spec,
                                                const MarketParams& params,
                                                const RegressionBasis& basis,
                                                std::span<const std::size_t> probe_steps,
                                                std::size_t bootstrap_samples = 200,
                                                std::uint64_t bootstrap_seed = 7,
                                                const WeightSpec& weight = {});

struct ZReport {
    double relative_l2 = 0.0;
    std::size_t samples = 0;
};

/// Relative L2 distance between the regressed Z and sigma x du/dx(t, x) of a PDE
/// solution, over all paths and steps 0..steps-1.
ZReport z_identification_check(const BsdeSolution& sol, const PdeSolution& pde);

/// Same comparison against an arbitrary reference gradient function.
ZReport z_identification_check(const BsdeSolution& sol,
                               const std::function<double(double, double)>& reference_z);

}  // namespace amerikan
