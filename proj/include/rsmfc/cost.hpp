#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rsmfc/adjoint.hpp"
#include "rsmfc/grid.hpp"
#include "rsmfc/model.hpp"
#include "rsmfc/sim.hpp"

namespace rsmfc {

/// Risk-neutral Hamiltonian H = b p + sigma q - f.
double hamiltonian(const CoefficientSet& coeffs, double t, double x, double m,
                   double u, double p, double q);

/// Risk-sensitive Hamiltonian H^theta = b p + sigma (q + theta ell p) - f.
/// Coincides with H at theta = 0.
double rs_hamiltonian(const CoefficientSet& coeffs, double t, double x, double m,
                      double u, double p, double q, double ell, double theta);

/// Monte Carlo estimate of the exponentiated cost and its log transform.
/// log_domain_value = log E exp(theta Psi_T) via log-sum-exp; psi_theta is
/// log_domain_value / theta for theta != 0 and the plain mean for theta == 0.
/// std_error is the delta-method standard error of psi_theta.
struct CostEstimate {
    double theta = 0.0;
    double j_theta = 0.0;
    double psi_theta = 0.0;
    double mean_psi_T = 0.0;
    double var_psi_T = 0.0;   // unbiased sample variance
    double std_error = 0.0;
    double log_domain_value = 0.0;
    std::size_t n_samples = 0;
};

/// Simulates a fresh ensemble under `control` and estimates the cost at
/// params.theta. Propagates ensemble_blow_up_error from the simulation.
CostEstimate estimate_cost(const CoefficientSet& coeffs, const ControlLaw& control,
                           const LqParams& params, const TimeGrid& grid,
                           std::size_t n_paths, uint64_t seed);

/// Cost at the given theta from an already simulated ensemble (the common-
/// random-numbers building block: one ensemble, many thetas/controls).
CostEstimate cost_from_ensemble(const CoefficientSet& coeffs, const Ensemble& ensemble,
                                double theta);

/// Paired common-random-number comparison of two controls at params.theta:
/// both ensembles use the same seed, diff_psi = psi(b) - psi(a), se_diff the
/// delta-method standard error of the paired difference.
struct CostComparison {
    CostEstimate a, b;
    double diff_psi = 0.0;
    double se_diff = 0.0;
};

CostComparison compare_costs(const CoefficientSet& coeffs, const ControlLaw& control_a,
                             const ControlLaw& control_b, const LqParams& params,
                             const TimeGrid& grid, std::size_t n_paths, uint64_t seed);

/// gap(theta) = |psi_theta - mean(Psi) - (theta/2) var(Psi)| for each theta,
/// all from one sample (common random numbers). ratios[j] =
/// gaps[j] / gaps[j+1]; for a halving theta sequence they sit near 4 when the
/// remainder is second order in theta.
struct ExpansionReport {
    std::vector<double> thetas;
    std::vector<double> psi_thetas;
    std::vector<double> gaps;
    std::vector<double> ratios;
    double mean_psi_T = 0.0;
    double var_psi_T = 0.0;
};

ExpansionReport expansion_check(const CoefficientSet& coeffs, const ControlLaw& control,
                                const LqParams& params, const TimeGrid& grid,
                                std::size_t n_paths, uint64_t seed,
                                std::span<const double> theta_list);

/// Sampling policy and outcome of the variational-inequality sweep
///   LHS = [H^theta at u] - [H^theta at u_i(t_k)]
///         + ((p_bar(t_k) - theta p_i^2(t_k)) / 2) (sigma(u) - sigma(u_i))^2,
/// over (sampled node, grid control, path). max_violation is the largest LHS
/// encountered; violating_fraction counts triples with LHS > tolerance.
struct VariationalReport {
    std::vector<double> control_grid;
    std::vector<std::size_t> time_nodes;       // node indices actually swept
    std::vector<std::vector<double>> lhs_max;  // [time_nodes.size()][control_grid.size()], max over paths
    double max_violation = 0.0;
    double violating_fraction = 0.0;
    double tolerance = 0.0;
    std::size_t paths_checked = 0;
    std::size_t node_stride = 1;
};

/// node_stride > 1 thins the sweep to every stride-th node (recorded in the
/// report); paths are capped at path_cap. Throws std::invalid_argument on an
/// empty control grid.
VariationalReport check_variational_inequality(const CoefficientSet& coeffs,
                                               const AdjointPanel& adjoint,
                                               const Ensemble& ensemble,
                                               const MartingalePanel& panel, double theta,
                                               std::span<const double> control_grid,
                                               double tolerance, std::size_t node_stride = 1,
                                               std::size_t path_cap = 1000);

/// Hamiltonian-maximum check for control-independent diffusion: at every
/// sampled (path, node), H^theta at the realized control must reach the grid
/// maximum (ties toward the smaller u). Fails with the worst offender.
/// Throws std::invalid_argument if sigma is found to depend on the control.
struct ArgmaxReport {
    bool pass = true;
    double worst_gap = 0.0;            // max over samples of H(grid argmax) - H(u_i)
    std::size_t worst_path = 0;
    std::size_t worst_node = 0;
    double worst_grid_maximizer = 0.0;
    double tolerance = 0.0;
    std::size_t paths_checked = 0;
    std::size_t node_stride = 1;
};

ArgmaxReport argmax_check(const CoefficientSet& coeffs, const AdjointPanel& adjoint,
                          const Ensemble& ensemble, const MartingalePanel& panel,
                          double theta, std::span<const double> control_grid,
                          double tolerance = 1e-9, std::size_t node_stride = 1,
                          std::size_t path_cap = 1000);

} // namespace rsmfc
