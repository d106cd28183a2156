#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rsmfc/grid.hpp"
#include "rsmfc/model.hpp"
#include "rsmfc/riccati.hpp"
#include "rsmfc/rng.hpp"

namespace rsmfc {

/// Admissible control laws the simulator understands. Evaluators must be
/// pure. perturbed(base, 0) coincides with base pointwise.
class ControlLaw {
public:
    static ControlLaw feedback(std::function<double(double t, double x, double m)> u);
    static ControlLaw open_loop(std::function<double(double t)> u);
    static ControlLaw perturbed(const ControlLaw& base, double offset);

    /// May propagate blow_up_error from an underlying gain evaluator; the
    /// simulator converts that into a path blow-up marker.
    double operator()(double t, double x, double m) const { return eval_(t, x, m); }

private:
    std::function<double(double, double, double)> eval_;
};

/// Threshold beyond which a path is flagged as blown up.
inline constexpr double kBlowUpThreshold = 1e10;

struct EnsembleBlowUp {
    std::size_t first_step;            // earliest node index carrying a marker
    std::vector<std::size_t> paths;    // indices of affected paths
};

/// M paths on one grid with their controls, the per-node empirical mean, and
/// the noise source that generated them (kept so downstream consumers can
/// regenerate the exact increments instead of storing them).
struct Ensemble {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::vector<ScalarPath> states;
    std::vector<ScalarPath> controls;  // controls[i][k] = u_i(t_k); last node evaluated at T
    ScalarPath empirical_mean;
    std::optional<EnsembleBlowUp> blow_up;
    uint64_t master_seed = 0;
    IncrementFn increments;
};

/// Explicit Euler–Maruyama for
///   dx_i = b(t, x_i, m, u_i) dt + sigma(t, x_i, m, u_i) dB_i,
/// where m is the ensemble mean of the current step (every particle reads the
/// same step-k mean). A path is marked blown when |x| exceeds kBlowUpThreshold,
/// the update is non-finite, or the control law reports a gain blow-up; blown
/// paths hold NaN from the marker on and drop out of the mean. If every path
/// ends up marked, throws ensemble_blow_up_error carrying the partial result.
/// Throws evaluation_error when a coefficient is non-finite at finite inputs.
Ensemble simulate_state(const CoefficientSet& coeffs, const ControlLaw& control,
                        double x0, const TimeGrid& grid, std::size_t n_paths,
                        uint64_t seed);

/// Same, with an explicit noise source (Brownian-refinement runs).
Ensemble simulate_state(const CoefficientSet& coeffs, const ControlLaw& control,
                        double x0, const TimeGrid& grid, std::size_t n_paths,
                        uint64_t seed, IncrementFn increments);

/// Recomputes the per-node mean over finite path values; bit-identical to
/// Ensemble::empirical_mean by construction (same fixed reduction topology).
ScalarPath empirical_mean_function(const Ensemble& ensemble);

/// Per-path panels of ell, the exponential martingale L, and the positive
/// martingale v built from it. psi_T holds the per-path terminal cost sample
/// used to anchor v(0).
struct MartingalePanel {
    double theta = 0.0;
    std::vector<ScalarPath> ell;       // ell_i(t) = gamma(t) x_i(t)
    std::vector<ScalarPath> l_theta;   // L_i(0) = 1, positivity-preserving log-Euler
    std::vector<ScalarPath> v_theta;   // v_i(t) = v0_hat * L_i(t)
    std::vector<double> psi_T;         // int f dt (trapezoid) + h(x_i(T), m(T))
    double v0_hat = 0.0;               // log-sum-exp estimate of E[exp(theta Psi_T)]
};

/// Builds the martingale panel along an existing ensemble:
///   ell_i(t_k)   = gamma(t_k) x_i(t_k)
///   log L_i(t_{k+1}) = log L_i(t_k) + theta ell dB - theta^2 ell^2 dt / 2
///   v_i(t_k)     = v0_hat L_i(t_k),
/// the exact log-Euler step of dL = theta ell L dB, so L and v stay strictly
/// positive. Increments are regenerated from the ensemble's noise source.
/// Throws evaluation_error if theta * ell is non-finite at a finite state.
MartingalePanel simulate_martingales(const CoefficientSet& coeffs, const Ensemble& ensemble,
                                     const std::function<double(double)>& gamma, double theta);

/// Per-path terminal cost samples Psi_i = trapezoid(f) + h(x_i(T), m(T)).
std::vector<double> terminal_cost_samples(const CoefficientSet& coeffs, const Ensemble& ensemble);

/// Optimal closed loop implied by a Riccati solution. For mu = 0 this is the
/// plain feedback u = -b beta(t) x (bit-identical to simulate_state with that
/// law). For mu != 0 the control u_i = b (-beta x_i - mu alpha / L_i) needs
/// the path's own exponential martingale, so L is co-simulated alongside the
/// state with the same increments.
Ensemble simulate_lq_closed_loop(const LqParams& params, const RiccatiSolution& ricc,
                                 const TimeGrid& grid, std::size_t n_paths, uint64_t seed);

/// Memory-light variant of the closed loop for large grids: keeps per-node
/// summary statistics and a handful of full sample paths instead of the whole
/// ensemble. Quantiles are nearest-rank over the finite cross-section.
struct ClosedLoopSummary {
    TimeGrid grid;
    std::size_t n_paths = 0;
    ScalarPath mean, q05, q50, q95;
    std::vector<ScalarPath> sample_paths;
    double max_abs_state = 0.0;        // over all paths and nodes
    std::optional<EnsembleBlowUp> blow_up; // paths lists at most the first step's set
};

ClosedLoopSummary simulate_closed_loop_summary(const LqParams& params,
                                               const RiccatiSolution& ricc,
                                               const TimeGrid& grid, std::size_t n_paths,
                                               uint64_t seed, std::size_t n_sample_paths = 10);

} // namespace rsmfc
