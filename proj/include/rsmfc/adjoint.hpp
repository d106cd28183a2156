#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rsmfc/grid.hpp"
#include "rsmfc/model.hpp"
#include "rsmfc/riccati.hpp"
#include "rsmfc/sim.hpp"

namespace rsmfc {

/// First- and second-order adjoint processes along a simulated trajectory.
/// LQ closed forms:
///   mu == 0:  p_i = -beta x_i,                       q_i = -sigma beta
///   mu != 0:  p_i = -beta x_i - mu alpha / L_i,      q_i = mu theta gamma x_i alpha / L_i - sigma beta
/// p_bar solves the reduced deterministic second-order equation, q_bar == 0.
struct AdjointPanel {
    double mu = 0.0;
    std::vector<ScalarPath> p;
    std::vector<ScalarPath> q;
    std::vector<ScalarPath> ell;          // shared with the martingale panel
    ScalarPath p_bar;
    ScalarPath q_bar;
    /// Per-path terminal defect |p_i(T) + h_x + (1/phi_i) E[phi h_y]| with the
    /// true phi_i = exp(theta Psi_i). Exact zero for mu == 0; O(dt) + O(1/sqrt(M))
    /// otherwise.
    std::vector<double> terminal_residual;
};

/// Builds the LQ adjoint panel. Dispatches on params.mu == 0 to the
/// mean-field-free formulas; build_lq_adjoint_meanfield applies the general
/// mu formulas unconditionally (the two agree bit for bit at mu = 0).
/// Throws std::invalid_argument on a grid mismatch between the inputs.
AdjointPanel build_lq_adjoint(const LqParams& params, const RiccatiSolution& ricc,
                              const Ensemble& ensemble, const MartingalePanel& panel);
AdjointPanel build_lq_adjoint_meanfield(const LqParams& params, const RiccatiSolution& ricc,
                                        const Ensemble& ensemble, const MartingalePanel& panel);

/// Deterministic second-order pair on the grid: q_bar == 0 and
///   p_bar'(t) = 2 a p_bar(t) - theta qdet^2(t),  p_bar(T) = -1,
/// with qdet(t) = -sigma beta(t), integrated backward by RK4.
/// Throws blow_up_error when beta diverges on the grid.
std::pair<ScalarPath, ScalarPath> solve_second_order(const LqParams& params,
                                                     const RiccatiSolution& ricc,
                                                     const TimeGrid& grid);

enum class ResidualEquation {
    FirstOrder,
    SecondOrder,
    TerminalFirstOrder,
    TerminalMeanField,
    QuadraticBsde,
    QuadraticBsdeTerminal,
};

/// Residual magnitudes accumulated along paths: each path's step defects are
/// summed over the horizon first (the discrete analogue of the equation
/// failing to integrate to zero), then |.| is averaged / maximized over
/// paths. The per-path accumulated defect is O(dt) for an exact ansatz.
struct ResidualReport {
    ResidualEquation which_equation;
    double mean_abs_residual = 0.0;
    double max_abs_residual = 0.0;
    double dt = 0.0;
    std::size_t n_paths = 0;
    TimeGrid grid;
    uint64_t seed = 0;
};

/// Step defect of the first-order adjoint equation along each path:
///   R_{i,k} = dp_i + { H^theta_x + (1/v_i) E[v H^theta_y] } dt
///             + q_i (theta ell_i dt - dB_{i,k}),
/// all coefficients evaluated at (t_k, x_i(t_k), m(t_k), u_i(t_k)).
ResidualReport first_order_residual(const CoefficientSet& coeffs, const AdjointPanel& adjoint,
                                    const Ensemble& ensemble, const MartingalePanel& panel,
                                    double theta);

struct BsdeCheckReport {
    ResidualReport step;       // accumulated defect of dY = -(f + theta ell^2 / 2) dt + ell dB
    ResidualReport terminal;   // |Y_i(T) - h(x_i(T), m(T))| per path
};

/// Reconstructs Y_i(t) = (1/theta) log v_i(t) - int_0^t f ds (trapezoid) and
/// measures the step and terminal defects of the quadratic BSDE it should
/// solve. With anchor_terminal the panel's v is rescaled per path so that
/// v_i(T) = exp(theta Psi_i) exactly, which pins the terminal defect to
/// floating error. Throws std::invalid_argument for theta == 0 (the transform
/// divides by theta; use the risk-neutral cost checks instead).
BsdeCheckReport quadratic_bsde_check(const Ensemble& ensemble, const MartingalePanel& panel,
                                     const CoefficientSet& coeffs, double theta,
                                     bool anchor_terminal = false);

/// Ensemble averages standing in for the square-integrability bounds:
/// sup_t p^2, sup_t v^2, int q^2 dt, int ell^2 dt, sup_t p_bar^2, int q_bar^2 dt.
struct IntegrabilityReport {
    double sup_p_sq, sup_v_sq, int_q_sq, int_ell_sq, sup_p_bar_sq, int_q_bar_sq;
};

IntegrabilityReport integrability_proxies(const AdjointPanel& adjoint,
                                          const MartingalePanel& panel);

} // namespace rsmfc
