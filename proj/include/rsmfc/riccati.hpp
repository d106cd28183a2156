#pragma once

#include <functional>
#include <optional>

#include "rsmfc/grid.hpp"
#include "rsmfc/model.hpp"

namespace rsmfc {

/// Choice of the deterministic factor gamma in ell(t) = gamma(t) * x(t).
/// SigmaBeta: gamma = sigma * beta (couples the martingale to the gain);
/// One: gamma = 1.
enum class GammaChoice { SigmaBeta, One };

/// Closed-form variant for the One-case gain.
///   DerivedOde — Bernoulli-substitution solution of the Riccati equation
///                (default; matches the ODE integrator).
///   Printed    — transcription of the formula as it circulates in print.
///                It does not satisfy its own equation; it is retained,
///                behind this explicit tag, because its denominator root is
///                the finite-time explosion benchmark. The verification
///                suite asserts the mismatch rather than papering over it.
enum class FormulaVariant { DerivedOde, Printed };

/// Backward time at which the closed-form denominator of the gain vanishes.
/// Located by a 1e4-point sign scan over (0, T] plus bisection to 1e-9.
/// nullopt when the denominator keeps its sign on (0, T].
std::optional<double> blow_up_time(const LqParams& params, GammaChoice gamma_choice,
                                   FormulaVariant variant);

/// Gain beta(t) for gamma = sigma*beta:
///   beta' + 2 a beta + (theta sigma^2 - b^2) beta^2 = 0,  beta(T) = 1.
/// Evaluated as 1/w with w = e^{-2 a tau} + (b^2 - theta sigma^2) tau phi1(-2 a tau),
/// tau = T - t, which is the textbook solution rewritten so it stays defined
/// at a = 0. Throws blow_up_error when w <= 0 (t at or past the root).
double beta_case1(const LqParams& params, double t);

/// Gain beta(t) for gamma = 1:
///   beta' + (2a + theta sigma) beta - b^2 beta^2 = 0,  beta(T) = 1.
/// DerivedOde: e^{c tau} / (1 + b^2 tau phi1(c tau)), c = 2a + theta sigma.
/// Printed:    e^{c tau} / (1 - b^2 e^{theta sigma T} tau phi1(c tau)).
/// Throws blow_up_error past the denominator root.
double beta_case2(const LqParams& params, double t, FormulaVariant variant);

/// Unchecked formula values: return 1/denominator as-is (negative or infinite
/// past the root). Used to measure how far a variant strays from the
/// integrated solution in regions where the checked evaluators refuse.
double beta_case1_raw(const LqParams& params, double t);
double beta_case2_raw(const LqParams& params, double t, FormulaVariant variant);

/// alpha(t) = exp( int_t^T (a - b^2 beta(s)) ds ) solving
/// alpha' + (a - b^2 beta) alpha = 0, alpha(T) = 1. The integral is done by
/// adaptive Gauss-Kronrod quadrature to relative tolerance 1e-10.
/// Throws blow_up_error if beta diverges inside [t, T].
double alpha_meanfield(const LqParams& params,
                       const std::function<double(double)>& beta, double t);

/// Classical RK4 sweep backward from t = T with terminal value y_terminal,
/// sampled on the grid (values[k] is the solution at node k). A non-finite
/// state aborts with blow_up_error carrying the last finite node.
ScalarPath ode_oracle(const std::function<double(double, double)>& rhs,
                      double y_terminal, const TimeGrid& grid);

/// Bundled evaluators for one (gamma choice, variant) pair.
/// alpha() short-circuits to 1 when mu == 0 (it only ever enters multiplied
/// by mu, and skipping the quadrature keeps the mean-field-free pipeline
/// bit-identical to the dedicated formulas).
struct RiccatiSolution {
    LqParams params;
    GammaChoice gamma_choice = GammaChoice::SigmaBeta;
    FormulaVariant variant = FormulaVariant::DerivedOde;
    std::optional<double> blow_up; // backward time tau*

    double beta(double t) const;          // checked
    double beta_raw(double t) const;      // unchecked formula value
    double alpha(double t) const;
    double gamma(double t) const;         // sigma*beta(t) or 1

    /// Right-hand side beta' = rhs(t, beta) of the case's Riccati equation,
    /// for feeding the ODE oracle.
    double ode_rhs(double t, double beta_value) const;
};

RiccatiSolution make_riccati(const LqParams& params, GammaChoice gamma_choice,
                             FormulaVariant variant = FormulaVariant::DerivedOde);

} // namespace rsmfc
