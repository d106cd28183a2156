#pragma once

#include <functional>
#include <string>
#include <vector>

namespace rsmfc {

using Coef4 = std::function<double(double t, double x, double y, double u)>;
using Coef2 = std::function<double(double x, double y)>;

/// Scalar mean-field model coefficients b, sigma, f (drift, diffusion,
/// running cost — functions of time, state x, state mean y, control u) and
/// terminal cost h(x, y), together with the partial derivatives the adjoint
/// machinery consumes. Evaluators must be pure and reentrant.
struct CoefficientSet {
    Coef4 b, sigma, f;
    Coef2 h;

    Coef4 b_x, b_y, b_xx;
    Coef4 sigma_x, sigma_y, sigma_xx;
    Coef4 f_x, f_y, f_u, f_xx;
    Coef2 h_x, h_y, h_xx;
};

/// Scalar linear-quadratic model constants:
/// dx = (a x + b u) dt + sigma dB,  running cost u^2/2,
/// terminal cost x^2/2 + mu * E[x(T)].
/// theta is the risk-sensitivity index (negative: risk seeking, positive:
/// risk averse); mu = 0 removes the mean-field coupling.
struct LqParams {
    double a = 0.0;
    double b = 1.0;
    double sigma = 0.0;
    double theta = 0.0;
    double mu = 0.0;
    double x0 = 0.0;
    double t_end = 1.0;
};

/// Throws std::invalid_argument on sigma < 0, t_end <= 0, or non-finite fields.
void validate(const LqParams& params);

/// The LQ instance: b = a x + b u, sigma const, f = u^2/2, h = x^2/2 + mu y,
/// with all partials filled in exactly.
CoefficientSet lq_coefficients(const LqParams& params);

/// check_derivatives output: worst |declared - finite difference| per partial.
struct DerivativeCheckEntry {
    std::string name;        // e.g. "b_x"
    double max_abs_error;
    double worst_point[4];   // (t, x, y, u) attaining the max
};

struct DerivativeReport {
    std::vector<DerivativeCheckEntry> entries;
    double max_discrepancy;
};

/// Compares every declared partial against a central finite difference of its
/// parent (first derivatives against the function, second derivatives against
/// the declared first derivative) at `samples` points drawn uniformly from
/// the box [-5, 5]^4 in (t, x, y, u). Step 1e-5.
/// Throws std::invalid_argument for samples < 1 and evaluation_error (naming
/// the function and the point) if a coefficient is non-finite at a sample.
DerivativeReport check_derivatives(const CoefficientSet& coeffs, int samples, uint64_t seed);

} // namespace rsmfc
