#include "rsmfc/riccati.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "rsmfc/errors.hpp"
#include "rsmfc/numerics.hpp"

namespace rsmfc {

namespace {

// Denominators as functions of backward time tau = T - t. beta = numer/denom
// with numer = 1 (case 1) or e^{c tau} (case 2); blow-up is denom <= 0.

double denom_case1(const LqParams& p, double tau) {
    const double k = p.b * p.b - p.theta * p.sigma * p.sigma;
    return std::exp(-2.0 * p.a * tau) + k * tau * phi1(-2.0 * p.a * tau);
}

double denom_case2(const LqParams& p, double tau, FormulaVariant variant) {
    const double c = 2.0 * p.a + p.theta * p.sigma;
    const double b2 = p.b * p.b;
    if (variant == FormulaVariant::DerivedOde) {
        return 1.0 + b2 * tau * phi1(c * tau);
    }
    return 1.0 - b2 * std::exp(p.theta * p.sigma * p.t_end) * tau * phi1(c * tau);
}

double denom(const LqParams& p, double tau, GammaChoice choice, FormulaVariant variant) {
    return choice == GammaChoice::SigmaBeta ? denom_case1(p, tau) : denom_case2(p, tau, variant);
}

double numer_case2(const LqParams& p, double tau) {
    return std::exp((2.0 * p.a + p.theta * p.sigma) * tau);
}

[[noreturn]] void throw_blow_up(const char* which, double t, std::optional<double> tau_star) {
    std::ostringstream os;
    os << which << ": gain denominator is non-positive at t = " << t;
    if (tau_star) os << " (root at backward time tau* = " << *tau_star << ")";
    throw blow_up_error(os.str(), tau_star);
}

std::optional<double> locate_root(const LqParams& p, GammaChoice choice, FormulaVariant variant) {
    // The denominators are smooth with at most a handful of sign changes on
    // desk-scale parameter ranges; a dense scan plus bisection is plenty.
    constexpr int kScan = 10000;
    const double T = p.t_end;
    double lo = 0.0;
    double flo = denom(p, lo, choice, variant); // == 1 at tau = 0
    for (int i = 1; i <= kScan; ++i) {
        const double hi = T * static_cast<double>(i) / kScan;
        const double fhi = denom(p, hi, choice, variant);
        if ((flo > 0.0) != (fhi > 0.0)) {
            double a = lo, b = hi, fa = flo;
            while (b - a > 1e-9) {
                const double mid = 0.5 * (a + b);
                const double fm = denom(p, mid, choice, variant);
                if ((fa > 0.0) != (fm > 0.0)) {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            return 0.5 * (a + b);
        }
        lo = hi;
        flo = fhi;
    }
    return std::nullopt;
}

} // namespace

std::optional<double> blow_up_time(const LqParams& params, GammaChoice gamma_choice,
                                   FormulaVariant variant) {
    validate(params);
    return locate_root(params, gamma_choice, variant);
}

double beta_case1_raw(const LqParams& params, double t) {
    return 1.0 / denom_case1(params, params.t_end - t);
}

double beta_case2_raw(const LqParams& params, double t, FormulaVariant variant) {
    const double tau = params.t_end - t;
    return numer_case2(params, tau) / denom_case2(params, tau, variant);
}

double beta_case1(const LqParams& params, double t) {
    const double tau = params.t_end - t;
    const double w = denom_case1(params, tau);
    if (!(w > 0.0)) {
        throw_blow_up("beta_case1", t, locate_root(params, GammaChoice::SigmaBeta,
                                                   FormulaVariant::DerivedOde));
    }
    return 1.0 / w;
}

double beta_case2(const LqParams& params, double t, FormulaVariant variant) {
    const double tau = params.t_end - t;
    const double w = denom_case2(params, tau, variant);
    if (!(w > 0.0)) {
        throw_blow_up("beta_case2", t, locate_root(params, GammaChoice::One, variant));
    }
    return numer_case2(params, tau) / w;
}

double alpha_meanfield(const LqParams& params, const std::function<double(double)>& beta,
                       double t) {
    const double T = params.t_end;
    if (t == T) return 1.0;
    const double b2 = params.b * params.b;
    const double a = params.a;
    auto integrand = [&](double s) { return a - b2 * beta(s); };
    double error = 0.0;
    const double integral = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        integrand, t, T, 15, 1e-10, &error);
    return std::exp(integral);
}

ScalarPath ode_oracle(const std::function<double(double, double)>& rhs, double y_terminal,
                      const TimeGrid& grid) {
    ScalarPath path(grid);
    const std::size_t n = grid.n_steps;
    const double h = grid.dt;
    double y = y_terminal;
    path[n] = y;
    for (std::size_t k = n; k-- > 0;) {
        // One RK4 step from node k+1 backward to node k (step -h).
        const double t1 = grid.node(k + 1);
        const double k1 = rhs(t1, y);
        const double k2 = rhs(t1 - 0.5 * h, y - 0.5 * h * k1);
        const double k3 = rhs(t1 - 0.5 * h, y - 0.5 * h * k2);
        const double k4 = rhs(t1 - h, y - h * k3);
        y -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!std::isfinite(y)) {
            std::ostringstream os;
            os << "ode_oracle: state became non-finite integrating into node " << k
               << " (t = " << grid.node(k) << ")";
            throw blow_up_error(os.str(), std::nullopt, k + 1);
        }
        path[k] = y;
    }
    return path;
}

double RiccatiSolution::beta(double t) const {
    return gamma_choice == GammaChoice::SigmaBeta ? beta_case1(params, t)
                                                  : beta_case2(params, t, variant);
}

double RiccatiSolution::beta_raw(double t) const {
    return gamma_choice == GammaChoice::SigmaBeta ? beta_case1_raw(params, t)
                                                  : beta_case2_raw(params, t, variant);
}

double RiccatiSolution::alpha(double t) const {
    if (params.mu == 0.0) return 1.0;
    return alpha_meanfield(params, [this](double s) { return beta(s); }, t);
}

double RiccatiSolution::gamma(double t) const {
    return gamma_choice == GammaChoice::SigmaBeta ? params.sigma * beta(t) : 1.0;
}

double RiccatiSolution::ode_rhs(double t, double beta_value) const {
    (void)t;
    const double a = params.a;
    const double b2 = params.b * params.b;
    const double th = params.theta;
    const double sig = params.sigma;
    if (gamma_choice == GammaChoice::SigmaBeta) {
        // beta' = -2 a beta - (theta sigma^2 - b^2) beta^2
        return -2.0 * a * beta_value - (th * sig * sig - b2) * beta_value * beta_value;
    }
    // beta' = -(2a + theta sigma) beta + b^2 beta^2
    return -(2.0 * a + th * sig) * beta_value + b2 * beta_value * beta_value;
}

RiccatiSolution make_riccati(const LqParams& params, GammaChoice gamma_choice,
                             FormulaVariant variant) {
    validate(params);
    RiccatiSolution sol;
    sol.params = params;
    sol.gamma_choice = gamma_choice;
    sol.variant = variant;
    sol.blow_up = locate_root(params, gamma_choice, variant);
    return sol;
}

} // namespace rsmfc
