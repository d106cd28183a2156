#include "rsmfc/cost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rsmfc/errors.hpp"
#include "rsmfc/numerics.hpp"
#include "rsmfc/reduce.hpp"

namespace rsmfc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sample statistics of the exponent weights, max-shifted for stability:
// w_i = exp(theta psi_i - shift). Everything downstream only needs
// sd(w)/mean(w) and log(mean(w)) + shift, both shift-invariant.
struct ExpStats {
    double log_mean;   // log E exp(theta psi)
    double cv_over_sqrt_n; // sd(w) / (mean(w) sqrt(n))
};

ExpStats exp_stats(std::span<const double> psi, double theta) {
    const std::size_t n = psi.size();
    double shift = -std::numeric_limits<double>::infinity();
    for (double p : psi) shift = std::max(shift, theta * p);
    double sum = 0.0;
    for (double p : psi) sum += std::exp(theta * p - shift);
    const double mean = sum / static_cast<double>(n);
    // second pass, mean-centered: for small theta the weights are all close
    // to one and a running sum-of-squares would cancel to noise
    double var = 0.0;
    for (double p : psi) {
        const double d = std::exp(theta * p - shift) - mean;
        var += d * d;
    }
    var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
    const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    return {shift + std::log(mean), sd / (mean * std::sqrt(static_cast<double>(n)))};
}

std::vector<double> finite_psi(const std::vector<double>& psi) {
    std::vector<double> out;
    out.reserve(psi.size());
    for (double p : psi) {
        if (std::isfinite(p)) out.push_back(p);
    }
    if (out.empty()) {
        throw blow_up_error("cost estimate: no fully simulated path survives");
    }
    return out;
}

CostEstimate estimate_from_psi(const std::vector<double>& psi_all, double theta) {
    const std::vector<double> psi = finite_psi(psi_all);
    const std::size_t n = psi.size();
    CostEstimate est;
    est.theta = theta;
    est.n_samples = n;
    double mean = 0.0;
    for (double p : psi) mean += p;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double p : psi) var += (p - mean) * (p - mean);
    var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
    est.mean_psi_T = mean;
    est.var_psi_T = var;
    if (theta == 0.0) {
        est.log_domain_value = 0.0;
        est.j_theta = 1.0;
        est.psi_theta = mean;
        est.std_error = std::sqrt(var / static_cast<double>(n));
        return est;
    }
    const ExpStats stats = exp_stats(psi, theta);
    est.log_domain_value = stats.log_mean;
    est.j_theta = std::exp(stats.log_mean);
    est.psi_theta = stats.log_mean / theta;
    est.std_error = stats.cv_over_sqrt_n / std::abs(theta);
    return est;
}

} // namespace

double hamiltonian(const CoefficientSet& coeffs, double t, double x, double m, double u,
                   double p, double q) {
    return coeffs.b(t, x, m, u) * p + coeffs.sigma(t, x, m, u) * q - coeffs.f(t, x, m, u);
}

double rs_hamiltonian(const CoefficientSet& coeffs, double t, double x, double m, double u,
                      double p, double q, double ell, double theta) {
    return coeffs.b(t, x, m, u) * p + coeffs.sigma(t, x, m, u) * (q + theta * ell * p) -
           coeffs.f(t, x, m, u);
}

CostEstimate cost_from_ensemble(const CoefficientSet& coeffs, const Ensemble& ensemble,
                                double theta) {
    return estimate_from_psi(terminal_cost_samples(coeffs, ensemble), theta);
}

CostEstimate estimate_cost(const CoefficientSet& coeffs, const ControlLaw& control,
                           const LqParams& params, const TimeGrid& grid, std::size_t n_paths,
                           uint64_t seed) {
    const Ensemble ens = simulate_state(coeffs, control, params.x0, grid, n_paths, seed);
    return cost_from_ensemble(coeffs, ens, params.theta);
}

CostComparison compare_costs(const CoefficientSet& coeffs, const ControlLaw& control_a,
                             const ControlLaw& control_b, const LqParams& params,
                             const TimeGrid& grid, std::size_t n_paths, uint64_t seed) {
    const Ensemble ens_a = simulate_state(coeffs, control_a, params.x0, grid, n_paths, seed);
    const Ensemble ens_b = simulate_state(coeffs, control_b, params.x0, grid, n_paths, seed);
    const std::vector<double> psi_a = terminal_cost_samples(coeffs, ens_a);
    const std::vector<double> psi_b = terminal_cost_samples(coeffs, ens_b);

    CostComparison cmp;
    cmp.a = estimate_from_psi(psi_a, params.theta);
    cmp.b = estimate_from_psi(psi_b, params.theta);
    cmp.diff_psi = cmp.b.psi_theta - cmp.a.psi_theta;

    // Delta method on the paired samples (common random numbers): the
    // difference of the two log-mean-exp statistics is, to first order, the
    // mean of d_i = w_b_i / mean(w_b) - w_a_i / mean(w_a) scaled by 1/theta.
    const double theta = params.theta;
    std::size_t n = 0;
    double mean_d = 0.0, m2 = 0.0;
    const double la = cmp.a.log_domain_value;
    const double lb = cmp.b.log_domain_value;
    for (std::size_t i = 0; i < psi_a.size(); ++i) {
        if (!std::isfinite(psi_a[i]) || !std::isfinite(psi_b[i])) continue;
        double d;
        if (theta == 0.0) {
            d = psi_b[i] - psi_a[i];
        } else {
            d = std::exp(theta * psi_b[i] - lb) - std::exp(theta * psi_a[i] - la);
        }
        ++n;
        const double delta = d - mean_d;
        mean_d += delta / static_cast<double>(n);
        m2 += delta * (d - mean_d);
    }
    const double var_d = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    const double scale = theta == 0.0 ? 1.0 : std::abs(theta);
    cmp.se_diff = std::sqrt(var_d / static_cast<double>(n)) / scale;
    return cmp;
}

ExpansionReport expansion_check(const CoefficientSet& coeffs, const ControlLaw& control,
                                const LqParams& params, const TimeGrid& grid,
                                std::size_t n_paths, uint64_t seed,
                                std::span<const double> theta_list) {
    for (double th : theta_list) {
        if (th == 0.0) throw std::invalid_argument("expansion_check: theta values must be nonzero");
    }
    const Ensemble ens = simulate_state(coeffs, control, params.x0, grid, n_paths, seed);
    const std::vector<double> psi = finite_psi(terminal_cost_samples(coeffs, ens));

    ExpansionReport rep;
    CostEstimate base = estimate_from_psi(psi, 0.0);
    rep.mean_psi_T = base.mean_psi_T;
    rep.var_psi_T = base.var_psi_T;
    for (double th : theta_list) {
        const CostEstimate est = estimate_from_psi(psi, th);
        rep.thetas.push_back(th);
        rep.psi_thetas.push_back(est.psi_theta);
        rep.gaps.push_back(
            std::abs(est.psi_theta - rep.mean_psi_T - 0.5 * th * rep.var_psi_T));
    }
    for (std::size_t j = 0; j + 1 < rep.gaps.size(); ++j) {
        rep.ratios.push_back(rep.gaps[j] / rep.gaps[j + 1]);
    }
    return rep;
}

namespace {

std::vector<std::size_t> sampled_nodes(std::size_t n_nodes, std::size_t stride) {
    std::vector<std::size_t> nodes;
    if (stride < 1) stride = 1;
    for (std::size_t k = 0; k < n_nodes; k += stride) nodes.push_back(k);
    if (nodes.back() != n_nodes - 1) nodes.push_back(n_nodes - 1);
    return nodes;
}

} // namespace

VariationalReport check_variational_inequality(const CoefficientSet& coeffs,
                                               const AdjointPanel& adjoint,
                                               const Ensemble& ensemble,
                                               const MartingalePanel& panel, double theta,
                                               std::span<const double> control_grid,
                                               double tolerance, std::size_t node_stride,
                                               std::size_t path_cap) {
    if (control_grid.empty()) {
        throw std::invalid_argument("check_variational_inequality: empty control grid");
    }
    (void)panel;
    const std::size_t n_paths = std::min(path_cap, ensemble.n_paths);
    VariationalReport rep;
    rep.control_grid.assign(control_grid.begin(), control_grid.end());
    rep.time_nodes = sampled_nodes(ensemble.grid.n_nodes(), node_stride);
    rep.tolerance = tolerance;
    rep.paths_checked = n_paths;
    rep.node_stride = node_stride;
    rep.lhs_max.assign(rep.time_nodes.size(),
                       std::vector<double>(control_grid.size(),
                                           -std::numeric_limits<double>::infinity()));

    double max_violation = -std::numeric_limits<double>::infinity();
    std::size_t violating = 0, total = 0;

    for (std::size_t row = 0; row < rep.time_nodes.size(); ++row) {
        const std::size_t k = rep.time_nodes[row];
        const double t = ensemble.grid.node(k);
        const double m = ensemble.empirical_mean[k];
        for (std::size_t i = 0; i < n_paths; ++i) {
            if (k >= ensemble.states[i].valid_nodes()) continue;
            const double x = ensemble.states[i][k];
            const double u_bar = ensemble.controls[i][k];
            if (!std::isfinite(u_bar)) continue;
            const double p = adjoint.p[i][k];
            const double q = adjoint.q[i][k];
            const double ell = adjoint.ell[i][k];
            const double h_at_ubar = rs_hamiltonian(coeffs, t, x, m, u_bar, p, q, ell, theta);
            const double sigma_at_ubar = coeffs.sigma(t, x, m, u_bar);
            const double second_coef = 0.5 * (adjoint.p_bar[k] - theta * p * p);
            for (std::size_t j = 0; j < control_grid.size(); ++j) {
                const double u = control_grid[j];
                const double d_sigma = coeffs.sigma(t, x, m, u) - sigma_at_ubar;
                const double lhs = rs_hamiltonian(coeffs, t, x, m, u, p, q, ell, theta) -
                                   h_at_ubar + second_coef * d_sigma * d_sigma;
                rep.lhs_max[row][j] = std::max(rep.lhs_max[row][j], lhs);
                max_violation = std::max(max_violation, lhs);
                ++total;
                if (lhs > tolerance) ++violating;
            }
        }
    }
    rep.max_violation = max_violation;
    rep.violating_fraction = total ? static_cast<double>(violating) / static_cast<double>(total)
                                   : 0.0;
    return rep;
}

ArgmaxReport argmax_check(const CoefficientSet& coeffs, const AdjointPanel& adjoint,
                          const Ensemble& ensemble, const MartingalePanel& panel, double theta,
                          std::span<const double> control_grid, double tolerance,
                          std::size_t node_stride, std::size_t path_cap) {
    if (control_grid.empty()) {
        throw std::invalid_argument("argmax_check: empty control grid");
    }
    (void)panel;
    // The reduction to a pointwise maximum needs sigma free of the control.
    {
        const double t0 = ensemble.grid.node(0);
        const double x0 = ensemble.states[0][0];
        const double m0 = ensemble.empirical_mean[0];
        const double s_a = coeffs.sigma(t0, x0, m0, control_grid.front());
        const double s_b = coeffs.sigma(t0, x0, m0, control_grid.back());
        if (s_a != s_b) {
            throw std::invalid_argument(
                "argmax_check: sigma depends on the control; use "
                "check_variational_inequality instead");
        }
    }

    ArgmaxReport rep;
    rep.tolerance = tolerance;
    rep.node_stride = node_stride;
    const std::size_t n_paths = std::min(path_cap, ensemble.n_paths);
    rep.paths_checked = n_paths;
    const auto nodes = sampled_nodes(ensemble.grid.n_nodes(), node_stride);

    for (std::size_t k : nodes) {
        const double t = ensemble.grid.node(k);
        const double m = ensemble.empirical_mean[k];
        for (std::size_t i = 0; i < n_paths; ++i) {
            if (k >= ensemble.states[i].valid_nodes()) continue;
            const double x = ensemble.states[i][k];
            const double u_bar = ensemble.controls[i][k];
            if (!std::isfinite(u_bar)) continue;
            const double p = adjoint.p[i][k];
            const double q = adjoint.q[i][k];
            const double ell = adjoint.ell[i][k];
            double best = -std::numeric_limits<double>::infinity();
            double best_u = control_grid[0];
            for (double u : control_grid) {
                const double h = rs_hamiltonian(coeffs, t, x, m, u, p, q, ell, theta);
                if (h > best) { // strict: ties keep the smaller u
                    best = h;
                    best_u = u;
                }
            }
            const double h_at_ubar = rs_hamiltonian(coeffs, t, x, m, u_bar, p, q, ell, theta);
            const double gap = best - h_at_ubar;
            if (gap > rep.worst_gap) {
                rep.worst_gap = gap;
                rep.worst_path = i;
                rep.worst_node = k;
                rep.worst_grid_maximizer = best_u;
            }
        }
    }
    rep.pass = rep.worst_gap <= tolerance;
    return rep;
}

} // namespace rsmfc
