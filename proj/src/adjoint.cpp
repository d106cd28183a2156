#include "rsmfc/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>

#include "rsmfc/errors.hpp"
#include "rsmfc/numerics.hpp"
#include "rsmfc/reduce.hpp"

namespace rsmfc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Fn>
void parallel_paths(std::size_t n_paths, Fn&& fn) {
    std::mutex mu;
    std::exception_ptr eptr;
    parallel_for_chunks(n_paths, [&](std::size_t, std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!eptr) eptr = std::current_exception();
        }
    });
    if (eptr) std::rethrow_exception(eptr);
}

AdjointPanel build_panel(const LqParams& params, const RiccatiSolution& ricc,
                         const Ensemble& ensemble, const MartingalePanel& panel,
                         bool meanfield_formulas) {
    validate(params);
    if (ricc.params.t_end != ensemble.grid.t_end || params.t_end != ensemble.grid.t_end) {
        throw std::invalid_argument("build_lq_adjoint: horizon differs between gain and grid");
    }
    if (panel.ell.size() != ensemble.n_paths) {
        throw std::invalid_argument("build_lq_adjoint: martingale panel / ensemble mismatch");
    }

    const TimeGrid& grid = ensemble.grid;
    const std::size_t n = grid.n_steps;
    const double sig = params.sigma;
    const double th = params.theta;
    const double mu = params.mu;

    std::vector<double> beta_nodes(n + 1), alpha_nodes(n + 1), gamma_nodes(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        beta_nodes[k] = ricc.beta(grid.node(k));
        gamma_nodes[k] = ricc.gamma(grid.node(k));
        alpha_nodes[k] = meanfield_formulas ? ricc.alpha(grid.node(k)) : 1.0;
    }

    AdjointPanel adj;
    adj.mu = mu;
    adj.p.assign(ensemble.n_paths, ScalarPath(grid));
    adj.q.assign(ensemble.n_paths, ScalarPath(grid));
    adj.ell = panel.ell;
    auto second = solve_second_order(params, ricc, grid);
    adj.p_bar = std::move(second.first);
    adj.q_bar = std::move(second.second);
    adj.terminal_residual.assign(ensemble.n_paths, kNaN);

    parallel_paths(ensemble.n_paths, [&](std::size_t i) {
        const ScalarPath& x = ensemble.states[i];
        const ScalarPath& l = panel.l_theta[i];
        ScalarPath& p = adj.p[i];
        ScalarPath& q = adj.q[i];
        if (x.blow_up) p.blow_up = q.blow_up = x.blow_up;
        const std::size_t valid = x.valid_nodes();
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (k >= valid) {
                p[k] = q[k] = kNaN;
                continue;
            }
            if (meanfield_formulas) {
                p[k] = -beta_nodes[k] * x[k] - mu * alpha_nodes[k] / l[k];
                q[k] = mu * th * gamma_nodes[k] * x[k] * alpha_nodes[k] / l[k] -
                       sig * beta_nodes[k];
            } else {
                p[k] = -beta_nodes[k] * x[k];
                q[k] = -sig * beta_nodes[k];
            }
        }
    });

    // Terminal defect against the prescribed end condition, with the true
    // per-path phi = exp(theta Psi): |p(T) + h_x(T) + (1/phi) E[phi h_y]|.
    // h_x = x(T), h_y = mu for the LQ terminal cost.
    if (!ensemble.blow_up) {
        std::vector<double> log_phi(ensemble.n_paths);
        for (std::size_t i = 0; i < ensemble.n_paths; ++i) log_phi[i] = th * panel.psi_T[i];
        const double log_mean_phi = log_mean_exp(log_phi);
        parallel_paths(ensemble.n_paths, [&](std::size_t i) {
            const double x_T = ensemble.states[i][n];
            const double mean_phi_hy_over_phi = mu * std::exp(log_mean_phi - log_phi[i]);
            adj.terminal_residual[i] = std::abs(adj.p[i][n] + x_T + mean_phi_hy_over_phi);
        });
    }
    return adj;
}

} // namespace

AdjointPanel build_lq_adjoint(const LqParams& params, const RiccatiSolution& ricc,
                              const Ensemble& ensemble, const MartingalePanel& panel) {
    return build_panel(params, ricc, ensemble, panel, params.mu != 0.0);
}

AdjointPanel build_lq_adjoint_meanfield(const LqParams& params, const RiccatiSolution& ricc,
                                        const Ensemble& ensemble, const MartingalePanel& panel) {
    return build_panel(params, ricc, ensemble, panel, true);
}

std::pair<ScalarPath, ScalarPath> solve_second_order(const LqParams& params,
                                                     const RiccatiSolution& ricc,
                                                     const TimeGrid& grid) {
    const double a = params.a;
    const double th = params.theta;
    const double sig = params.sigma;
    // p_bar' = 2 a p_bar - theta qdet^2, qdet = -sigma beta.
    auto rhs = [&](double t, double p_bar) {
        const double q_det = -sig * ricc.beta(t);
        return 2.0 * a * p_bar - th * q_det * q_det;
    };
    ScalarPath p_bar = ode_oracle(rhs, -1.0, grid);
    ScalarPath q_bar(grid); // identically zero: deterministic ansatz
    return {std::move(p_bar), std::move(q_bar)};
}

ResidualReport first_order_residual(const CoefficientSet& coeffs, const AdjointPanel& adjoint,
                                    const Ensemble& ensemble, const MartingalePanel& panel,
                                    double theta) {
    const TimeGrid& grid = ensemble.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = ensemble.n_paths;
    const double dt = grid.dt;
    if (adjoint.p.size() != n_paths || panel.v_theta.size() != n_paths) {
        throw std::invalid_argument("first_order_residual: panel/ensemble size mismatch");
    }

    std::vector<double> accumulated(n_paths, 0.0);
    std::vector<double> weighted_hy(n_paths);

    for (std::size_t k = 0; k < n; ++k) {
        const double t = grid.node(k);
        const double m = ensemble.empirical_mean[k];
        // E[v H^theta_y] over paths, one number per step.
        parallel_paths(n_paths, [&](std::size_t i) {
            const double x = ensemble.states[i][k];
            const double u = ensemble.controls[i][k];
            const double p = adjoint.p[i][k];
            const double q = adjoint.q[i][k];
            const double ell = adjoint.ell[i][k];
            const double h_y = coeffs.b_y(t, x, m, u) * p +
                               coeffs.sigma_y(t, x, m, u) * (q + theta * ell * p) -
                               coeffs.f_y(t, x, m, u);
            weighted_hy[i] = panel.v_theta[i][k] * h_y;
        });
        const double mean_v_hy = finite_mean(weighted_hy).mean;

        parallel_paths(n_paths, [&](std::size_t i) {
            const double x = ensemble.states[i][k];
            const double u = ensemble.controls[i][k];
            const double p = adjoint.p[i][k];
            const double q = adjoint.q[i][k];
            const double ell = adjoint.ell[i][k];
            const double h_x = coeffs.b_x(t, x, m, u) * p +
                               coeffs.sigma_x(t, x, m, u) * (q + theta * ell * p) -
                               coeffs.f_x(t, x, m, u);
            const double drift = h_x + mean_v_hy / panel.v_theta[i][k];
            const double db = ensemble.increments(i, k, dt);
            const double dp = adjoint.p[i][k + 1] - adjoint.p[i][k];
            accumulated[i] += dp + drift * dt + q * (theta * ell * dt - db);
        });
    }

    ResidualReport report;
    report.which_equation = ResidualEquation::FirstOrder;
    report.dt = dt;
    report.n_paths = n_paths;
    report.grid = grid;
    report.seed = ensemble.master_seed;
    double sum = 0.0, mx = 0.0;
    std::size_t count = 0;
    for (double r : accumulated) {
        if (!std::isfinite(r)) continue;
        sum += std::abs(r);
        mx = std::max(mx, std::abs(r));
        ++count;
    }
    report.mean_abs_residual = count ? sum / static_cast<double>(count) : kNaN;
    report.max_abs_residual = count ? mx : kNaN;
    return report;
}

BsdeCheckReport quadratic_bsde_check(const Ensemble& ensemble, const MartingalePanel& panel,
                                     const CoefficientSet& coeffs, double theta,
                                     bool anchor_terminal) {
    if (theta == 0.0) {
        throw std::invalid_argument(
            "quadratic_bsde_check: theta == 0 (log transform undefined; use the risk-neutral "
            "cost checks)");
    }
    const TimeGrid& grid = ensemble.grid;
    const std::size_t n = grid.n_steps;
    const std::size_t n_paths = ensemble.n_paths;
    const double dt = grid.dt;

    std::vector<double> accumulated(n_paths, 0.0);
    std::vector<double> terminal(n_paths, 0.0);

    parallel_paths(n_paths, [&](std::size_t i) {
        const ScalarPath& x = ensemble.states[i];
        const ScalarPath& u = ensemble.controls[i];
        const ScalarPath& m = ensemble.empirical_mean;
        if (x.blow_up) {
            accumulated[i] = kNaN;
            terminal[i] = kNaN;
            return;
        }
        // Per-path rescale so v(T) matches exp(theta Psi) exactly when anchored.
        double scale = 1.0;
        if (anchor_terminal) {
            scale = std::exp(theta * panel.psi_T[i]) / panel.v_theta[i][n];
        }
        double running_f = 0.0; // trapezoid of f along the path
        double f_prev = coeffs.f(grid.node(0), x[0], m[0], u[0]);
        double y_prev = std::log(panel.v_theta[i][0] * scale) / theta;
        double defect = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double ell = panel.ell[i][k];
            const double db = ensemble.increments(i, k, dt);
            const double f_k = f_prev;
            const double f_next = coeffs.f(grid.node(k + 1), x[k + 1], m[k + 1], u[k + 1]);
            running_f += 0.5 * dt * (f_k + f_next);
            const double y_next = std::log(panel.v_theta[i][k + 1] * scale) / theta - running_f;
            defect += (y_next - y_prev) + (f_k + 0.5 * theta * ell * ell) * dt - ell * db;
            y_prev = y_next;
            f_prev = f_next;
        }
        accumulated[i] = defect;
        terminal[i] = std::abs(y_prev - coeffs.h(x[n], m[n]));
    });

    auto summarize = [&](const std::vector<double>& vals, ResidualEquation eq) {
        ResidualReport r;
        r.which_equation = eq;
        r.dt = dt;
        r.n_paths = n_paths;
        r.grid = grid;
        r.seed = ensemble.master_seed;
        double sum = 0.0, mx = 0.0;
        std::size_t count = 0;
        for (double v : vals) {
            if (!std::isfinite(v)) continue;
            sum += std::abs(v);
            mx = std::max(mx, std::abs(v));
            ++count;
        }
        r.mean_abs_residual = count ? sum / static_cast<double>(count) : kNaN;
        r.max_abs_residual = count ? mx : kNaN;
        return r;
    };

    BsdeCheckReport out;
    out.step = summarize(accumulated, ResidualEquation::QuadraticBsde);
    out.terminal = summarize(terminal, ResidualEquation::QuadraticBsdeTerminal);
    return out;
}

IntegrabilityReport integrability_proxies(const AdjointPanel& adjoint,
                                          const MartingalePanel& panel) {
    const std::size_t n_paths = adjoint.p.size();
    const double dt = adjoint.p.empty() ? 0.0 : adjoint.p[0].grid.dt;
    double sup_p = 0.0, sup_v = 0.0, int_q = 0.0, int_ell = 0.0;
    for (std::size_t i = 0; i < n_paths; ++i) {
        double sp = 0.0, sv = 0.0, iq = 0.0, il = 0.0;
        const std::size_t valid = adjoint.p[i].valid_nodes();
        for (std::size_t k = 0; k < valid; ++k) {
            sp = std::max(sp, adjoint.p[i][k] * adjoint.p[i][k]);
            sv = std::max(sv, panel.v_theta[i][k] * panel.v_theta[i][k]);
            if (k + 1 < valid) {
                iq += adjoint.q[i][k] * adjoint.q[i][k] * dt;
                il += adjoint.ell[i][k] * adjoint.ell[i][k] * dt;
            }
        }
        sup_p += sp;
        sup_v += sv;
        int_q += iq;
        int_ell += il;
    }
    const double inv = n_paths ? 1.0 / static_cast<double>(n_paths) : 0.0;
    double sup_pbar = 0.0, int_qbar = 0.0;
    for (std::size_t k = 0; k < adjoint.p_bar.size(); ++k) {
        sup_pbar = std::max(sup_pbar, adjoint.p_bar[k] * adjoint.p_bar[k]);
        if (k + 1 < adjoint.q_bar.size()) int_qbar += adjoint.q_bar[k] * adjoint.q_bar[k] * dt;
    }
    return {sup_p * inv, sup_v * inv, int_q * inv, int_ell * inv, sup_pbar, int_qbar};
}

} // namespace rsmfc
