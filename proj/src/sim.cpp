#include "rsmfc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "rsmfc/errors.hpp"
#include "rsmfc/numerics.hpp"
#include "rsmfc/reduce.hpp"

namespace rsmfc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Per-path loop with fixed chunking; exceptions from worker chunks are
// rethrown on the caller's thread.
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

// Exact log-Euler increment of dL = theta ell L dB. Shared by every place
// that evolves L so recomputation is bit-identical.
inline double log_l_increment(double theta, double ell, double db, double dt) {
    return theta * ell * db - 0.5 * theta * theta * ell * ell * dt;
}

// Mean over alive entries of the running state vector, fixed topology.
double alive_mean(std::span<const double> xs) { return finite_mean(xs).mean; }

struct StepOutcome {
    bool blew_up = false;
};

} // namespace

ControlLaw ControlLaw::feedback(std::function<double(double, double, double)> u) {
    ControlLaw law;
    law.eval_ = std::move(u);
    return law;
}

ControlLaw ControlLaw::open_loop(std::function<double(double)> u) {
    ControlLaw law;
    law.eval_ = [fn = std::move(u)](double t, double, double) { return fn(t); };
    return law;
}

ControlLaw ControlLaw::perturbed(const ControlLaw& base, double offset) {
    ControlLaw law;
    law.eval_ = [base_fn = base.eval_, offset](double t, double x, double m) {
        return base_fn(t, x, m) + offset;
    };
    return law;
}

namespace {

Ensemble finish_ensemble(Ensemble ens) {
    // Collect blow-up markers into the ensemble-level record.
    std::size_t first = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> blown;
    for (std::size_t i = 0; i < ens.n_paths; ++i) {
        if (ens.states[i].blow_up) {
            blown.push_back(i);
            first = std::min(first, *ens.states[i].blow_up);
        }
    }
    if (!blown.empty()) {
        ens.blow_up = EnsembleBlowUp{first, std::move(blown)};
    }
    if (ens.blow_up && ens.blow_up->paths.size() == ens.n_paths) {
        auto shared = std::make_shared<Ensemble>(std::move(ens));
        std::ostringstream os;
        os << "simulate_state: every path blew up (first invalid node "
           << shared->blow_up->first_step << ")";
        throw ensemble_blow_up_error(os.str(), shared, shared->blow_up->first_step);
    }
    return ens;
}

} // namespace

Ensemble simulate_state(const CoefficientSet& coeffs, const ControlLaw& control, double x0,
                        const TimeGrid& grid, std::size_t n_paths, uint64_t seed,
                        IncrementFn increments) {
    if (n_paths < 1) throw std::invalid_argument("simulate_state: n_paths must be >= 1");
    if (grid.n_steps < 1) throw std::invalid_argument("simulate_state: empty grid");

    Ensemble ens;
    ens.grid = grid;
    ens.n_paths = n_paths;
    ens.master_seed = seed;
    ens.increments = std::move(increments);
    ens.states.assign(n_paths, ScalarPath(grid));
    ens.controls.assign(n_paths, ScalarPath(grid));
    ens.empirical_mean = ScalarPath(grid);

    const std::size_t n = grid.n_steps;
    const double dt = grid.dt;

    std::vector<double> x_cur(n_paths, x0);
    std::vector<std::size_t> alive_marker(n_paths, 0); // 0 = alive, else blow-up node
    for (std::size_t i = 0; i < n_paths; ++i) ens.states[i][0] = x0;

    for (std::size_t k = 0; k <= n; ++k) {
        const double t = grid.node(k);
        const double m = alive_mean(x_cur);
        ens.empirical_mean[k] = m;
        if (!std::isfinite(m)) {
            // No path alive. Pad the remainder with NaN and stop stepping.
            for (std::size_t j = k; j <= n; ++j) ens.empirical_mean[j] = kNaN;
            if (!ens.empirical_mean.blow_up) ens.empirical_mean.blow_up = k;
            break;
        }

        parallel_paths(n_paths, [&](std::size_t i) {
            if (alive_marker[i] != 0) {
                ens.controls[i][k] = kNaN;
                if (k < n) ens.states[i][k + 1] = kNaN;
                return;
            }
            const double x = x_cur[i];
            double u;
            bool gain_failed = false;
            try {
                u = control(t, x, m);
            } catch (const blow_up_error&) {
                gain_failed = true;
                u = kNaN;
            }
            if (gain_failed || !std::isfinite(u)) {
                // Gain divergence: the state at node k stays valid, nothing
                // past it does.
                ens.controls[i][k] = kNaN;
                alive_marker[i] = k + 1;
                ens.states[i].blow_up = k + 1;
                ens.controls[i].blow_up = k;
                if (k < n) ens.states[i][k + 1] = kNaN;
                x_cur[i] = kNaN;
                return;
            }
            ens.controls[i][k] = u;
            if (k == n) return; // terminal node: control recorded, no step

            const double bv = coeffs.b(t, x, m, u);
            const double sv = coeffs.sigma(t, x, m, u);
            if (!std::isfinite(bv) || !std::isfinite(sv)) {
                std::ostringstream os;
                os << "simulate_state: " << (!std::isfinite(bv) ? "b" : "sigma")
                   << " non-finite at (t=" << t << ", x=" << x << ", m=" << m << ", u=" << u
                   << ")";
                throw evaluation_error(os.str());
            }
            const double db = ens.increments(i, k, dt);
            const double x_next = x + bv * dt + sv * db;
            if (!std::isfinite(x_next) || std::abs(x_next) > kBlowUpThreshold) {
                alive_marker[i] = k + 1;
                ens.states[i].blow_up = k + 1;
                ens.controls[i].blow_up = k + 1;
                ens.states[i][k + 1] = kNaN;
                x_cur[i] = kNaN;
                return;
            }
            ens.states[i][k + 1] = x_next;
            x_cur[i] = x_next;
        });
    }

    return finish_ensemble(std::move(ens));
}

Ensemble simulate_state(const CoefficientSet& coeffs, const ControlLaw& control, double x0,
                        const TimeGrid& grid, std::size_t n_paths, uint64_t seed) {
    return simulate_state(coeffs, control, x0, grid, n_paths, seed, counter_increments(seed));
}

ScalarPath empirical_mean_function(const Ensemble& ensemble) {
    ScalarPath mean(ensemble.grid);
    std::vector<double> column(ensemble.n_paths);
    for (std::size_t k = 0; k < ensemble.grid.n_nodes(); ++k) {
        for (std::size_t i = 0; i < ensemble.n_paths; ++i) column[i] = ensemble.states[i][k];
        const FiniteMean fm = finite_mean(column);
        mean[k] = fm.mean;
        if (fm.count == 0 && !mean.blow_up) mean.blow_up = k;
    }
    return mean;
}

std::vector<double> terminal_cost_samples(const CoefficientSet& coeffs, const Ensemble& ensemble) {
    const std::size_t n = ensemble.grid.n_steps;
    const double dt = ensemble.grid.dt;
    const ScalarPath& m = ensemble.empirical_mean;
    std::vector<double> psi(ensemble.n_paths, kNaN);
    parallel_paths(ensemble.n_paths, [&](std::size_t i) {
        const ScalarPath& x = ensemble.states[i];
        const ScalarPath& u = ensemble.controls[i];
        if (x.blow_up) return; // no terminal sample for a blown path
        double integral = 0.0;
        double f_prev = coeffs.f(ensemble.grid.node(0), x[0], m[0], u[0]);
        for (std::size_t k = 1; k <= n; ++k) {
            const double f_k = coeffs.f(ensemble.grid.node(k), x[k], m[k], u[k]);
            integral += 0.5 * dt * (f_prev + f_k);
            f_prev = f_k;
        }
        psi[i] = integral + coeffs.h(x[n], m[n]);
    });
    return psi;
}

MartingalePanel simulate_martingales(const CoefficientSet& coeffs, const Ensemble& ensemble,
                                     const std::function<double(double)>& gamma, double theta) {
    const std::size_t n = ensemble.grid.n_steps;
    const std::size_t n_paths = ensemble.n_paths;
    const double dt = ensemble.grid.dt;

    MartingalePanel panel;
    panel.theta = theta;
    panel.ell.assign(n_paths, ScalarPath(ensemble.grid));
    panel.l_theta.assign(n_paths, ScalarPath(ensemble.grid));
    panel.v_theta.assign(n_paths, ScalarPath(ensemble.grid));

    std::vector<double> gamma_nodes(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        gamma_nodes[k] = gamma(ensemble.grid.node(k));
        if (!std::isfinite(theta * gamma_nodes[k])) {
            std::ostringstream os;
            os << "simulate_martingales: theta * gamma non-finite at t = "
               << ensemble.grid.node(k);
            throw evaluation_error(os.str());
        }
    }

    panel.psi_T = terminal_cost_samples(coeffs, ensemble);

    // v(0) anchor: log-sum-exp over the fully simulated paths.
    std::vector<double> exponents;
    exponents.reserve(n_paths);
    for (double psi : panel.psi_T) {
        if (std::isfinite(psi)) exponents.push_back(theta * psi);
    }
    panel.v0_hat = exponents.empty() ? kNaN : std::exp(log_mean_exp(exponents));

    parallel_paths(n_paths, [&](std::size_t i) {
        const ScalarPath& x = ensemble.states[i];
        const std::size_t valid = x.valid_nodes();
        ScalarPath& ell = panel.ell[i];
        ScalarPath& l = panel.l_theta[i];
        ScalarPath& v = panel.v_theta[i];
        if (x.blow_up) {
            ell.blow_up = l.blow_up = v.blow_up = x.blow_up;
        }
        double log_l = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (k >= valid) {
                ell[k] = l[k] = v[k] = kNaN;
                continue;
            }
            ell[k] = gamma_nodes[k] * x[k];
            l[k] = std::exp(log_l);
            v[k] = panel.v0_hat * l[k];
            if (k + 1 < valid) {
                const double db = ensemble.increments(i, k, dt);
                log_l += log_l_increment(theta, ell[k], db, dt);
            }
        }
    });
    return panel;
}

Ensemble simulate_lq_closed_loop(const LqParams& params, const RiccatiSolution& ricc,
                                 const TimeGrid& grid, std::size_t n_paths, uint64_t seed) {
    validate(params);
    if (params.mu == 0.0) {
        const double b = params.b;
        auto law = ControlLaw::feedback(
            [&ricc, b](double t, double x, double) { return -b * ricc.beta(t) * x; });
        return simulate_state(lq_coefficients(params), law, params.x0, grid, n_paths, seed);
    }

    // Mean-field case: the optimal control u = b(-beta x - mu alpha / L)
    // reads the path's own exponential martingale, so L rides along.
    if (n_paths < 1) throw std::invalid_argument("simulate_lq_closed_loop: n_paths must be >= 1");
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt;
    const double a = params.a;
    const double b = params.b;
    const double sig = params.sigma;
    const double mu = params.mu;
    const double theta = params.theta;

    std::vector<double> beta_nodes(n + 1, kNaN), alpha_nodes(n + 1, kNaN), gamma_nodes(n + 1, kNaN);
    for (std::size_t k = 0; k <= n; ++k) {
        try {
            beta_nodes[k] = ricc.beta(grid.node(k));
            alpha_nodes[k] = ricc.alpha(grid.node(k));
            gamma_nodes[k] = ricc.gamma(grid.node(k));
        } catch (const blow_up_error&) {
            // leave NaN; the step below flags the paths
        }
    }

    Ensemble ens;
    ens.grid = grid;
    ens.n_paths = n_paths;
    ens.master_seed = seed;
    ens.increments = counter_increments(seed);
    ens.states.assign(n_paths, ScalarPath(grid));
    ens.controls.assign(n_paths, ScalarPath(grid));
    ens.empirical_mean = ScalarPath(grid);

    std::vector<double> x_cur(n_paths, params.x0);
    std::vector<double> log_l(n_paths, 0.0);
    std::vector<std::size_t> alive_marker(n_paths, 0);
    for (std::size_t i = 0; i < n_paths; ++i) ens.states[i][0] = params.x0;

    for (std::size_t k = 0; k <= n; ++k) {
        const double m = alive_mean(x_cur);
        ens.empirical_mean[k] = m;
        if (!std::isfinite(m)) {
            for (std::size_t j = k; j <= n; ++j) ens.empirical_mean[j] = kNaN;
            if (!ens.empirical_mean.blow_up) ens.empirical_mean.blow_up = k;
            break;
        }
        parallel_paths(n_paths, [&](std::size_t i) {
            if (alive_marker[i] != 0) {
                ens.controls[i][k] = kNaN;
                if (k < n) ens.states[i][k + 1] = kNaN;
                return;
            }
            const double x = x_cur[i];
            const double l_val = std::exp(log_l[i]);
            const double u = b * (-beta_nodes[k] * x - mu * alpha_nodes[k] / l_val);
            if (!std::isfinite(u)) {
                ens.controls[i][k] = kNaN;
                alive_marker[i] = k + 1;
                ens.states[i].blow_up = k + 1;
                ens.controls[i].blow_up = k;
                if (k < n) ens.states[i][k + 1] = kNaN;
                x_cur[i] = kNaN;
                return;
            }
            ens.controls[i][k] = u;
            if (k == n) return;
            const double db = ens.increments(i, k, dt);
            const double x_next = x + (a * x + b * u) * dt + sig * db;
            const double ell = gamma_nodes[k] * x;
            if (!std::isfinite(x_next) || std::abs(x_next) > kBlowUpThreshold ||
                !std::isfinite(ell)) {
                alive_marker[i] = k + 1;
                ens.states[i].blow_up = k + 1;
                ens.controls[i].blow_up = k + 1;
                ens.states[i][k + 1] = kNaN;
                x_cur[i] = kNaN;
                return;
            }
            log_l[i] += log_l_increment(theta, ell, db, dt);
            ens.states[i][k + 1] = x_next;
            x_cur[i] = x_next;
        });
    }

    return finish_ensemble(std::move(ens));
}

ClosedLoopSummary simulate_closed_loop_summary(const LqParams& params,
                                               const RiccatiSolution& ricc, const TimeGrid& grid,
                                               std::size_t n_paths, uint64_t seed,
                                               std::size_t n_sample_paths) {
    validate(params);
    if (n_paths < 1) {
        throw std::invalid_argument("simulate_closed_loop_summary: n_paths must be >= 1");
    }
    const std::size_t n = grid.n_steps;
    const double dt = grid.dt;
    const double a = params.a;
    const double b = params.b;
    const double sig = params.sigma;
    const double mu = params.mu;
    const double theta = params.theta;

    std::vector<double> beta_nodes(n + 1, kNaN), alpha_nodes(n + 1, kNaN), gamma_nodes(n + 1, kNaN);
    for (std::size_t k = 0; k <= n; ++k) {
        try {
            beta_nodes[k] = ricc.beta(grid.node(k));
            alpha_nodes[k] = params.mu == 0.0 ? 1.0 : ricc.alpha(grid.node(k));
            gamma_nodes[k] = ricc.gamma(grid.node(k));
        } catch (const blow_up_error&) {
        }
    }

    ClosedLoopSummary out;
    out.grid = grid;
    out.n_paths = n_paths;
    out.mean = ScalarPath(grid);
    out.q05 = ScalarPath(grid);
    out.q50 = ScalarPath(grid);
    out.q95 = ScalarPath(grid);
    const std::size_t n_samples = std::min(n_sample_paths, n_paths);
    out.sample_paths.assign(n_samples, ScalarPath(grid));

    std::vector<double> x_cur(n_paths, params.x0);
    std::vector<double> log_l(n_paths, 0.0);
    std::vector<std::size_t> alive_marker(n_paths, 0);
    std::vector<double> scratch;
    scratch.reserve(n_paths);
    const IncrementFn increments = counter_increments(seed);

    std::size_t first_blow = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> blown_paths;
    std::atomic<std::size_t> blown_count{0};
    double max_abs = std::abs(params.x0);

    auto record_node = [&](std::size_t k) {
        out.mean[k] = alive_mean(x_cur);
        scratch.clear();
        for (double x : x_cur) {
            if (std::isfinite(x)) scratch.push_back(x);
        }
        if (scratch.empty()) {
            out.q05[k] = out.q50[k] = out.q95[k] = kNaN;
            return;
        }
        auto rank = [&](double p) {
            return static_cast<std::size_t>(
                std::llround(p * static_cast<double>(scratch.size() - 1)));
        };
        const std::size_t k05 = rank(0.05), k50 = rank(0.50), k95 = rank(0.95);
        std::nth_element(scratch.begin(), scratch.begin() + k05, scratch.end());
        out.q05[k] = scratch[k05];
        std::nth_element(scratch.begin() + k05, scratch.begin() + k50, scratch.end());
        out.q50[k] = scratch[k50];
        std::nth_element(scratch.begin() + k50, scratch.begin() + k95, scratch.end());
        out.q95[k] = scratch[k95];
        for (double x : scratch) max_abs = std::max(max_abs, std::abs(x));
    };

    for (std::size_t i = 0; i < n_samples; ++i) out.sample_paths[i][0] = params.x0;
    record_node(0);

    for (std::size_t k = 0; k < n; ++k) {
        const double m = out.mean[k];
        if (!std::isfinite(m)) {
            for (std::size_t j = k; j <= n; ++j) {
                out.mean[j] = out.q05[j] = out.q50[j] = out.q95[j] = kNaN;
            }
            if (!out.mean.blow_up) out.mean.blow_up = k;
            break;
        }
        parallel_paths(n_paths, [&](std::size_t i) {
            if (alive_marker[i] != 0) return;
            const double x = x_cur[i];
            double u;
            if (mu == 0.0) {
                u = b * (-beta_nodes[k] * x);
            } else {
                u = b * (-beta_nodes[k] * x - mu * alpha_nodes[k] / std::exp(log_l[i]));
            }
            const double db = increments(i, k, dt);
            const double x_next = x + (a * x + b * u) * dt + sig * db;
            const double ell = gamma_nodes[k] * x;
            if (!std::isfinite(u) || !std::isfinite(x_next) ||
                std::abs(x_next) > kBlowUpThreshold || (mu != 0.0 && !std::isfinite(ell))) {
                alive_marker[i] = k + 1;
                x_cur[i] = kNaN;
                blown_count.fetch_add(1, std::memory_order_relaxed);
                return;
            }
            if (mu != 0.0) log_l[i] += log_l_increment(theta, ell, db, dt);
            x_cur[i] = x_next;
        });
        if (blown_count.load(std::memory_order_relaxed) != blown_paths.size()) {
            for (std::size_t i = 0; i < n_paths; ++i) {
                if (alive_marker[i] == k + 1) {
                    blown_paths.push_back(i);
                    first_blow = std::min(first_blow, k + 1);
                }
            }
        }
        for (std::size_t i = 0; i < n_samples; ++i) {
            out.sample_paths[i][k + 1] = x_cur[i];
            if (alive_marker[i] != 0 && !out.sample_paths[i].blow_up) {
                out.sample_paths[i].blow_up = alive_marker[i];
            }
        }
        record_node(k + 1);
    }

    out.max_abs_state = max_abs;
    if (!blown_paths.empty()) {
        std::sort(blown_paths.begin(), blown_paths.end());
        out.blow_up = EnsembleBlowUp{first_blow, std::move(blown_paths)};
    }
    return out;
}

} // namespace rsmfc
