#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/model.hpp"
#include "mvsde/skeleton.hpp"

namespace mvsde {

/// Jump-intensity cost l(r) = r log r - r + 1 with l(0) = 1 (limit value);
/// convex, minimized at r = 1 with value 0.
inline double ell(double r) {
    if (r < 0.0) throw std::invalid_argument("ell: r must be >= 0");
    if (r == 0.0) return 1.0;
    return r * std::log(r) - r + 1.0;
}

struct ActionValue {
    double brownian_cost = 0.0;  // (1/2) int |h|^2 dt
    double jump_cost = 0.0;      // int int l(g) dnu dt
    double total() const { return brownian_cost + jump_cost; }
};

/// Exact quadrature of the piecewise-constant control cost.
inline ActionValue action_value(const Control& c, const MarkMeasure& nu) {
    c.validate();
    if (c.n_marks != static_cast<int>(nu.size()))
        throw std::invalid_argument("action_value: mark count mismatch");
    const double dt = c.dt();
    ActionValue a;
    for (int k = 0; k < c.cells; ++k) {
        double h2 = 0.0;
        for (int j = 0; j < c.noise_dim; ++j) h2 += c.h_at(k, j) * c.h_at(k, j);
        a.brownian_cost += 0.5 * h2 * dt;
        for (int i = 0; i < c.n_marks; ++i)
            a.jump_cost += dt * nu[static_cast<std::size_t>(i)].weight * ell(c.g_at(k, i));
    }
    return a;
}

inline double Control::membership_bound(const MarkMeasure& nu) const {
    const ActionValue a = action_value(*this, nu);
    return std::max(2.0 * a.brownian_cost, a.jump_cost);
}

/// Penalty relaxation of the endpoint constraint:
/// action(c) + mu_pen * |X_T(c) - y|^2.
inline double endpoint_objective(const Problem& p, const Vec& x0, const Vec& y, const Control& c,
                                 double mu_pen) {
    if (!p.domain().contains(y, kGeomTol))
        throw std::invalid_argument("endpoint_objective: y outside the closed domain");
    const SkeletonResult sk = solve_skeleton(p, x0, c);
    const double gap2 = norm_sq(sub(sk.path.terminal(), y));
    return action_value(c, p.marks()).total() + mu_pen * gap2;
}

struct MinimizeOptions {
    int cells = 64;                                      // control grid cells per horizon
    double max_dt = std::numeric_limits<double>::infinity();  // refine long horizons
    std::vector<double> penalty_schedule{10.0, 1e2, 1e3, 1e4};
    int max_iterations = 400;                            // per penalty round
    double fd_step = 1e-5;                               // central-difference step
    double step_init = 0.25;                             // initial line-search step
    double grad_tol = 1e-6;                              // sup-norm stop on the gradient
    double endpoint_gap_rel = 1e-3;                      // accept gap <= this * (1 + |y|)
    double t_tie_rel = 0.01;                             // smallest T within 1% of the min
    double member_rel_tol = 0.05;                        // level-set membership slack
    std::vector<double> start_radius_ladder;             // optional |x0| = r -> 0 probes
};

struct MinimizeResult {
    Control control;
    ActionValue action;
    GridPath path;
    double endpoint_gap = 0.0;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
};

inline int effective_cells(const MinimizeOptions& opts, double T) {
    int cells = opts.cells;
    if (std::isfinite(opts.max_dt) && opts.max_dt > 0.0)
        cells = std::max(cells, static_cast<int>(std::ceil(T / opts.max_dt)));
    return cells;
}

namespace detail {

/// Decision vector layout: h entries first, then log g entries (so g > 0 is
/// structural and the jump cost stays smooth).
struct ControlVars {
    int cells, noise_dim, n_marks;
    double T;
    std::vector<double> v;

    static ControlVars from(const Control& c) {
        ControlVars cv{c.cells, c.noise_dim, c.n_marks, c.T, {}};
        cv.v.reserve(c.h.size() + c.g.size());
        for (double x : c.h) cv.v.push_back(x);
        for (double x : c.g) cv.v.push_back(std::log(std::max(x, 1e-12)));
        return cv;
    }

    Control to_control() const {
        Control c = Control::zero(T, cells, noise_dim, n_marks);
        const std::size_t nh = c.h.size();
        for (std::size_t i = 0; i < nh; ++i) c.h[i] = v[i];
        for (std::size_t i = 0; i < c.g.size(); ++i) c.g[i] = std::exp(v[nh + i]);
        return c;
    }
};

}  // namespace detail

/// Central finite-difference gradient of endpoint_objective in the optimizer's
/// coordinates (h entries, then log g entries); the optimizer's own gradient.
inline std::vector<double> endpoint_objective_grad_fd(const Problem& p, const Vec& x0, const Vec& y,
                                                      const Control& c, double mu_pen,
                                                      double step = 1e-5) {
    detail::ControlVars vars = detail::ControlVars::from(c);
    std::vector<double> grad(vars.v.size());
    for (std::size_t i = 0; i < vars.v.size(); ++i) {
        detail::ControlVars vp = vars, vm = vars;
        vp.v[i] += step;
        vm.v[i] -= step;
        grad[i] = (endpoint_objective(p, x0, y, vp.to_control(), mu_pen) -
                   endpoint_objective(p, x0, y, vm.to_control(), mu_pen)) /
                  (2.0 * step);
    }
    return grad;
}

/// Minimum action to steer from x0 to y over the fixed horizon T: projected
/// gradient descent on (h, log g) against endpoint_objective, gradients by
/// central finite differences over the control coordinates, quadratic penalty
/// with geometric continuation. Deterministic for fixed options.
inline MinimizeResult minimize_action(const Problem& p, const Vec& x0, const Vec& y, double T,
                                      const MinimizeOptions& opts, std::optional<Control> init = {}) {
    if (!p.domain().contains(y, kGeomTol))
        throw std::invalid_argument("minimize_action: y outside the closed domain");
    if (init && std::abs(init->T - T) > 1e-12 * std::max(1.0, T))
        throw std::invalid_argument("minimize_action: initializer horizon does not match T");
    const int cells = effective_cells(opts, T);
    Control c0 = init ? *init
                      : Control::zero(T, cells, p.noise_dim(), static_cast<int>(p.marks().size()));
    if (init && init->cells != cells) c0 = init->resample(cells);
    detail::ControlVars vars = detail::ControlVars::from(c0);
    const std::size_t n = vars.v.size();

    auto objective = [&](const std::vector<double>& v, double mu) {
        detail::ControlVars cv = vars;
        cv.v = v;
        return endpoint_objective(p, x0, y, cv.to_control(), mu);
    };

    int total_iters = 0;
    double step = opts.step_init;
    for (double mu : opts.penalty_schedule) {
        double f = objective(vars.v, mu);
        for (int it = 0; it < opts.max_iterations; ++it) {
            ++total_iters;
            const std::vector<double> grad =
                endpoint_objective_grad_fd(p, x0, y, vars.to_control(), mu, opts.fd_step);
            double gmax = 0.0;
            for (double gi : grad) gmax = std::max(gmax, std::abs(gi));
            if (gmax <= opts.grad_tol * std::max(1.0, std::abs(f))) break;

            // backtracking line search (Armijo)
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt) {
                std::vector<double> trial = vars.v;
                for (std::size_t i = 0; i < n; ++i) trial[i] -= step * grad[i];
                const double ft = objective(trial, mu);
                double g2 = 0.0;
                for (double gi : grad) g2 += gi * gi;
                if (ft <= f - 1e-4 * step * g2) {
                    vars.v = std::move(trial);
                    f = ft;
                    step = std::min(step * 1.5, 1e3);
                    moved = true;
                    break;
                }
                step *= 0.5;
                if (step < 1e-14) break;
            }
            if (!moved) break;
        }
    }

    MinimizeResult res;
    res.control = vars.to_control();
    res.action = action_value(res.control, p.marks());
    SkeletonResult sk = solve_skeleton(p, x0, res.control);
    res.endpoint_gap = dist(sk.path.terminal(), y);
    res.path = std::move(sk.path);
    res.iterations = total_iters;
    res.converged = res.endpoint_gap <= opts.endpoint_gap_rel * (1.0 + norm(y));
    res.objective = res.action.total() +
                    opts.penalty_schedule.back() * res.endpoint_gap * res.endpoint_gap;
    return res;
}

struct QuasiPotentialResult {
    Vec y;
    double value = std::numeric_limits<double>::infinity();
    bool finite = false;
    double t_star = 0.0;
    std::optional<Control> control;
    double endpoint_gap = std::numeric_limits<double>::infinity();
    int total_iterations = 0;
    std::vector<std::pair<double, double>> per_horizon;       // (T, action or inf)
    std::vector<std::pair<double, double>> start_ladder;      // (|x0|, value) when requested
};

/// V(y): infimal steering action from the origin over the horizon grid, warm
/// starting each horizon from the previous one (the shorter plan is replayed
/// after an initial wait, which is free when 0 is an equilibrium). Returns the
/// +inf sentinel when no horizon reaches y within the endpoint tolerance.
inline QuasiPotentialResult quasipotential(const Problem& p, const Vec& y,
                                           const std::vector<double>& T_grid,
                                           const MinimizeOptions& opts, Vec x0 = {}) {
    if (T_grid.empty()) throw std::invalid_argument("quasipotential: empty T_grid");
    if (x0.empty()) x0 = zeros(static_cast<std::size_t>(p.dim()));

    QuasiPotentialResult out;
    out.y = y;
    std::optional<Control> warm;
    double prev_T = 0.0;

    for (double T : T_grid) {
        std::optional<Control> init;
        if (warm && T > prev_T) {
            // prepend an idle window [0, T - prev_T), replay the previous plan after it
            const int cells = effective_cells(opts, T);
            Control c = Control::zero(T, cells, warm->noise_dim, warm->n_marks);
            const double shift = T - prev_T;
            for (int k = 0; k < cells; ++k) {
                const double t = (k + 0.5) * c.dt();
                if (t < shift) continue;
                const int src = warm->cell_of(t - shift);
                for (int j = 0; j < c.noise_dim; ++j) c.h_at(k, j) = warm->h_at(src, j);
                for (int i = 0; i < c.n_marks; ++i) c.g_at(k, i) = warm->g_at(src, i);
            }
            init = std::move(c);
        }
        MinimizeResult r = minimize_action(p, x0, y, T, opts, init);
        out.total_iterations += r.iterations;
        out.per_horizon.emplace_back(
            T, r.converged ? r.action.total() : std::numeric_limits<double>::infinity());
        if (r.converged) {
            warm = r.control;
            prev_T = T;
            if (r.action.total() < out.value) {
                out.value = r.action.total();
                out.control = r.control;
                out.endpoint_gap = r.endpoint_gap;
                out.finite = true;
            }
        }
    }
    if (out.finite) {
        // smallest horizon within the tie tolerance of the minimum
        for (const auto& [T, a] : out.per_horizon) {
            if (a <= out.value * (1.0 + opts.t_tie_rel)) {
                out.t_star = T;
                break;
            }
        }
    }
    if (!opts.start_radius_ladder.empty() && norm(y) > 0.0) {
        for (double rr : opts.start_radius_ladder) {
            Vec xs = scale(rr / norm(y), y);
            xs = p.domain().project(xs);
            QuasiPotentialResult sub = quasipotential(
                p, y, T_grid,
                [&] {
                    MinimizeOptions o = opts;
                    o.start_radius_ladder.clear();
                    return o;
                }(),
                xs);
            out.start_ladder.emplace_back(rr, sub.finite
                                                  ? sub.value
                                                  : std::numeric_limits<double>::infinity());
        }
    }
    return out;
}

struct LevelSetEntry {
    Vec y;
    double value = 0.0;
    bool member = false;
};

struct LevelSetResult {
    double s = 0.0;
    std::vector<LevelSetEntry> entries;
    double max_member_radius = 0.0;
    bool bounded = false;  // no member beyond max_member_radius while the grid extends further
};

/// Evaluates the quasi-potential on a grid of targets, marking the sublevel
/// members V(y) <= s (with a small relative slack so grid-induced upward bias
/// does not evict boundary members). The boundedness flag is the desk-scale
/// compactness surrogate: membership must die out before the grid does.
inline LevelSetResult level_set(const Problem& p, double s, const std::vector<Vec>& y_grid,
                                const std::vector<double>& T_grid, const MinimizeOptions& opts) {
    if (s < 0.0) throw std::invalid_argument("level_set: s must be >= 0");
    LevelSetResult out;
    out.s = s;
    double max_grid_radius = 0.0;
    for (const Vec& y : y_grid) {
        QuasiPotentialResult q = quasipotential(p, y, T_grid, opts);
        LevelSetEntry e;
        e.y = y;
        e.value = q.finite ? q.value : std::numeric_limits<double>::infinity();
        e.member = q.finite && q.value <= s * (1.0 + opts.member_rel_tol) + kAlgebraicTol;
        if (e.member) out.max_member_radius = std::max(out.max_member_radius, norm(y));
        max_grid_radius = std::max(max_grid_radius, norm(y));
        out.entries.push_back(std::move(e));
    }
    out.bounded = out.max_member_radius < max_grid_radius - kAlgebraicTol ||
                  out.entries.empty();
    return out;
}

}  // namespace mvsde
