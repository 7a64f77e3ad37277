#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mvsde/domain.hpp"
#include "mvsde/model.hpp"

namespace mvsde {

/// Piecewise-constant control pair on a uniform grid: h steers the Brownian
/// direction (one l-vector per cell), g >= 0 multiplies the jump intensity
/// (one entry per cell and mark, 1 = untilted).
struct Control {
    double T = 0.0;
    int cells = 0;
    int noise_dim = 0;
    int n_marks = 0;
    std::vector<double> h;  // cells x noise_dim, row-major
    std::vector<double> g;  // cells x n_marks, row-major

    static Control zero(double T, int cells, int noise_dim, int n_marks) {
        if (!(T > 0.0) || cells < 1) throw std::invalid_argument("Control: need T > 0, cells >= 1");
        Control c;
        c.T = T;
        c.cells = cells;
        c.noise_dim = noise_dim;
        c.n_marks = n_marks;
        c.h.assign(static_cast<std::size_t>(cells) * noise_dim, 0.0);
        c.g.assign(static_cast<std::size_t>(cells) * n_marks, 1.0);
        return c;
    }

    double dt() const { return T / cells; }

    double& h_at(int k, int j) { return h[static_cast<std::size_t>(k) * noise_dim + j]; }
    double h_at(int k, int j) const { return h[static_cast<std::size_t>(k) * noise_dim + j]; }
    double& g_at(int k, int i) { return g[static_cast<std::size_t>(k) * n_marks + i]; }
    double g_at(int k, int i) const { return g[static_cast<std::size_t>(k) * n_marks + i]; }

    int cell_of(double t) const {
        int k = static_cast<int>(t / dt());
        return std::min(std::max(k, 0), cells - 1);
    }

    void validate() const {
        for (double v : g)
            if (!(v >= 0.0)) throw std::invalid_argument("Control: g entries must be >= 0");
    }

    /// Same control re-sampled onto a grid with `cells2` cells (cell-center
    /// lookup); the horizon must match.
    Control resample(int cells2) const {
        Control c = zero(T, cells2, noise_dim, n_marks);
        for (int k = 0; k < cells2; ++k) {
            const double t = (k + 0.5) * c.dt();
            const int src = cell_of(t);
            for (int j = 0; j < noise_dim; ++j) c.h_at(k, j) = h_at(src, j);
            for (int i = 0; i < n_marks; ++i) c.g_at(k, i) = g_at(src, i);
        }
        return c;
    }

    /// Smallest N with membership in the cost-bounded control class:
    /// max(int |h|^2 dt, int int l(g) dnu dt).
    double membership_bound(const MarkMeasure& nu) const;
};

namespace detail {

/// Controlled drift of one cell: b(x) + sigma(x) h_k + sum_i w_i f(x,u_i)(g_{k,i}-1).
inline Vec skeleton_cell_drift(const Problem& p, const Vec& x, const Control& c, int k) {
    Vec v = p.drift(x);
    if (c.noise_dim > 0) {
        Vec hk(static_cast<std::size_t>(c.noise_dim));
        for (int j = 0; j < c.noise_dim; ++j) hk[static_cast<std::size_t>(j)] = c.h_at(k, j);
        axpy(1.0, p.diffusion(x).apply(hk), v);
    }
    const auto& nu = p.marks();
    for (std::size_t i = 0; i < nu.size(); ++i) {
        const double gi = c.g_at(k, static_cast<int>(i));
        if (gi != 1.0) axpy(nu[i].weight * (gi - 1.0), p.jump(x, nu[i].value), v);
    }
    return v;
}

}  // namespace detail

struct SkeletonResult {
    GridPath path;
    ForcePath force;
};

/// Controlled deterministic dynamics, explicit Euler in the drift and backward
/// (resolvent) in the operator: Y = X_k + drift*dt, X_{k+1} = J_dt(Y),
/// dK_k = Y - X_{k+1}. States stay in the closed domain by construction.
inline SkeletonResult solve_skeleton(const Problem& p, const Vec& x0, const Control& c) {
    check_dim(x0, static_cast<std::size_t>(p.dim()), "solve_skeleton x0");
    if (!p.domain().contains(x0, kGeomTol))
        throw std::invalid_argument("solve_skeleton: x0 outside the closed domain");
    if (c.noise_dim != p.noise_dim() || c.n_marks != static_cast<int>(p.marks().size()))
        throw std::invalid_argument("solve_skeleton: control shape mismatch");
    c.validate();

    const double dt = c.dt();
    GridPath path;
    path.times = uniform_grid(c.T, c.cells);
    path.states.reserve(path.times.size());
    path.states.push_back(p.domain().project(x0));
    std::vector<Vec> incs;
    incs.reserve(static_cast<std::size_t>(c.cells));

    for (int k = 0; k < c.cells; ++k) {
        const Vec& x = path.states.back();
        Vec y = x;
        axpy(dt, detail::skeleton_cell_drift(p, x, c, k), y);
        Vec xn = p.op().resolvent(dt, y);
        if (!all_finite(xn))
            throw std::runtime_error("solve_skeleton: non-finite state at step " + std::to_string(k));
        incs.push_back(sub(std::move(y), xn));
        path.states.push_back(std::move(xn));
    }
    ForcePath force = ForcePath::from_increments(path.times, std::move(incs));
    return {std::move(path), std::move(force)};
}

/// Unperturbed flow: the skeleton with zero controls (same code path).
inline GridPath solve_unperturbed(const Problem& p, const Vec& x0, double T, int cells) {
    return solve_skeleton(p, x0, Control::zero(T, cells, p.noise_dim(),
                                               static_cast<int>(p.marks().size())))
        .path;
}

/// Cross-check integrator: replaces the resolvent step by explicit Euler on
/// the Yosida approximation, dX = (-A^eta(X) + controlled drift) dt. Converges
/// to solve_skeleton's path as eta -> 0 at fixed dt <= eta.
inline GridPath solve_skeleton_yosida(const Problem& p, double eta, const Vec& x0, const Control& c) {
    if (!(eta > 0.0)) throw std::invalid_argument("solve_skeleton_yosida: eta must be positive");
    const double dt = c.dt();
    if (dt > eta)
        throw std::invalid_argument("solve_skeleton_yosida: grid too coarse for chosen eta (dt > eta)");
    if (!p.domain().contains(x0, kGeomTol))
        throw std::invalid_argument("solve_skeleton_yosida: x0 outside the closed domain");
    c.validate();

    GridPath path;
    path.times = uniform_grid(c.T, c.cells);
    path.states.reserve(path.times.size());
    path.states.push_back(x0);
    for (int k = 0; k < c.cells; ++k) {
        const Vec& x = path.states.back();
        Vec v = detail::skeleton_cell_drift(p, x, c, k);
        axpy(-1.0, p.op().yosida(eta, x), v);
        Vec xn = x;
        axpy(dt, v, xn);
        if (!all_finite(xn))
            throw std::runtime_error("solve_skeleton_yosida: non-finite state at step " +
                                     std::to_string(k));
        path.states.push_back(std::move(xn));
    }
    return path;
}

}  // namespace mvsde
