#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/linalg.hpp"

namespace mvsde {

// ---------------------------------------------------------------------------
// Convex domains
// ---------------------------------------------------------------------------

enum class DomainKind { whole_space, halfline_nonneg, box, ball, halfspace_intersection };

inline const char* to_string(DomainKind k) {
    switch (k) {
        case DomainKind::whole_space: return "whole_space";
        case DomainKind::halfline_nonneg: return "halfline_nonneg";
        case DomainKind::box: return "box";
        case DomainKind::ball: return "ball";
        case DomainKind::halfspace_intersection: return "halfspace_intersection";
    }
    return "?";
}

/// One constraint <normal, x> <= offset.
struct Halfspace {
    Vec normal;
    double offset = 0.0;
};

/// Closed convex set with non-empty interior and an exact (or Dykstra-iterated)
/// Euclidean projection.
class ConvexDomain {
public:
    static ConvexDomain whole_space(int d) {
        ConvexDomain c;
        c.kind_ = DomainKind::whole_space;
        c.dim_ = d;
        return c;
    }

    static ConvexDomain halfline_nonneg() {
        ConvexDomain c;
        c.kind_ = DomainKind::halfline_nonneg;
        c.dim_ = 1;
        return c;
    }

    static ConvexDomain box(Vec lo, Vec hi) {
        if (lo.size() != hi.size() || lo.empty())
            throw std::invalid_argument("box: lo/hi size mismatch");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] < hi[i])) throw std::invalid_argument("box: requires lo < hi componentwise");
        ConvexDomain c;
        c.kind_ = DomainKind::box;
        c.dim_ = static_cast<int>(lo.size());
        c.lo_ = std::move(lo);
        c.hi_ = std::move(hi);
        return c;
    }

    static ConvexDomain ball(Vec center, double radius) {
        if (!(radius > 0.0)) throw std::invalid_argument("ball: radius must be positive");
        ConvexDomain c;
        c.kind_ = DomainKind::ball;
        c.dim_ = static_cast<int>(center.size());
        c.center_ = std::move(center);
        c.radius_ = radius;
        return c;
    }

    static ConvexDomain halfspace_intersection(std::vector<Halfspace> hs, int d) {
        if (hs.empty()) throw std::invalid_argument("halfspace_intersection: no constraints");
        for (auto& h : hs) {
            check_dim(h.normal, static_cast<std::size_t>(d), "halfspace normal");
            const double n = norm(h.normal);
            if (!(n > 0.0)) throw std::invalid_argument("halfspace_intersection: zero normal");
        }
        ConvexDomain c;
        c.kind_ = DomainKind::halfspace_intersection;
        c.dim_ = d;
        c.halfspaces_ = std::move(hs);
        c.check_feasible();
        return c;
    }

    DomainKind kind() const { return kind_; }
    int dim() const { return dim_; }
    const Vec& box_lo() const { return lo_; }
    const Vec& box_hi() const { return hi_; }
    const Vec& ball_center() const { return center_; }
    double ball_radius() const { return radius_; }
    const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }

    /// Euclidean projection onto the set.
    Vec project(const Vec& x) const {
        check_dim(x, static_cast<std::size_t>(dim_), "project");
        switch (kind_) {
            case DomainKind::whole_space:
                return x;
            case DomainKind::halfline_nonneg:
                return Vec{std::max(x[0], 0.0)};
            case DomainKind::box: {
                Vec y = x;
                for (int i = 0; i < dim_; ++i) y[i] = std::clamp(y[i], lo_[i], hi_[i]);
                return y;
            }
            case DomainKind::ball: {
                Vec v = sub(x, center_);
                const double n = norm(v);
                if (n <= radius_) return x;
                return add(scale(radius_ / n, std::move(v)), center_);
            }
            case DomainKind::halfspace_intersection:
                return project_dykstra(x);
        }
        throw std::logic_error("project: bad kind");
    }

    double distance(const Vec& x) const { return dist(x, project(x)); }

    /// True iff x lies within Euclidean distance tol of the set.
    bool contains(const Vec& x, double tol = 0.0) const {
        if (tol < 0.0) throw std::invalid_argument("contains: tol must be >= 0");
        return distance(x) <= tol + kAlgebraicTol;
    }

    /// True iff the ball of radius margin around the origin lies inside the set.
    bool origin_interior(double margin = kGeomTol) const {
        switch (kind_) {
            case DomainKind::whole_space:
                return true;
            case DomainKind::halfline_nonneg:
                return false;  // 0 is a boundary point of [0, inf)
            case DomainKind::box: {
                for (int i = 0; i < dim_; ++i)
                    if (!(lo_[i] < -margin && hi_[i] > margin)) return false;
                return true;
            }
            case DomainKind::ball:
                return norm(center_) + margin < radius_;
            case DomainKind::halfspace_intersection: {
                for (const auto& h : halfspaces_)
                    if (!(h.offset > margin * norm(h.normal))) return false;
                return true;
            }
        }
        return false;
    }

private:
    ConvexDomain() = default;

    Vec project_dykstra(const Vec& x) const {
        // Dykstra's cyclic projections with per-constraint corrections.
        const std::size_t m = halfspaces_.size();
        Vec p = x;
        std::vector<Vec> corr(m, zeros(static_cast<std::size_t>(dim_)));
        const int max_cycles = 20000;
        for (int cycle = 0; cycle < max_cycles; ++cycle) {
            double moved = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                Vec u = add(p, corr[i]);
                Vec q = project_halfspace(halfspaces_[i], u);
                corr[i] = sub(std::move(u), q);
                moved = std::max(moved, dist(p, q));
                p = std::move(q);
            }
            if (moved < 1e-13 && max_violation(p) < 1e-12) return p;
        }
        if (max_violation(p) < 1e-8) return p;
        throw std::runtime_error("project: Dykstra iteration did not converge (residual " +
                                 std::to_string(max_violation(p)) + ")");
    }

    static Vec project_halfspace(const Halfspace& h, const Vec& u) {
        const double viol = dot(h.normal, u) - h.offset;
        if (viol <= 0.0) return u;
        Vec y = u;
        axpy(-viol / norm_sq(h.normal), h.normal, y);
        return y;
    }

    double max_violation(const Vec& p) const {
        double v = 0.0;
        for (const auto& h : halfspaces_)
            v = std::max(v, (dot(h.normal, p) - h.offset) / norm(h.normal));
        return v;
    }

    void check_feasible() const {
        // Alternating projections from the origin; a stalled positive residual
        // flags an infeasible system. Interior-point existence is checked on the
        // polytope shrunk by a small margin.
        auto residual_after_projection = [&](double shrink) {
            Vec p = zeros(static_cast<std::size_t>(dim_));
            for (int cycle = 0; cycle < 5000; ++cycle) {
                for (const auto& h : halfspaces_) {
                    Halfspace hs{h.normal, h.offset - shrink * norm(h.normal)};
                    p = project_halfspace(hs, p);
                }
            }
            double v = 0.0;
            for (const auto& h : halfspaces_)
                v = std::max(v, (dot(h.normal, p) - (h.offset - shrink * norm(h.normal))) / norm(h.normal));
            return v;
        };
        if (residual_after_projection(0.0) > 1e-7)
            throw std::invalid_argument("halfspace_intersection: empty domain");
        if (residual_after_projection(1e-6) > 1e-7)
            throw std::invalid_argument("halfspace_intersection: domain has empty interior");
    }

    DomainKind kind_ = DomainKind::whole_space;
    int dim_ = 0;
    Vec lo_, hi_;
    Vec center_;
    double radius_ = 0.0;
    std::vector<Halfspace> halfspaces_;
};

// ---------------------------------------------------------------------------
// Convex potentials (for subdifferential operators with computable prox maps)
// ---------------------------------------------------------------------------

enum class PotentialKind { quadratic, abs, power4 };

inline const char* to_string(PotentialKind k) {
    switch (k) {
        case PotentialKind::quadratic: return "quadratic";
        case PotentialKind::abs: return "abs";
        case PotentialKind::power4: return "power4";
    }
    return "?";
}

/// Preset convex potential phi with value and proximal map
/// prox_eta(x) = argmin_z |z-x|^2/(2 eta) + phi(z).
struct ConvexPotential {
    PotentialKind kind = PotentialKind::quadratic;
    double scale = 1.0;  // phi = scale * base potential

    double value(const Vec& z) const {
        switch (kind) {
            case PotentialKind::quadratic:
                return 0.5 * scale * norm_sq(z);
            case PotentialKind::abs: {
                double s = 0.0;
                for (double v : z) s += std::abs(v);
                return scale * s;
            }
            case PotentialKind::power4: {
                const double n2 = norm_sq(z);
                return 0.25 * scale * n2 * n2;
            }
        }
        throw std::logic_error("potential: bad kind");
    }

    Vec prox(double eta, const Vec& x) const {
        switch (kind) {
            case PotentialKind::quadratic:
                return scale_vec(1.0 / (1.0 + eta * scale), x);
            case PotentialKind::abs: {
                Vec z = x;
                const double t = eta * scale;
                for (double& v : z) v = (v > t) ? v - t : (v < -t ? v + t : 0.0);
                return z;
            }
            case PotentialKind::power4:
                return prox_power4(eta, x);
        }
        throw std::logic_error("potential: bad kind");
    }

private:
    static Vec scale_vec(double c, Vec v) {
        for (double& e : v) e *= c;
        return v;
    }

    Vec prox_power4(double eta, const Vec& x) const {
        // Radial: z = t*x with t + c t^3 = 1, c = eta*scale*|x|^2. Safeguarded
        // Newton on [0,1]; the root is unique since the cubic is increasing.
        const double c = eta * scale * norm_sq(x);
        if (!std::isfinite(c))
            throw std::runtime_error("prox: inner solve failed, non-finite curvature");
        if (c == 0.0) return x;
        double t = 1.0 / (1.0 + c);  // good initial guess, exact as c -> 0 or inf
        double lo = 0.0, hi = 1.0;
        const int budget = 60;
        for (int it = 0; it < budget; ++it) {
            const double f = t + c * t * t * t - 1.0;
            if (std::abs(f) < 1e-14) return scale_vec(t, x);
            (f > 0.0 ? hi : lo) = t;
            const double df = 1.0 + 3.0 * c * t * t;
            double step = t - f / df;
            t = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
        }
        const double res = std::abs(t + c * t * t * t - 1.0);
        if (res < 1e-9) return scale_vec(t, x);
        throw std::runtime_error("prox: inner solver exceeded iteration budget, residual " +
                                 std::to_string(res));
    }
};

// ---------------------------------------------------------------------------
// Maximal monotone operators
// ---------------------------------------------------------------------------

enum class OpKind { zero, subdiff_indicator, subdiff_convex };

inline const char* to_string(OpKind k) {
    switch (k) {
        case OpKind::zero: return "zero";
        case OpKind::subdiff_indicator: return "subdiff_indicator";
        case OpKind::subdiff_convex: return "subdiff_convex";
    }
    return "?";
}

/// Maximal monotone operator from a preset catalog: the zero map, the
/// subdifferential of a convex-set indicator (resolvent = projection), or the
/// subdifferential of a preset convex potential (resolvent = prox).
class MonotoneOp {
public:
    static MonotoneOp zero(int d) {
        return MonotoneOp(OpKind::zero, ConvexDomain::whole_space(d), {});
    }

    static MonotoneOp indicator(ConvexDomain dom) {
        return MonotoneOp(OpKind::subdiff_indicator, std::move(dom), {});
    }

    static MonotoneOp convex(ConvexPotential pot, int d) {
        return MonotoneOp(OpKind::subdiff_convex, ConvexDomain::whole_space(d), pot);
    }

    OpKind kind() const { return kind_; }
    int dim() const { return domain_.dim(); }

    /// Closure of the operator's effective domain; the whole space except for
    /// indicator subdifferentials.
    const ConvexDomain& domain() const { return domain_; }

    const ConvexPotential& potential() const { return potential_; }

    /// J_eta(x), the unique z with z + eta*A(z) containing x. Non-expansive.
    Vec resolvent(double eta, const Vec& x) const {
        if (!(eta > 0.0)) throw std::invalid_argument("resolvent: eta must be positive");
        check_dim(x, static_cast<std::size_t>(dim()), "resolvent");
        switch (kind_) {
            case OpKind::zero: return x;
            case OpKind::subdiff_indicator: return domain_.project(x);
            case OpKind::subdiff_convex: return potential_.prox(eta, x);
        }
        throw std::logic_error("resolvent: bad kind");
    }

    /// Yosida approximation A^eta(x) = (x - J_eta(x)) / eta.
    Vec yosida(double eta, const Vec& x) const {
        Vec j = resolvent(eta, x);
        Vec y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = (y[i] - j[i]) / eta;
        return y;
    }

    /// A graph point: (J_eta(z), (z - J_eta(z))/eta) lies in Gr(A) exactly.
    std::pair<Vec, Vec> graph_point(const Vec& z, double eta) const {
        Vec j = resolvent(eta, z);
        Vec y = z;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = (y[i] - j[i]) / eta;
        return {std::move(j), std::move(y)};
    }

private:
    MonotoneOp(OpKind k, ConvexDomain dom, ConvexPotential pot)
        : kind_(k), domain_(std::move(dom)), potential_(pot) {}

    OpKind kind_;
    ConvexDomain domain_;
    ConvexPotential potential_;
};

/// <x1-x2, A^eta(x1)-A^eta(x2)>; nonnegative for every maximal monotone preset.
inline double monotone_gap(const MonotoneOp& op, const Vec& x1, const Vec& x2, double eta) {
    return dot(sub(x1, x2), sub(op.yosida(eta, x1), op.yosida(eta, x2)));
}

// ---------------------------------------------------------------------------
// Grid paths and constraint-force paths
// ---------------------------------------------------------------------------

struct JumpRecord {
    double time = 0.0;
    int mark = 0;
    Vec jump;  // the state displacement applied
};

/// Cadlag path sampled on a time grid t_0 = 0 < ... < t_m = T; states are the
/// right limits at the knots.
struct GridPath {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<JumpRecord> jump_log;

    int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().size()); }
    double horizon() const { return times.empty() ? 0.0 : times.back(); }
    std::size_t cells() const { return times.size() - 1; }

    /// Cadlag evaluation: the state at the last knot <= t.
    const Vec& state_at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t idx = (it == times.begin()) ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
        return states[idx];
    }

    const Vec& terminal() const { return states.back(); }
};

/// Bounded-variation constraint force on the same grid as its companion path;
/// increment k covers the cell (t_k, t_{k+1}] and acts on the state at t_{k+1}.
struct ForcePath {
    std::vector<double> times;
    std::vector<Vec> increments;
    std::vector<double> cum_variation;  // per knot, starts at 0

    double total_variation() const { return cum_variation.empty() ? 0.0 : cum_variation.back(); }

    static ForcePath from_increments(std::vector<double> times, std::vector<Vec> incs) {
        ForcePath f;
        f.times = std::move(times);
        f.increments = std::move(incs);
        f.cum_variation.resize(f.times.size(), 0.0);
        for (std::size_t k = 0; k < f.increments.size(); ++k)
            f.cum_variation[k + 1] = f.cum_variation[k] + norm(f.increments[k]);
        return f;
    }
};

inline double total_variation(const ForcePath& k) { return k.total_variation(); }

/// Discrete variational-inequality sum  sum_k <X_{t_{k+1}} - x, dK_k - y dt_k>
/// for a graph pair (x, y) in Gr(A). Nonnegative (to rounding) when K was
/// produced by a resolvent step, since dK_k/dt_k lies in A(X_{t_{k+1}}).
inline double variational_gap(const GridPath& path, const ForcePath& force, const Vec& gx, const Vec& gy) {
    if (path.times.size() != force.times.size())
        throw std::invalid_argument("variational_gap: grid mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < force.increments.size(); ++k) {
        const double dt = path.times[k + 1] - path.times[k];
        const Vec& x = path.states[k + 1];
        for (std::size_t i = 0; i < gx.size(); ++i)
            s += (x[i] - gx[i]) * (force.increments[k][i] - gy[i] * dt);
    }
    return s;
}

/// Uniform grid with times[k] = T*k/m (exact at both ends).
inline std::vector<double> uniform_grid(double T, int m) {
    if (!(T > 0.0) || m < 1) throw std::invalid_argument("uniform_grid: need T > 0 and m >= 1");
    std::vector<double> t(static_cast<std::size_t>(m) + 1);
    for (int k = 0; k <= m; ++k) t[static_cast<std::size_t>(k)] = T * k / m;
    return t;
}

// ---------------------------------------------------------------------------
// Path distances
// ---------------------------------------------------------------------------

enum class PathMetric { uniform, j1_grid };

namespace detail {

inline std::vector<double> merge_knots(const GridPath& x, const GridPath& y) {
    std::vector<double> t;
    t.reserve(x.times.size() + y.times.size());
    std::merge(x.times.begin(), x.times.end(), y.times.begin(), y.times.end(), std::back_inserter(t));
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

inline double sup_on_knots(const GridPath& x, const GridPath& y, const std::vector<double>& knots) {
    double s = 0.0;
    for (double t : knots) s = std::max(s, dist(x.state_at(t), y.state_at(t)));
    return s;
}

// Pareto frontier of (sup-distance, log-slope) pairs at one matching state.
struct FrontierPoint {
    double d;   // running max of |X - Y о lambda| at visited knots
    double s;   // running max of |log segment slope|
};

inline void frontier_insert(std::vector<FrontierPoint>& fr, FrontierPoint p) {
    for (const auto& q : fr)
        if (q.d <= p.d + 1e-15 && q.s <= p.s + 1e-15) return;  // dominated
    fr.erase(std::remove_if(fr.begin(), fr.end(),
                            [&](const FrontierPoint& q) { return p.d <= q.d && p.s <= q.s; }),
             fr.end());
    if (fr.size() >= 24) {  // keep the candidates with the smallest combined value
        std::sort(fr.begin(), fr.end(),
                  [](const FrontierPoint& a, const FrontierPoint& b) { return a.d + a.s < b.d + b.s; });
        fr.resize(16);
    }
    fr.push_back(p);
}

}  // namespace detail

/// Distance between two cadlag grid paths over the same horizon.
///
/// uniform: sup over the merged knot set of |X_t - Y_t|; an upper bound for the
/// Skorokhod metric.
///
/// j1_grid: minimizes sup_t |X_t - Y_{lambda(t)}| + sup |log slope(lambda)| over
/// piecewise-linear time changes whose breakpoints live on the merged knot set,
/// by a banded dynamic program over knot matchings with a Pareto frontier per
/// state (the two sups cannot be folded into one running cost). The search
/// includes the identity, so the result never exceeds the uniform distance.
inline double path_distance(const GridPath& x, const GridPath& y, PathMetric mode) {
    if (x.times.empty() || y.times.empty()) throw std::invalid_argument("path_distance: empty path");
    if (std::abs(x.horizon() - y.horizon()) > 1e-12 * std::max(1.0, x.horizon()))
        throw std::invalid_argument("path_distance: differing horizons");
    if (x.dim() != y.dim()) throw std::invalid_argument("path_distance: dimension mismatch");

    const std::vector<double> knots = detail::merge_knots(x, y);
    const double uniform = detail::sup_on_knots(x, y, knots);
    if (mode == PathMetric::uniform) return uniform;

    const int M = static_cast<int>(knots.size()) - 1;
    if (M < 1) return uniform;
    if (M > 1500)
        throw std::invalid_argument("path_distance: j1_grid supports merged grids up to 1500 cells");

    constexpr int kBand = 24;   // |i - j| bound on matched knot indices
    constexpr int kStep = 6;    // max knots skipped per linear segment

    // dp[i][j-i+kBand] = frontier of (max dist, max |log slope|) over matchings
    // ending with lambda(knots[i]) = knots[j].
    std::vector<std::vector<std::vector<detail::FrontierPoint>>> dp(
        static_cast<std::size_t>(M) + 1,
        std::vector<std::vector<detail::FrontierPoint>>(2 * kBand + 1));
    dp[0][kBand].push_back({dist(x.states.front(), y.states.front()), 0.0});

    for (int i = 0; i < M; ++i) {
        for (int off = -kBand; off <= kBand; ++off) {
            const int j = i + off;
            if (j < 0 || j > M) continue;
            auto& fr = dp[static_cast<std::size_t>(i)][static_cast<std::size_t>(off + kBand)];
            if (fr.empty()) continue;
            for (int a = 1; a <= kStep && i + a <= M; ++a) {
                for (int b = 1; b <= kStep && j + b <= M; ++b) {
                    const int i2 = i + a, j2 = j + b;
                    if (std::abs(i2 - j2) > kBand) continue;
                    if ((i2 == M) != (j2 == M)) continue;  // endpoints must pair up
                    const double dt = knots[static_cast<std::size_t>(i2)] - knots[static_cast<std::size_t>(i)];
                    const double ds = knots[static_cast<std::size_t>(j2)] - knots[static_cast<std::size_t>(j)];
                    const double pen = std::abs(std::log(ds / dt));
                    // sup distance across the segment's interior knots and its end
                    double dseg = 0.0;
                    for (int q = i + 1; q <= i2; ++q) {
                        const double t = knots[static_cast<std::size_t>(q)];
                        const double lam = knots[static_cast<std::size_t>(j)] +
                                           ds / dt * (t - knots[static_cast<std::size_t>(i)]);
                        dseg = std::max(dseg, dist(x.state_at(t), y.state_at(lam)));
                    }
                    auto& out = dp[static_cast<std::size_t>(i2)][static_cast<std::size_t>(j2 - i2 + kBand)];
                    for (const auto& p : fr)
                        detail::frontier_insert(out, {std::max(p.d, dseg), std::max(p.s, pen)});
                }
            }
        }
    }

    double best = uniform;  // identity time change is always admissible
    for (const auto& p : dp[static_cast<std::size_t>(M)][kBand]) best = std::min(best, p.d + p.s);
    return best;
}

}  // namespace mvsde
