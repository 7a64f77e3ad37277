#include <catch2/catch.hpp>

#include <cmath>
#include <vector>

#include "mvsde/domain.hpp"
#include "mvsde/rng.hpp"

using namespace mvsde;
using Catch::Detail::Approx;

namespace {

std::vector<ConvexDomain> domain_presets() {
    return {ConvexDomain::whole_space(2),
            ConvexDomain::halfline_nonneg(),
            ConvexDomain::box({-1.0, -1.0}, {1.0, 1.0}),
            ConvexDomain::ball({0.0, 0.0}, 1.0),
            ConvexDomain::halfspace_intersection(
                {{{1.0, 0.0}, 1.0}, {{-1.0, 0.0}, 1.0}, {{0.0, 1.0}, 2.0}, {{1.0, 1.0}, 2.5}}, 2)};
}

std::vector<MonotoneOp> operator_presets() {
    std::vector<MonotoneOp> ops;
    ops.push_back(MonotoneOp::zero(2));
    for (auto& d : domain_presets()) ops.push_back(MonotoneOp::indicator(d));
    ops.push_back(MonotoneOp::convex({PotentialKind::quadratic, 0.5}, 2));
    ops.push_back(MonotoneOp::convex({PotentialKind::abs, 0.3}, 2));
    ops.push_back(MonotoneOp::convex({PotentialKind::power4, 1.0}, 2));
    return ops;
}

Vec random_point(RngStream& rng, int d, double spread) {
    Vec x(static_cast<std::size_t>(d));
    for (double& v : x) v = spread * rng.normal();
    return x;
}

GridPath step_path(double T, double jump_time, double jump_size) {
    GridPath p;
    p.times = {0.0, jump_time, T};
    p.states = {{0.0}, {jump_size}, {jump_size}};
    return p;
}

// exhaustive search over monotone knot matchings for the two-term metric
double j1_bruteforce(const GridPath& x, const GridPath& y) {
    std::vector<double> knots;
    std::merge(x.times.begin(), x.times.end(), y.times.begin(), y.times.end(),
               std::back_inserter(knots));
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    const int M = static_cast<int>(knots.size()) - 1;
    double best = std::numeric_limits<double>::infinity();

    struct Rec {
        const std::vector<double>& knots;
        const GridPath &x, &y;
        int M;
        double& best;
        void go(std::vector<std::pair<int, int>>& match) {
            const auto [i, j] = match.back();
            if (i == M && j == M) {
                double dmax = 0.0, smax = 0.0;
                for (std::size_t s = 1; s < match.size(); ++s) {
                    const auto [i0, j0] = match[s - 1];
                    const auto [i1, j1] = match[s];
                    const double slope = (knots[j1] - knots[j0]) / (knots[i1] - knots[i0]);
                    smax = std::max(smax, std::abs(std::log(slope)));
                    for (int q = i0; q <= i1; ++q) {
                        const double t = knots[q];
                        const double lam = knots[j0] + slope * (t - knots[i0]);
                        dmax = std::max(dmax, std::abs(x.state_at(t)[0] - y.state_at(lam)[0]));
                    }
                }
                best = std::min(best, dmax + smax);
                return;
            }
            for (int i2 = i + 1; i2 <= M; ++i2)
                for (int j2 = j + 1; j2 <= M; ++j2) {
                    if ((i2 == M) != (j2 == M)) continue;
                    match.push_back({i2, j2});
                    go(match);
                    match.pop_back();
                }
        }
    } rec{knots, x, y, M, best};
    std::vector<std::pair<int, int>> match{{0, 0}};
    rec.go(match);
    return best;
}

}  // namespace

TEST_CASE("contains with tolerance") {
    REQUIRE(ConvexDomain::halfline_nonneg().contains({-1e-12}, 1e-9));
    REQUIRE_FALSE(ConvexDomain::ball({0.0, 0.0}, 1.0).contains({2.0, 0.0}, 0.0));
    REQUIRE(ConvexDomain::box({-1.0, -1.0}, {1.0, 1.0}).contains({0.0, 0.0}, 0.0));
    REQUIRE_THROWS_AS(ConvexDomain::halfline_nonneg().contains({0.0}, -1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(ConvexDomain::ball({0.0, 0.0}, 1.0).contains({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("projection closed forms") {
    REQUIRE(ConvexDomain::halfline_nonneg().project({-1.5})[0] == 0.0);
    const Vec pb = ConvexDomain::ball({0.0, 0.0}, 1.0).project({2.0, 0.0});
    REQUIRE(pb[0] == Approx(1.0));
    REQUIRE(pb[1] == Approx(0.0));
    const Vec pc = ConvexDomain::box({0.0, 0.0}, {1.0, 1.0}).project({2.0, 0.5});
    REQUIRE(pc[0] == Approx(1.0));
    REQUIRE(pc[1] == Approx(0.5));
}

TEST_CASE("infeasible halfspace system is rejected") {
    REQUIRE_THROWS_WITH(
        ConvexDomain::halfspace_intersection({{{1.0}, -1.0}, {{-1.0}, -1.0}}, 1),
        Catch::Contains("empty domain"));
}

TEST_CASE("halfspace projection agrees with the box closed form") {
    // the box [-1,1]^2 expressed through four halfspaces
    const auto hs = ConvexDomain::halfspace_intersection(
        {{{1.0, 0.0}, 1.0}, {{-1.0, 0.0}, 1.0}, {{0.0, 1.0}, 1.0}, {{0.0, -1.0}, 1.0}}, 2);
    const auto box = ConvexDomain::box({-1.0, -1.0}, {1.0, 1.0});
    RngStream rng(11);
    for (int i = 0; i < 200; ++i) {
        const Vec x = random_point(rng, 2, 2.0);
        REQUIRE(dist(hs.project(x), box.project(x)) < 1e-9);
    }
}

TEST_CASE("resolvent examples") {
    const auto ind = MonotoneOp::indicator(ConvexDomain::halfline_nonneg());
    REQUIRE(ind.resolvent(0.7, {-3.0})[0] == 0.0);
    const auto quad = MonotoneOp::convex({PotentialKind::quadratic, 1.0}, 1);
    REQUIRE(quad.resolvent(1.0, {2.0})[0] == Approx(1.0));
    const auto z = MonotoneOp::zero(2);
    const Vec r = z.resolvent(0.3, {4.0, -2.0});
    REQUIRE(r[0] == 4.0);
    REQUIRE(r[1] == -2.0);
    REQUIRE_THROWS_AS(z.resolvent(0.0, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("yosida examples") {
    const auto ind = MonotoneOp::indicator(ConvexDomain::halfline_nonneg());
    REQUIRE(ind.yosida(0.5, {-2.0})[0] == Approx(-4.0));
    REQUIRE(ind.yosida(0.5, {3.0})[0] == 0.0);
    const auto quad = MonotoneOp::convex({PotentialKind::quadratic, 1.0}, 1);
    REQUIRE(quad.yosida(1.0, {2.0})[0] == Approx(1.0));
}

TEST_CASE("monotone gap examples") {
    const auto ind = MonotoneOp::indicator(ConvexDomain::halfline_nonneg());
    REQUIRE(monotone_gap(ind, {-1.0}, {1.0}, 1.0) == Approx(2.0));
    const auto z = MonotoneOp::zero(1);
    REQUIRE(monotone_gap(z, {3.0}, {-0.5}, 1.0) == 0.0);
    const auto quad = MonotoneOp::convex({PotentialKind::quadratic, 1.0}, 1);
    REQUIRE(monotone_gap(quad, {3.0}, {0.0}, 1.0) == Approx(4.5));
}

TEST_CASE("power4 prox reports unsolvable inputs with the residual") {
    const auto op = MonotoneOp::convex({PotentialKind::power4, 1.0}, 1);
    REQUIRE_THROWS_AS(op.resolvent(1.0, {1e308}), std::runtime_error);
}

TEST_CASE("power4 prox solves its optimality condition") {
    const auto op = MonotoneOp::convex({PotentialKind::power4, 2.0}, 2);
    RngStream rng(5);
    for (int i = 0; i < 200; ++i) {
        const Vec x = random_point(rng, 2, 3.0);
        for (double eta : {1e-3, 1.0, 1e3}) {
            const Vec z = op.resolvent(eta, x);
            // z + eta * scale * |z|^2 z = x
            Vec lhs = z;
            axpy(eta * 2.0 * norm_sq(z), z, lhs);
            REQUIRE(dist(lhs, x) < 1e-8 * (1.0 + norm(x)));
        }
    }
}

TEST_CASE("projection idempotence over presets") {
    RngStream rng(42);
    for (const auto& dom : domain_presets()) {
        for (int i = 0; i < 10000; ++i) {
            const Vec x = random_point(rng, dom.dim(), 3.0);
            const Vec p1 = dom.project(x);
            const Vec p2 = dom.project(p1);
            REQUIRE(dist(p1, p2) <= 1e-12);
        }
    }
}

TEST_CASE("resolvent non-expansiveness over presets") {
    RngStream rng(43);
    for (const auto& op : operator_presets()) {
        for (double eta : {1e-3, 1.0, 1e3}) {
            for (int i = 0; i < 2000; ++i) {
                const Vec x = random_point(rng, op.dim(), 3.0);
                const Vec y = random_point(rng, op.dim(), 3.0);
                REQUIRE(dist(op.resolvent(eta, x), op.resolvent(eta, y)) <= dist(x, y) + 1e-12);
            }
        }
    }
}

TEST_CASE("yosida monotonicity over presets") {
    RngStream rng(44);
    for (const auto& op : operator_presets()) {
        for (int i = 0; i < 10000; ++i) {
            const Vec x = random_point(rng, op.dim(), 3.0);
            const Vec y = random_point(rng, op.dim(), 3.0);
            REQUIRE(monotone_gap(op, x, y, 0.5) >= -1e-12);
        }
    }
}

TEST_CASE("indicator resolvent equals projection for every eta") {
    RngStream rng(45);
    for (const auto& dom : domain_presets()) {
        const auto op = MonotoneOp::indicator(dom);
        for (double eta : {1e-3, 1.0, 1e3}) {
            for (int i = 0; i < 500; ++i) {
                const Vec x = random_point(rng, dom.dim(), 3.0);
                REQUIRE(dist(op.resolvent(eta, x), dom.project(x)) == 0.0);
            }
        }
    }
}

TEST_CASE("force path variation") {
    auto f0 = ForcePath::from_increments({0.0, 1.0}, {{{0.0, 0.0}}});
    REQUIRE(total_variation(f0) == 0.0);
    auto f1 = ForcePath::from_increments({0.0, 1.0}, {{{0.0, -3.0}}});
    REQUIRE(total_variation(f1) == Approx(3.0));
    auto f2 = ForcePath::from_increments({0.0, 0.5, 1.0}, {{{1.0, 0.0}}, {{-1.0, 0.0}}});
    REQUIRE(total_variation(f2) == Approx(2.0));
    REQUIRE(f2.cum_variation.back() >= f2.cum_variation.front());
}

TEST_CASE("path distance basics") {
    GridPath a = step_path(1.0, 0.5, 1.0);
    REQUIRE(path_distance(a, a, PathMetric::uniform) == 0.0);
    REQUIRE(path_distance(a, a, PathMetric::j1_grid) == 0.0);

    GridPath zero;
    zero.times = {0.0, 1.0};
    zero.states = {{0.0}, {0.0}};
    GridPath c;
    c.times = {0.0, 1.0};
    c.states = {{0.7}, {0.7}};
    REQUIRE(path_distance(zero, c, PathMetric::uniform) == Approx(0.7));
    REQUIRE(path_distance(zero, c, PathMetric::j1_grid) == Approx(0.7));

    GridPath other;
    other.times = {0.0, 2.0};
    other.states = {{0.0}, {0.0}};
    REQUIRE_THROWS_AS(path_distance(zero, other, PathMetric::uniform), std::invalid_argument);
}

TEST_CASE("time-shifted jumps: j1 matches brute force and beats uniform") {
    const double delta = 0.01;
    GridPath a = step_path(1.0, 0.5, 1.0);
    GridPath b = step_path(1.0, 0.5 + delta, 1.0);

    REQUIRE(path_distance(a, b, PathMetric::uniform) == Approx(1.0));
    const double j1 = path_distance(a, b, PathMetric::j1_grid);
    const double oracle = j1_bruteforce(a, b);
    REQUIRE(j1 == Approx(oracle).margin(1e-9));
    REQUIRE(j1 <= delta + std::abs(std::log((0.5 + delta) / 0.5)) + 1e-6);
}

TEST_CASE("j1 never exceeds uniform") {
    RngStream rng(46);
    for (int rep = 0; rep < 50; ++rep) {
        GridPath a, b;
        a.times = uniform_grid(1.0, 16);
        b.times = uniform_grid(1.0, 16);
        double xa = 0.0, xb = 0.0;
        for (std::size_t k = 0; k < a.times.size(); ++k) {
            a.states.push_back({xa});
            b.states.push_back({xb});
            xa += 0.3 * rng.normal();
            xb += 0.3 * rng.normal();
        }
        const double u = path_distance(a, b, PathMetric::uniform);
        REQUIRE(path_distance(a, b, PathMetric::j1_grid) <= u + 1e-12);
    }
}

TEST_CASE("j1 search refuses oversized merged grids") {
    GridPath a, b;
    a.times = uniform_grid(1.0, 1200);
    b.times = uniform_grid(1.0, 2000);
    a.states.assign(a.times.size(), {0.0});
    b.states.assign(b.times.size(), {0.0});
    REQUIRE(path_distance(a, b, PathMetric::uniform) == 0.0);
    REQUIRE_THROWS_WITH(path_distance(a, b, PathMetric::j1_grid), Catch::Contains("1500"));
}

TEST_CASE("variational gap is nonnegative for resolvent-generated forces") {
    // X pushed against the halfline boundary: dK/dt in A(X_{k+1}) exactly
    const auto op = MonotoneOp::indicator(ConvexDomain::halfline_nonneg());
    GridPath path;
    ForcePath force;
    path.times = uniform_grid(1.0, 100);
    Vec x{1.0};
    std::vector<Vec> incs;
    path.states.push_back(x);
    for (int k = 0; k < 100; ++k) {
        Vec y{x[0] - 2.0 * 0.01};
        Vec xn = op.resolvent(0.01, y);
        incs.push_back(sub(y, xn));
        path.states.push_back(xn);
        x = xn;
    }
    force = ForcePath::from_increments(path.times, incs);
    RngStream rng(47);
    for (int i = 0; i < 100; ++i) {
        auto [gx, gy] = op.graph_point(random_point(rng, 1, 2.0), 0.3);
        REQUIRE(variational_gap(path, force, gx, gy) >= -1e-12);
    }
}
