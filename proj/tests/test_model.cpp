#include <catch2/catch.hpp>

#include <cmath>

#include "mvsde/artifacts.hpp"
#include "mvsde/model.hpp"
#include "test_problems.hpp"

using namespace mvsde;
using Catch::Detail::Approx;

namespace {

Problem reflected_linear(JumpSpec f, std::vector<Mark> marks) {
    DriftSpec b{.kind = "linear", .gain = -1.0};
    DiffusionSpec sig{.kind = "constant", .matrix = Mat(1, 1)};
    sig.matrix.at(0, 0) = 1.0;
    return Problem(1, 1, MonotoneOp::indicator(ConvexDomain::halfline_nonneg()), b, sig,
                   std::move(f), MarkMeasure(std::move(marks)),
                   HypothesisConstants{.L1 = 1.0, .gamma1 = 0.5, .gamma2 = 1.0});
}

}  // namespace

TEST_CASE("problem build accepts the reflected linear system") {
    JumpSpec f{.kind = "mark_scaled_clamp", .scale_factor = 0.1};
    f.hi = Vec{1.0};
    REQUIRE_NOTHROW(reflected_linear(f, {{{1.0}, 0.5, 0.1}}));
}

TEST_CASE("problem build rejects jumps that exit the domain") {
    JumpSpec f{.kind = "constant", .constant = Vec{-2.0}};
    REQUIRE_THROWS_WITH(reflected_linear(f, {{{1.0}, 0.5, 2.0}}),
                        Catch::Contains("jump admissibility"));
}

TEST_CASE("problem build accepts an unconstrained Brownian system") {
    DiffusionSpec sig{.kind = "identity", .scale = 1.0};
    REQUIRE_NOTHROW(Problem(2, 2, MonotoneOp::zero(2), DriftSpec{}, sig, JumpSpec{}, MarkMeasure{},
                            HypothesisConstants{.L1 = 0.0}));
}

TEST_CASE("problem build probes that the origin is a zero of A") {
    // indicator of a shifted box: 0 is outside, so J_eta(0) != 0
    auto op = MonotoneOp::indicator(ConvexDomain::box({1.0}, {2.0}));
    REQUIRE_THROWS_WITH(Problem(1, 1, op, DriftSpec{}, DiffusionSpec{}, JumpSpec{}, MarkMeasure{},
                                HypothesisConstants{}),
                        Catch::Contains("origin not a zero"));
}

TEST_CASE("compensator drift is the weighted jump sum") {
    JumpSpec f{.kind = "mark_scaled_state", .scale_factor = 1.0};
    Problem p(1, 1, MonotoneOp::zero(1), DriftSpec{}, DiffusionSpec{}, f,
              MarkMeasure({{{1.0}, 0.5, 0.9}}), HypothesisConstants{.gamma1 = 0.9});
    REQUIRE(p.compensator_drift({2.0})[0] == Approx(1.0));

    Problem none(1, 1, MonotoneOp::zero(1), DriftSpec{}, DiffusionSpec{}, JumpSpec{}, MarkMeasure{},
                 HypothesisConstants{});
    REQUIRE(none.compensator_drift({5.0})[0] == 0.0);

    JumpSpec fc{.kind = "mark_scaled_clamp", .scale_factor = 0.1};
    fc.hi = Vec{1.0};
    Problem two(1, 1, MonotoneOp::zero(1), DriftSpec{}, DiffusionSpec{}, fc,
                MarkMeasure({{{1.0}, 0.5, 0.1}, {{2.0}, 0.25, 0.2}}),
                HypothesisConstants{.gamma1 = 0.5});
    // 0.5*0.1*1*min(3,1) + 0.25*0.1*2*min(3,1) = 0.05 + 0.05
    REQUIRE(two.compensator_drift({3.0})[0] == Approx(0.1));
}

TEST_CASE("audit estimates the Lipschitz constant of a linear drift exactly") {
    DriftSpec b{.kind = "linear", .gain = -1.0};
    Problem p(1, 1, MonotoneOp::zero(1), b, DiffusionSpec{}, JumpSpec{}, MarkMeasure{},
              HypothesisConstants{.L1 = 1.0});
    const AuditReport r = audit_hypotheses(p, 2000, 1.0, 7);
    REQUIRE(r.lip_drift == Approx(1.0).epsilon(1e-9));
    REQUIRE(r.lipschitz_drift_diffusion.ok);
}

TEST_CASE("audit dissipativity ratio matches a dense grid scan on the strict preset") {
    const Problem p = testing::strict1d();

    // independent 1-D scan of -(2 x b + sigma^2 + sum w |f|^2)/x^2
    double grid_min = std::numeric_limits<double>::infinity();
    for (int i = -20000; i <= 20000; ++i) {
        const double x = i * 1e-4 * 1.0;
        if (std::abs(x) < 1e-3) continue;
        Vec xv{x};
        const double sig = p.diffusion(xv).frobenius();
        double js = 0.0;
        for (const auto& m : p.marks().marks()) js += m.weight * norm_sq(p.jump(xv, m.value));
        grid_min = std::min(grid_min, -(2.0 * x * p.drift(xv)[0] + sig * sig + js) / (x * x));
    }
    REQUIRE(grid_min == Approx(0.995).epsilon(1e-9));

    const AuditReport r = audit_hypotheses(p, 4000, 1.0, 11);
    REQUIRE(r.dissip_min == Approx(0.995).epsilon(1e-9));
    REQUIRE(r.dissipative_strict.ok);
}

TEST_CASE("audit flags fail for constant diffusion near the origin") {
    const Problem p = testing::ou1d();
    const AuditReport r = audit_hypotheses(p, 2000, 2.0, 13);
    REQUIRE_FALSE(r.dissipative_strict.ok);       // ratio -> -inf near 0
    REQUIRE(r.dissipative_empirical.checked);
    REQUIRE(r.dissipative_empirical.ok);          // outside |x| >= 1.01 the rate is >= 1
    REQUIRE(r.regime_label == "empirical");
}

TEST_CASE("empirical dissipativity is unchecked when unsampled") {
    // sampling radius never reaches past the inner radius: no verdict
    const Problem p = testing::ou1d();
    const AuditReport r = audit_hypotheses(p, 2000, 0.5, 13);
    REQUIRE_FALSE(r.dissipative_empirical.checked);
    REQUIRE(r.regime_label == "none");
}

TEST_CASE("theorem-compliant example passes every audited hypothesis") {
    const Problem p = testing::strict1d();
    REQUIRE(p.labels() == std::vector<std::string>{"theorem-compliant"});
    const AuditReport r = audit_hypotheses(p, 4000, 1.0, 17);
    REQUIRE(r.op_zero_at_origin.ok);
    REQUIRE(r.lipschitz_drift_diffusion.ok);
    REQUIRE(r.jump_admissible.ok);
    REQUIRE(r.jump_lipschitz.ok);
    REQUIRE(r.jump_bounded.ok);
    REQUIRE(r.exp_integrable.ok);
    REQUIRE(r.diffusion_bounded.ok);
    REQUIRE(r.regime_label == "strict");
}

TEST_CASE("audit is deterministic bit-for-bit under a fixed seed") {
    const Problem p = testing::strict1d();
    const auto a = audit_json(audit_hypotheses(p, 1000, 1.0, 99));
    const auto b = audit_json(audit_hypotheses(p, 1000, 1.0, 99));
    REQUIRE(a.dump() == b.dump());
    const auto c = audit_json(audit_hypotheses(p, 1000, 1.0, 100));
    REQUIRE(a.dump() != c.dump());
}

TEST_CASE("audit rejects tiny sample counts") {
    REQUIRE_THROWS_AS(audit_hypotheses(testing::strict1d(), 99, 1.0, 1), std::invalid_argument);
}

TEST_CASE("lipschitz estimates never exceed configured constants on clamped presets") {
    const Problem p = testing::strict1d();
    const AuditReport r = audit_hypotheses(p, 4000, 2.0, 21);
    REQUIRE(r.lip_drift <= 1.0 + 1e-9);
    REQUIRE(r.lip_sigma <= 1.0 + 1e-9);
    REQUIRE(r.lip_combined <= p.constants().L1 + 1e-9);
    for (std::size_t i = 0; i < p.marks().size(); ++i)
        REQUIRE(r.lip_jump[i] <= p.marks()[i].l2 + 1e-9);
}

TEST_CASE("mark measure aggregates") {
    MarkMeasure nu({{{1.0}, 0.5, 0.1}, {{2.0}, 0.25, 0.2}});
    REQUIRE(nu.total_weight() == Approx(0.75));
    REQUIRE(nu.l2_sq_integral() == Approx(0.5 * 0.01 + 0.25 * 0.04));
    REQUIRE(nu.sup_l2() == Approx(0.2));
    REQUIRE(nu.exp_integral(1.0) ==
            Approx(0.5 * std::exp(0.01) + 0.25 * std::exp(0.04)));
    REQUIRE_THROWS_AS(MarkMeasure({{{1.0}, 0.0, 0.1}}), std::invalid_argument);
}
