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

#include "mvsde/domain.hpp"
#include "mvsde/linalg.hpp"
#include "mvsde/rng.hpp"

namespace mvsde {

// ---------------------------------------------------------------------------
// Finite mark measure
// ---------------------------------------------------------------------------

struct Mark {
    Vec value;       // mark point u_i (scalar marks have size 1)
    double weight;   // nu({u_i}) > 0
    double l2;       // per-mark jump bound / Lipschitz constant L2(u_i)
};

class MarkMeasure {
public:
    MarkMeasure() = default;

    explicit MarkMeasure(std::vector<Mark> marks) : marks_(std::move(marks)) {
        for (const auto& m : marks_) {
            if (!(m.weight > 0.0)) throw std::invalid_argument("mark weight must be positive");
            if (!(m.l2 > 0.0)) throw std::invalid_argument("mark l2 bound must be positive");
            if (m.value.empty()) throw std::invalid_argument("mark value must be non-empty");
        }
    }

    std::size_t size() const { return marks_.size(); }
    bool empty() const { return marks_.empty(); }
    const Mark& operator[](std::size_t i) const { return marks_[i]; }
    const std::vector<Mark>& marks() const { return marks_; }

    double total_weight() const {
        double s = 0.0;
        for (const auto& m : marks_) s += m.weight;
        return s;
    }

    // integral of L2(u)^2 nu(du)
    double l2_sq_integral() const {
        double s = 0.0;
        for (const auto& m : marks_) s += m.weight * m.l2 * m.l2;
        return s;
    }

    double sup_l2() const {
        double s = 0.0;
        for (const auto& m : marks_) s = std::max(s, m.l2);
        return s;
    }

    // integral of exp(gamma2 * L2(u)^2) nu(du); always finite on finite support
    double exp_integral(double gamma2) const {
        double s = 0.0;
        for (const auto& m : marks_) s += m.weight * std::exp(gamma2 * m.l2 * m.l2);
        return s;
    }

private:
    std::vector<Mark> marks_;
};

// ---------------------------------------------------------------------------
// Coefficient presets
// ---------------------------------------------------------------------------
//
// Coefficients are named preset trees so that problems stay serializable and
// auditable. Atoms cover the linear / affine / clamped / saturating shapes;
// `sum` and `scale` compose them.

struct DriftSpec {
    std::string kind = "zero";        // zero|constant|linear|affine|saturating|clamp|sum|scale
    Vec constant;                     // constant / affine offset
    double gain = 0.0;                // linear / affine / saturating
    double cap = 1.0;                 // saturating: |x| cap
    std::optional<Vec> lo, hi;        // clamp bounds (componentwise, absent = unbounded)
    double factor = 1.0;              // scale
    std::vector<DriftSpec> terms;     // clamp/scale: inner map; sum: addends
};

inline Vec eval_drift(const DriftSpec& s, const Vec& x) {
    const std::size_t d = x.size();
    if (s.kind == "zero") return zeros(d);
    if (s.kind == "constant") {
        check_dim(s.constant, d, "drift constant");
        return s.constant;
    }
    if (s.kind == "linear") return scale(s.gain, x);
    if (s.kind == "affine") {
        check_dim(s.constant, d, "drift affine offset");
        return add(scale(s.gain, x), s.constant);
    }
    if (s.kind == "saturating") {
        const double n = norm(x);
        const double c = (n > s.cap) ? s.cap / n : 1.0;
        return scale(s.gain * c, x);
    }
    if (s.kind == "clamp") {
        if (s.terms.size() != 1) throw std::invalid_argument("drift clamp: needs one inner term");
        Vec v = eval_drift(s.terms[0], x);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (s.lo) v[i] = std::max(v[i], (*s.lo)[i]);
            if (s.hi) v[i] = std::min(v[i], (*s.hi)[i]);
        }
        return v;
    }
    if (s.kind == "sum") {
        Vec v = zeros(d);
        for (const auto& t : s.terms) {
            Vec w = eval_drift(t, x);
            for (std::size_t i = 0; i < d; ++i) v[i] += w[i];
        }
        return v;
    }
    if (s.kind == "scale") {
        if (s.terms.size() != 1) throw std::invalid_argument("drift scale: needs one inner term");
        return scale(s.factor, eval_drift(s.terms[0], x));
    }
    throw std::invalid_argument("unknown drift preset '" + s.kind + "'");
}

struct DiffusionSpec {
    std::string kind = "zero";   // zero|constant|identity|norm_clamped
    Mat matrix;                  // constant / norm_clamped base (d x l)
    double scale = 1.0;          // identity / norm_clamped
    double cap = 1.0;            // norm_clamped: sigma(x) = scale*min(|x|,cap)*matrix
};

inline Mat eval_diffusion(const DiffusionSpec& s, const Vec& x, int d, int l) {
    if (s.kind == "zero") return Mat(d, l);
    if (s.kind == "constant") {
        if (s.matrix.rows != d || s.matrix.cols != l)
            throw std::invalid_argument("diffusion constant: matrix must be d x l");
        return s.matrix;
    }
    if (s.kind == "identity") {
        if (d != l) throw std::invalid_argument("diffusion identity: needs d == l");
        return mscale(s.scale, Mat::identity(d));
    }
    if (s.kind == "norm_clamped") {
        if (s.matrix.rows != d || s.matrix.cols != l)
            throw std::invalid_argument("diffusion norm_clamped: matrix must be d x l");
        return mscale(s.scale * std::min(norm(x), s.cap), s.matrix);
    }
    throw std::invalid_argument("unknown diffusion preset '" + s.kind + "'");
}

struct JumpSpec {
    std::string kind = "zero";     // zero|constant|mark_vector|mark_scaled_state|mark_scaled_clamp|sum|scale
    Vec constant;                  // constant jump vector
    double scale_factor = 1.0;     // scaling applied by most atoms
    std::optional<Vec> lo, hi;     // mark_scaled_clamp bounds on the state
    std::vector<JumpSpec> terms;   // sum / scale composition
};

inline Vec eval_jump(const JumpSpec& s, const Vec& x, const Vec& u) {
    const std::size_t d = x.size();
    if (s.kind == "zero") return zeros(d);
    if (s.kind == "constant") {
        check_dim(s.constant, d, "jump constant");
        return scale(s.scale_factor, s.constant);
    }
    if (s.kind == "mark_vector") {
        check_dim(u, d, "jump mark_vector");
        return scale(s.scale_factor, u);
    }
    if (s.kind == "mark_scaled_state") {
        // scalar mark times state
        return scale(s.scale_factor * u[0], x);
    }
    if (s.kind == "mark_scaled_clamp") {
        Vec v = x;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (s.lo) v[i] = std::max(v[i], (*s.lo)[i]);
            if (s.hi) v[i] = std::min(v[i], (*s.hi)[i]);
        }
        return scale(s.scale_factor * u[0], std::move(v));
    }
    if (s.kind == "sum") {
        Vec v = zeros(d);
        for (const auto& t : s.terms) {
            Vec w = eval_jump(t, x, u);
            for (std::size_t i = 0; i < d; ++i) v[i] += w[i];
        }
        return v;
    }
    if (s.kind == "scale") {
        if (s.terms.size() != 1) throw std::invalid_argument("jump scale: needs one inner term");
        return scale(s.scale_factor, eval_jump(s.terms[0], x, u));
    }
    throw std::invalid_argument("unknown jump preset '" + s.kind + "'");
}

// ---------------------------------------------------------------------------
// Problem
// ---------------------------------------------------------------------------

struct HypothesisConstants {
    double L1 = 0.0;                 // Lipschitz bound for b and sigma combined
    double gamma1 = 0.0;             // sup_u L2(u) <= gamma1 < 1
    double gamma2 = 1.0;             // exponential integrability exponent
    std::optional<double> L_sigma;   // sup ||sigma||
    std::optional<double> L3;        // dissipativity rate
};

/// Dissipativity regime the problem is meant to run in. "strict" demands the
/// full hypothesis set globally (which forces sigma(0)=0 and f(0,.)=0);
/// "empirical" only asks for dissipativity outside |x| >= inner_radius and
/// permits non-degenerate noise at the origin.
struct RegimeSpec {
    std::string kind = "strict";     // strict | empirical
    double inner_radius = 0.0;       // empirical: dissipativity checked outside this ball
    std::optional<double> L3;        // empirical-regime rate, if different
};

class Problem {
public:
    Problem(int d, int l, MonotoneOp op, DriftSpec drift, DiffusionSpec diffusion, JumpSpec jump,
            MarkMeasure nu, HypothesisConstants constants, RegimeSpec regime = {},
            std::vector<std::string> labels = {})
        : d_(d),
          l_(l),
          op_(std::move(op)),
          drift_(std::move(drift)),
          diffusion_(std::move(diffusion)),
          jump_(std::move(jump)),
          nu_(std::move(nu)),
          constants_(constants),
          regime_(std::move(regime)),
          labels_(std::move(labels)) {
        if (d_ < 1 || l_ < 1) throw std::invalid_argument("Problem: need d >= 1 and l >= 1");
        if (op_.dim() != d_) throw std::invalid_argument("Problem: operator dimension mismatch");
        if (regime_.kind != "strict" && regime_.kind != "empirical")
            throw std::invalid_argument("Problem: regime must be strict or empirical");
        structural_checks();
    }

    int dim() const { return d_; }
    int noise_dim() const { return l_; }
    const MonotoneOp& op() const { return op_; }
    const ConvexDomain& domain() const { return op_.domain(); }
    const MarkMeasure& marks() const { return nu_; }
    const HypothesisConstants& constants() const { return constants_; }
    const RegimeSpec& regime() const { return regime_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const DriftSpec& drift_spec() const { return drift_; }
    const DiffusionSpec& diffusion_spec() const { return diffusion_; }
    const JumpSpec& jump_spec() const { return jump_; }

    Vec drift(const Vec& x) const { return eval_drift(drift_, x); }
    Mat diffusion(const Vec& x) const { return eval_diffusion(diffusion_, x, d_, l_); }
    Vec jump(const Vec& x, const Vec& u) const { return eval_jump(jump_, x, u); }

    /// Drift subtracted per unit time by the compensated jump integral:
    /// sum_i w_i f(x, u_i). (The epsilon factors cancel exactly.)
    Vec compensator_drift(const Vec& x) const {
        Vec s = zeros(static_cast<std::size_t>(d_));
        for (const auto& m : nu_.marks()) axpy(m.weight, jump(x, m.value), s);
        return s;
    }

    /// Uniform draw from domain intersect ball(0, radius) by rejection.
    Vec sample_domain(double radius, RngStream& rng, int max_tries = 4096) const {
        for (int t = 0; t < max_tries; ++t) {
            Vec x(static_cast<std::size_t>(d_));
            // uniform in the ball: gaussian direction, radial cdf inversion
            double n2 = 0.0;
            for (double& v : x) {
                v = rng.normal();
                n2 += v * v;
            }
            const double r = radius * std::pow(rng.uniform(), 1.0 / d_);
            const double c = (n2 > 0.0) ? r / std::sqrt(n2) : 0.0;
            for (double& v : x) v *= c;
            if (domain().contains(x, 0.0)) return x;
        }
        throw std::runtime_error("sample_domain: empty sampling region (no draw accepted)");
    }

private:
    void structural_checks() const {
        // 0 in A(0) probe: the Yosida approximation must vanish at the origin
        // for every eta, i.e. J_eta(0) = 0.
        const Vec origin = zeros(static_cast<std::size_t>(d_));
        for (double eta : {1e-3, 1e-1, 1.0, 10.0}) {
            if (norm(op_.yosida(eta, origin)) > kGeomTol)
                throw std::invalid_argument("Problem: origin not a zero of A (J_eta(0) != 0)");
        }
        // jump admissibility: x + f(x,u) stays in the closed domain on a
        // deterministic probe set plus a few seeded draws.
        std::vector<Vec> probes;
        probes.push_back(origin);
        for (int j = 0; j < d_; ++j) {
            for (double s : {1.0, -1.0, 2.0, -2.0}) {
                Vec e = origin;
                e[static_cast<std::size_t>(j)] = s;
                probes.push_back(domain().project(e));
            }
        }
        RngStream rng(0x5eedfeedULL);
        for (int i = 0; i < 32; ++i) {
            try {
                probes.push_back(sample_domain(2.0, rng, 64));
            } catch (const std::runtime_error&) {
                break;  // thin domains: fixed probes still apply
            }
        }
        for (const auto& x : probes) {
            for (const auto& m : nu_.marks()) {
                Vec xf = add(x, jump(x, m.value));
                if (!domain().contains(xf, kGeomTol))
                    throw std::invalid_argument(
                        "Problem: jump admissibility fails, x + f(x,u) leaves the domain at x = (" +
                        std::to_string(x[0]) + (d_ > 1 ? ", ..." : "") + ")");
            }
        }
    }

    int d_;
    int l_;
    MonotoneOp op_;
    DriftSpec drift_;
    DiffusionSpec diffusion_;
    JumpSpec jump_;
    MarkMeasure nu_;
    HypothesisConstants constants_;
    RegimeSpec regime_;
    std::vector<std::string> labels_;
};

// ---------------------------------------------------------------------------
// Hypothesis audit
// ---------------------------------------------------------------------------

struct AuditFlag {
    bool checked = false;
    bool ok = false;
};

/// Sampling-based audit of the hypothesis set. It can falsify but never
/// certify: flags report "no violating sample beyond tolerance".
struct AuditReport {
    int n_samples = 0;
    double radius = 0.0;
    std::uint64_t seed = 0;
    double tolerance = 0.0;

    double lip_drift = 0.0;          // max difference quotient of b
    double lip_sigma = 0.0;          // max difference quotient of sigma (Frobenius)
    double lip_combined = 0.0;       // max of the summed quotient (the L1 shape)
    std::vector<double> lip_jump;    // per-mark difference quotients
    std::vector<double> sup_jump;    // per-mark sup |f(x,u)| over samples
    std::vector<double> jump_at_origin;  // |f(0,u_i)|
    double sup_sigma = 0.0;          // sup ||sigma(x)|| over samples
    double dissip_min = std::numeric_limits<double>::infinity();          // min ratio, all samples
    double dissip_min_outside = std::numeric_limits<double>::infinity();  // min ratio outside inner radius
    double exp_integral = 0.0;

    AuditFlag op_zero_at_origin, lipschitz_drift_diffusion, jump_admissible, jump_lipschitz,
        jump_bounded, exp_integrable, diffusion_bounded, dissipative_strict, dissipative_empirical;
    Vec worst_dissip_x;          // sample minimizing the dissipativity ratio
    Vec worst_lip_x1, worst_lip_x2;
    std::string regime_label;    // strict | empirical | none

    bool regime_ok() const { return regime_label == "strict" || regime_label == "empirical"; }
};

inline AuditReport audit_hypotheses(const Problem& p, int n_samples, double radius,
                                    std::uint64_t seed, double tol_rel = 1e-6) {
    if (n_samples < 100) throw std::invalid_argument("audit_hypotheses: need n_samples >= 100");
    if (!(radius > 0.0)) throw std::invalid_argument("audit_hypotheses: radius must be positive");

    AuditReport r;
    r.n_samples = n_samples;
    r.radius = radius;
    r.seed = seed;
    r.tolerance = tol_rel;

    const auto& nu = p.marks();
    const auto& cst = p.constants();
    r.lip_jump.assign(nu.size(), 0.0);
    r.sup_jump.assign(nu.size(), 0.0);
    r.jump_at_origin.assign(nu.size(), 0.0);

    const Vec origin = zeros(static_cast<std::size_t>(p.dim()));
    for (std::size_t i = 0; i < nu.size(); ++i)
        r.jump_at_origin[i] = norm(p.jump(origin, nu[i].value));
    r.exp_integral = nu.exp_integral(cst.gamma2);

    // (H_A): origin interior to the domain and a zero of the operator.
    {
        bool ok = p.domain().origin_interior();
        for (double eta : {1e-3, 1.0, 1e3})
            ok = ok && norm(p.op().yosida(eta, origin)) <= kGeomTol;
        r.op_zero_at_origin = {true, ok};
    }

    RngStream rng(seed, 0xa0d17ULL);
    bool h1f_ok = true;
    const double inner = std::max(p.regime().inner_radius, 0.0);

    for (int s = 0; s < n_samples; ++s) {
        const Vec x1 = p.sample_domain(radius, rng);
        const Vec x2 = p.sample_domain(radius, rng);
        const double dx = dist(x1, x2);
        if (dx > 1e-9) {
            const double qb = dist(p.drift(x1), p.drift(x2)) / dx;
            Mat sd = p.diffusion(x1);
            const Mat s2 = p.diffusion(x2);
            for (std::size_t i = 0; i < sd.a.size(); ++i) sd.a[i] -= s2.a[i];
            const double qs = sd.frobenius() / dx;
            if (qb + qs > r.lip_combined) {
                r.lip_combined = qb + qs;
                r.worst_lip_x1 = x1;
                r.worst_lip_x2 = x2;
            }
            r.lip_drift = std::max(r.lip_drift, qb);
            r.lip_sigma = std::max(r.lip_sigma, qs);
            for (std::size_t i = 0; i < nu.size(); ++i)
                r.lip_jump[i] = std::max(
                    r.lip_jump[i], dist(p.jump(x1, nu[i].value), p.jump(x2, nu[i].value)) / dx);
        }

        for (const Vec* xp : {&x1, &x2}) {
            const Vec& x = *xp;
            r.sup_sigma = std::max(r.sup_sigma, p.diffusion(x).frobenius());
            double jump_sq = 0.0;
            for (std::size_t i = 0; i < nu.size(); ++i) {
                const Vec fx = p.jump(x, nu[i].value);
                const double fn = norm(fx);
                r.sup_jump[i] = std::max(r.sup_jump[i], fn);
                jump_sq += nu[i].weight * fn * fn;
                if (!p.domain().contains(add(x, fx), kGeomTol)) h1f_ok = false;
            }
            const double sig = p.diffusion(x).frobenius();
            const double xn2 = norm_sq(x);
            if (xn2 >= std::pow(1e-3 * radius, 2)) {
                const double ratio = -(2.0 * dot(x, p.drift(x)) + sig * sig + jump_sq) / xn2;
                if (ratio < r.dissip_min) {
                    r.dissip_min = ratio;
                    r.worst_dissip_x = x;
                }
                if (norm(x) >= inner) r.dissip_min_outside = std::min(r.dissip_min_outside, ratio);
            }
        }
    }

    const double slack = 1.0 + tol_rel;
    r.lipschitz_drift_diffusion = {true, r.lip_combined <= cst.L1 * slack};
    r.jump_admissible = {true, h1f_ok};
    {
        bool ok = nu.sup_l2() <= cst.gamma1 * slack && cst.gamma1 < 1.0;
        for (std::size_t i = 0; i < nu.size(); ++i) {
            ok = ok && r.lip_jump[i] <= nu[i].l2 * slack;
            ok = ok && r.jump_at_origin[i] <= nu[i].l2 * slack;
        }
        r.jump_lipschitz = {true, ok};
    }
    {
        bool ok = true;
        for (std::size_t i = 0; i < nu.size(); ++i) ok = ok && r.sup_jump[i] <= nu[i].l2 * slack;
        r.jump_bounded = {true, ok};
    }
    r.exp_integrable = {true, cst.gamma2 > 0.0 && std::isfinite(r.exp_integral)};
    if (cst.L_sigma)
        r.diffusion_bounded = {true, r.sup_sigma <= *cst.L_sigma * slack};
    if (cst.L3)
        r.dissipative_strict = {true, r.dissip_min >= *cst.L3 * (1.0 - tol_rel)};
    else
        r.dissipative_strict = {true, r.dissip_min > 0.0};
    {
        // unchecked when the sampling ball never reaches past the inner radius
        const bool sampled = std::isfinite(r.dissip_min_outside);
        const double want = p.regime().L3.value_or(cst.L3.value_or(0.0));
        const bool ok = sampled && ((want > 0.0) ? r.dissip_min_outside >= want * (1.0 - tol_rel)
                                                 : r.dissip_min_outside > 0.0);
        r.dissipative_empirical = {sampled, ok};
    }

    const bool core = r.op_zero_at_origin.ok && r.lipschitz_drift_diffusion.ok && r.jump_admissible.ok && r.jump_lipschitz.ok && r.exp_integrable.ok;
    if (core && r.dissipative_strict.ok && r.jump_bounded.ok && (!r.diffusion_bounded.checked || r.diffusion_bounded.ok))
        r.regime_label = "strict";
    else if (core && r.dissipative_empirical.checked && r.dissipative_empirical.ok)
        r.regime_label = "empirical";
    else
        r.regime_label = "none";
    return r;
}

}  // namespace mvsde
