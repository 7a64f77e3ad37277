#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvsde/domain.hpp"
#include "mvsde/model.hpp"
#include "mvsde/rng.hpp"
#include "mvsde/skeleton.hpp"

namespace mvsde {

struct SimConfig {
    double epsilon = 0.1;                 // noise level, strictly in (0,1)
    double T = 1.0;                       // horizon
    int steps = 1000;                     // uniform grid cells
    std::uint64_t seed = 0;               // base seed; replica streams split from it
    std::string scheme = "resolvent_step";
    std::optional<Control> tilt;          // importance-sampling controls

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::invalid_argument("SimConfig: epsilon must lie strictly in (0,1)");
        if (!(T > 0.0) || steps < 1) throw std::invalid_argument("SimConfig: need T > 0, steps >= 1");
        if (scheme != "resolvent_step")
            throw std::invalid_argument("SimConfig: unknown scheme '" + scheme + "'");
    }

    double dt() const { return T / steps; }
};

struct JumpEvent {
    double time = 0.0;
    int mark = 0;
};

/// Poisson jump events with intensity theta * nu: per mark a Poisson(theta w_i T)
/// count with i.i.d. uniform times, merged and sorted.
inline std::vector<JumpEvent> sample_jump_events(const MarkMeasure& nu, double theta, double T,
                                                 RngStream& rng) {
    if (!(theta > 0.0) || !(T > 0.0))
        throw std::invalid_argument("sample_jump_events: need theta > 0 and T > 0");
    std::vector<JumpEvent> ev;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        const long n = rng.poisson(theta * nu[i].weight * T);
        for (long k = 0; k < n; ++k) ev.push_back({rng.uniform() * T, static_cast<int>(i)});
    }
    std::sort(ev.begin(), ev.end(), [](const JumpEvent& a, const JumpEvent& b) {
        return a.time != b.time ? a.time < b.time : a.mark < b.mark;
    });
    return ev;
}

/// Controlled jump events: thinning from the per-mark dominating rate
/// eps^-1 * max_k g(k,i) * w_i, keeping an event in cell k with probability
/// g(k,i)/max g. With g identically theta this coincides in law with
/// sample_jump_events at rate theta/eps.
inline std::vector<JumpEvent> sample_controlled_jump_events(const MarkMeasure& nu, const Control& ctrl,
                                                            double epsilon, double T, RngStream& rng) {
    if (!(T > 0.0)) throw std::invalid_argument("sample_controlled_jump_events: need T > 0");
    ctrl.validate();
    if (ctrl.n_marks != static_cast<int>(nu.size()))
        throw std::invalid_argument("sample_controlled_jump_events: mark count mismatch");
    std::vector<JumpEvent> ev;
    for (std::size_t i = 0; i < nu.size(); ++i) {
        double gmax = 0.0;
        for (int k = 0; k < ctrl.cells; ++k) gmax = std::max(gmax, ctrl.g_at(k, static_cast<int>(i)));
        if (gmax == 0.0) continue;
        const long n = rng.poisson(gmax * nu[i].weight * T / epsilon);
        for (long k = 0; k < n; ++k) {
            const double t = rng.uniform() * T;
            const double accept = ctrl.g_at(ctrl.cell_of(t), static_cast<int>(i)) / gmax;
            if (rng.uniform() < accept) ev.push_back({t, static_cast<int>(i)});
        }
    }
    std::sort(ev.begin(), ev.end(), [](const JumpEvent& a, const JumpEvent& b) {
        return a.time != b.time ? a.time < b.time : a.mark < b.mark;
    });
    return ev;
}

/// One draw of driving noise: per-cell Brownian increments (variance dt per
/// coordinate) and the jump events on (0,T].
struct NoiseRealization {
    int steps = 0;
    int noise_dim = 0;
    std::vector<double> dW;  // steps x noise_dim, row-major
    std::vector<JumpEvent> events;

    double dw(int k, int j) const { return dW[static_cast<std::size_t>(k) * noise_dim + j]; }
};

inline NoiseRealization draw_noise(const Problem& p, const SimConfig& cfg, RngStream& rng) {
    cfg.validate();
    NoiseRealization n;
    n.steps = cfg.steps;
    n.noise_dim = p.noise_dim();
    n.dW.resize(static_cast<std::size_t>(cfg.steps) * p.noise_dim());
    const double sd = std::sqrt(cfg.dt());
    for (double& v : n.dW) v = sd * rng.normal();
    if (!p.marks().empty()) {
        if (cfg.tilt) {
            n.events = sample_controlled_jump_events(p.marks(), *cfg.tilt, cfg.epsilon, cfg.T, rng);
        } else {
            n.events = sample_jump_events(p.marks(), 1.0 / cfg.epsilon, cfg.T, rng);
        }
    }
    return n;
}

struct SimResult {
    GridPath path;
    ForcePath force;
};

struct TiltedResult {
    GridPath path;
    ForcePath force;
    double log_weight = 0.0;  // log dP/dP~ along the realized path
};

namespace detail {

/// Shared stepper for plain and tilted paths. Per cell:
///   Y = X_k + [b + sigma h - compensator] dt + sqrt(eps) sigma dW + eps * sum_cell f
///   X_{k+1} = J_dt(Y),  dK_k = Y - X_{k+1}.
/// Jumps inside a cell are evaluated at the cell's left-endpoint state. The
/// compensator correction -sum_i w_i f(x,u_i) dt is exact for every tilt (the
/// eps factors cancel analytically).
inline TiltedResult run_euler(const Problem& p, const SimConfig& cfg, const Vec& x0,
                              const NoiseRealization& noise) {
    const double dt = cfg.dt();
    const double sq_eps = std::sqrt(cfg.epsilon);
    const auto& nu = p.marks();
    const Control* tilt = cfg.tilt ? &*cfg.tilt : nullptr;
    if (tilt && std::abs(tilt->T - cfg.T) > 1e-12 * std::max(1.0, cfg.T))
        throw std::invalid_argument("simulate: tilt horizon does not match the grid");
    Control tilt_grid;  // tilt re-sampled onto the simulation grid
    if (tilt && tilt->cells != cfg.steps) {
        tilt_grid = tilt->resample(cfg.steps);
        tilt = &tilt_grid;
    }

    TiltedResult out;
    GridPath& path = out.path;
    path.times = uniform_grid(cfg.T, cfg.steps);
    path.states.reserve(path.times.size());
    path.states.push_back(p.domain().project(x0));
    std::vector<Vec> incs;
    incs.reserve(static_cast<std::size_t>(cfg.steps));

    double log_w = 0.0;
    std::size_t ev = 0;
    Vec hk(static_cast<std::size_t>(p.noise_dim()), 0.0);

    for (int k = 0; k < cfg.steps; ++k) {
        const Vec& x = path.states.back();
        const double t_hi = path.times[static_cast<std::size_t>(k) + 1];

        Vec y = x;
        Vec b = p.drift(x);
        axpy(-1.0, p.compensator_drift(x), b);
        const Mat sig = p.diffusion(x);
        if (tilt) {
            for (int j = 0; j < p.noise_dim(); ++j) hk[static_cast<std::size_t>(j)] = tilt->h_at(k, j);
            axpy(1.0, sig.apply(hk), b);
        }
        axpy(dt, b, y);

        double hdw = 0.0, h2 = 0.0;
        for (int j = 0; j < p.noise_dim(); ++j) {
            const double dwj = noise.dw(k, j);
            for (int i = 0; i < p.dim(); ++i) y[static_cast<std::size_t>(i)] += sq_eps * sig.at(i, j) * dwj;
            if (tilt) {
                hdw += hk[static_cast<std::size_t>(j)] * dwj;
                h2 += hk[static_cast<std::size_t>(j)] * hk[static_cast<std::size_t>(j)];
            }
        }
        if (tilt) log_w += -hdw / sq_eps - h2 * dt / (2.0 * cfg.epsilon);

        while (ev < noise.events.size() && noise.events[ev].time <= t_hi) {
            const JumpEvent& e = noise.events[ev];
            Vec j = p.jump(x, nu[static_cast<std::size_t>(e.mark)].value);
            axpy(cfg.epsilon, j, y);
            for (double& v : j) v *= cfg.epsilon;
            path.jump_log.push_back({e.time, e.mark, std::move(j)});
            if (tilt) {
                const double g = tilt->g_at(k, e.mark);
                if (!(g > 0.0))
                    throw std::runtime_error("simulate: jump event in a cell with g = 0, weight undefined");
                log_w -= std::log(g);
            }
            ++ev;
        }
        if (tilt) {
            for (int i = 0; i < tilt->n_marks; ++i)
                log_w += (tilt->g_at(k, i) - 1.0) * nu[static_cast<std::size_t>(i)].weight * dt /
                         cfg.epsilon;
        }

        Vec xn = p.op().resolvent(dt, y);
        if (!all_finite(xn))
            throw std::runtime_error("simulate: non-finite state at step " + std::to_string(k));
        incs.push_back(sub(std::move(y), xn));
        path.states.push_back(std::move(xn));
    }
    out.force = ForcePath::from_increments(path.times, std::move(incs));
    out.log_weight = log_w;
    return out;
}

}  // namespace detail

/// One path of the noisy dynamics under the plain measure.
inline SimResult simulate_path(const Problem& p, const SimConfig& cfg, const Vec& x0, RngStream& rng) {
    cfg.validate();
    if (!p.domain().contains(x0, kGeomTol))
        throw std::invalid_argument("simulate_path: x0 outside the closed domain");
    SimConfig plain = cfg;
    plain.tilt.reset();
    NoiseRealization noise = draw_noise(p, plain, rng);
    auto r = detail::run_euler(p, plain, x0, noise);
    return {std::move(r.path), std::move(r.force)};
}

/// One path of the tilted (controlled) dynamics together with the log
/// likelihood ratio log dP/dP~; for any bounded functional F the tilted mean
/// of F * exp(log_weight) recovers the plain-measure expectation of F.
inline TiltedResult simulate_tilted_path(const Problem& p, const SimConfig& cfg, const Vec& x0,
                                         RngStream& rng) {
    cfg.validate();
    if (!cfg.tilt) throw std::invalid_argument("simulate_tilted_path: cfg.tilt is required");
    if (!p.domain().contains(x0, kGeomTol))
        throw std::invalid_argument("simulate_tilted_path: x0 outside the closed domain");
    NoiseRealization noise = draw_noise(p, cfg, rng);
    return detail::run_euler(p, cfg, x0, noise);
}

/// States of one long trajectory recorded every `thin` time units after
/// burn_in; approximates draws from the invariant measure when the dynamics is
/// dissipative (audit the problem first).
inline std::vector<Vec> ergodic_sample(const Problem& p, const SimConfig& cfg, const Vec& x0,
                                       double burn_in, double horizon, double thin, RngStream& rng) {
    cfg.validate();
    if (!(horizon > burn_in) || !(thin > 0.0) || burn_in < 0.0)
        throw std::invalid_argument("ergodic_sample: need horizon > burn_in >= 0 and thin > 0");
    const double dt = cfg.dt();
    const long total_steps = static_cast<long>(std::ceil(horizon / dt));
    const long stride = std::max<long>(1, static_cast<long>(std::llround(thin / dt)));
    const long burn_steps = static_cast<long>(std::ceil(burn_in / dt));

    const double sd = std::sqrt(dt);
    const double sq_eps = std::sqrt(cfg.epsilon);
    const auto& nu = p.marks();
    const double jump_rate_dt = nu.total_weight() * dt / cfg.epsilon;

    Vec x = p.domain().project(x0);
    std::vector<Vec> samples;
    for (long k = 0; k < total_steps; ++k) {
        Vec y = x;
        Vec b = p.drift(x);
        axpy(-1.0, p.compensator_drift(x), b);
        axpy(dt, b, y);
        const Mat sig = p.diffusion(x);
        for (int j = 0; j < p.noise_dim(); ++j) {
            const double dwj = sd * rng.normal();
            for (int i = 0; i < p.dim(); ++i) y[static_cast<std::size_t>(i)] += sq_eps * sig.at(i, j) * dwj;
        }
        if (!nu.empty() && jump_rate_dt > 0.0) {
            // per-cell event counts; cheap because the cell intensity is tiny
            for (std::size_t m = 0; m < nu.size(); ++m) {
                const long n = rng.poisson(nu[m].weight * dt / cfg.epsilon);
                if (n > 0) axpy(cfg.epsilon * static_cast<double>(n), p.jump(x, nu[m].value), y);
            }
        }
        x = p.op().resolvent(dt, y);
        if (!all_finite(x))
            throw std::runtime_error("ergodic_sample: non-finite state at step " + std::to_string(k));
        if (k + 1 > burn_steps && (k + 1 - burn_steps) % stride == 0) samples.push_back(x);
    }
    return samples;
}

struct ExpMomentResult {
    double empirical_mean = 0.0;  // Monte Carlo mean of exp((beta/eps)|X_t|^2)
    double bound = 0.0;           // exp(-L3 t/4) exp((beta/eps)|x0|^2) + 2
    double beta = 0.0;
    double t = 0.0;
    long n_rep = 0;
};

/// Verifies beta against the smallness conditions (2 beta Lsig^2 <= L3/4,
/// 2 beta int L2^2 dnu <= L3/4, beta <= 1) and estimates the exponential
/// moment at time t against its theoretical bound.
inline ExpMomentResult exp_moment_probe(const Problem& p, const SimConfig& cfg, const Vec& x0,
                                        double beta, double t, long n_rep, RngStream& rng) {
    cfg.validate();
    const auto& cst = p.constants();
    if (!cst.L3 || !cst.L_sigma)
        throw std::invalid_argument("exp_moment_probe: problem needs configured L3 and L_sigma");
    const double l3 = *cst.L3;
    if (!(beta > 0.0) || beta > 1.0 || 2.0 * beta * (*cst.L_sigma) * (*cst.L_sigma) > l3 / 4.0 ||
        2.0 * beta * p.marks().l2_sq_integral() > l3 / 4.0)
        throw std::invalid_argument("exp_moment_probe: beta violates the smallness conditions");
    if (!(t > 0.0) || n_rep < 1) throw std::invalid_argument("exp_moment_probe: need t > 0, n_rep >= 1");

    SimConfig run = cfg;
    run.tilt.reset();
    run.T = t;
    run.steps = std::max(1, static_cast<int>(std::ceil(t / cfg.dt())));

    double acc = 0.0;
    for (long rep = 0; rep < n_rep; ++rep) {
        RngStream r = rng.split(static_cast<std::uint64_t>(rep));
        const SimResult sim = simulate_path(p, run, x0, r);
        acc += std::exp(beta / cfg.epsilon * norm_sq(sim.path.terminal()));
    }
    ExpMomentResult out;
    out.beta = beta;
    out.t = t;
    out.n_rep = n_rep;
    out.empirical_mean = acc / static_cast<double>(n_rep);
    out.bound = std::exp(-l3 * t / 4.0) * std::exp(beta / cfg.epsilon * norm_sq(x0)) + 2.0;
    return out;
}

}  // namespace mvsde
