#pragma once

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mvsde/artifacts.hpp"
#include "mvsde/config.hpp"

namespace mvsde {

// Exit statuses: 0 success, 1 check failure (a pass flag is false), 2 configuration error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;

namespace rundetail {

inline SimConfig sim_config(const RunConfig& cfg, double epsilon) {
    SimConfig s;
    s.epsilon = epsilon;
    s.T = cfg.grid.T;
    s.steps = cfg.grid.steps;
    s.seed = cfg.noise.seed;
    return s;
}

inline void say(const RunConfig& cfg, const std::string& line) {
    if (!cfg.output.quiet) std::cout << line << "\n";
}

inline int run_audit(const RunConfig& cfg, ArtifactSink& sink) {
    const Problem p = cfg.problem.build();
    const AuditReport r =
        audit_hypotheses(p, cfg.audit.n_samples, cfg.audit.radius, cfg.noise.seed, cfg.audit.tolerance);
    sink.add("audit.json", audit_json(r).dump(2) + "\n");
    const std::string declared = p.regime().kind;
    const bool ok = declared == "empirical" ? r.regime_ok() : r.regime_label == "strict";
    say(cfg, "audit: declared regime '" + declared + "', audited label '" + r.regime_label + "'");
    return ok ? kExitOk : kExitCheckFailed;
}

inline int run_simulate(const RunConfig& cfg, ArtifactSink& sink) {
    if (!cfg.simulate) throw ConfigError("simulate", "section required for this command");
    const Problem p = cfg.problem.build();
    SimConfig sc = sim_config(cfg, cfg.noise.epsilon.front());
    RngStream rng(cfg.noise.seed, 0x51de00ULL);
    nlohmann::json extra;
    GridPath path;
    ForcePath force;
    if (cfg.simulate->tilt) {
        sc.tilt = cfg.simulate->tilt->build(sc.T, sc.steps, p.noise_dim(),
                                            static_cast<int>(p.marks().size()));
        TiltedResult r = simulate_tilted_path(p, sc, cfg.simulate->x0, rng);
        extra["log_weight"] = r.log_weight;
        path = std::move(r.path);
        force = std::move(r.force);
    } else {
        SimResult r = simulate_path(p, sc, cfg.simulate->x0, rng);
        path = std::move(r.path);
        force = std::move(r.force);
    }
    sink.add_csv("path.csv", path_csv(path, force));
    nlohmann::json j = path_json(path, force);
    j["epsilon"] = sc.epsilon;
    if (!extra.empty()) j.update(extra);
    sink.add_json("path.json", j);
    say(cfg, "simulate: " + std::to_string(path.cells()) + " cells, |K| = " +
                 fmt_double(force.total_variation()));
    return kExitOk;
}

inline int run_skeleton(const RunConfig& cfg, ArtifactSink& sink) {
    if (!cfg.skeleton) throw ConfigError("skeleton", "section required for this command");
    const Problem p = cfg.problem.build();
    const Control c = cfg.skeleton->control.build(cfg.grid.T, cfg.grid.steps, p.noise_dim(),
                                                  static_cast<int>(p.marks().size()));
    const SkeletonResult r = solve_skeleton(p, cfg.skeleton->x0, c);
    sink.add_csv("skeleton.csv", path_csv(r.path, r.force));
    nlohmann::json j = path_json(r.path, r.force);
    j["action"] = action_value(c, p.marks()).total();
    if (cfg.skeleton->yosida_eta) {
        const GridPath yos = solve_skeleton_yosida(p, *cfg.skeleton->yosida_eta, cfg.skeleton->x0, c);
        j["yosida_eta"] = *cfg.skeleton->yosida_eta;
        j["yosida_sup_distance"] = path_distance(r.path, yos, PathMetric::uniform);
    }
    sink.add_json("skeleton.json", j);
    say(cfg, "skeleton: X_T = " + fmt_double(r.path.terminal()[0]));
    return kExitOk;
}

inline int run_action(const RunConfig& cfg, ArtifactSink& sink) {
    if (!cfg.action) throw ConfigError("action", "section required for this command");
    const Problem p = cfg.problem.build();
    const auto& a = *cfg.action;
    bool all_converged = true;
    nlohmann::json per_t = nlohmann::json::array();
    std::optional<MinimizeResult> best;
    for (double T : a.T_grid) {
        MinimizeResult r = minimize_action(p, a.x0, a.y, T, a.opts);
        all_converged = all_converged && r.converged;
        per_t.push_back({{"T", T},
                         {"action", r.action.total()},
                         {"brownian_cost", r.action.brownian_cost},
                         {"jump_cost", r.action.jump_cost},
                         {"endpoint_gap", r.endpoint_gap},
                         {"converged", r.converged},
                         {"iterations", r.iterations}});
        if (!best || (r.converged && r.action.total() < best->action.total())) best = std::move(r);
    }
    nlohmann::json j{{"y", a.y}, {"x0", a.x0}, {"per_horizon", per_t}};
    sink.add_json("action.json", j);
    if (best) {
        sink.add_json("control.json", control_json(best->control));
        ForcePath dummy = ForcePath::from_increments(
            best->path.times, std::vector<Vec>(best->path.cells(), zeros(best->path.states[0].size())));
        sink.add_csv("steered_path.csv", path_csv(best->path, dummy));
    }
    say(cfg, std::string("action: ") + (all_converged ? "converged" : "not converged"));
    return all_converged ? kExitOk : kExitCheckFailed;
}

inline int run_quasipotential(const RunConfig& cfg, ArtifactSink& sink) {
    if (!cfg.action) throw ConfigError("action", "section required for this command");
    const Problem p = cfg.problem.build();
    const auto& a = *cfg.action;
    const QuasiPotentialResult q = quasipotential(p, a.y, a.T_grid, a.opts, a.x0);
    sink.add_json("quasipotential.json", quasipotential_json(q));
    if (a.level_s && !a.level_grid.empty()) {
        const LevelSetResult ls = level_set(p, *a.level_s, a.level_grid, a.T_grid, a.opts);
        sink.add_csv("level_set.csv", level_set_csv(ls));
        nlohmann::json lj{{"s", ls.s},
                          {"max_member_radius", ls.max_member_radius},
                          {"bounded", ls.bounded}};
        sink.add_json("level_set.json", lj);
    }
    say(cfg, "quasipotential: V_hat = " + fmt_double(q.value) +
                 (q.finite ? "" : " (unreachable: +inf sentinel)") + ", T* = " + fmt_double(q.t_star));
    return kExitOk;
}

inline EventSpec make_event(const LdpConfig& lc, const Problem& p, const Control& benchmark_control,
                            const Vec& x0, int sim_steps) {
    if (lc.event == "endpoint") return EventSpec::endpoint(lc.coordinate, lc.level, lc.direction);
    if (lc.event == "running_sup") return EventSpec::running_sup(lc.coordinate, lc.level);
    if (lc.event == "tube") {
        // reference on the simulation grid so tube distances share knots
        GridPath ref = solve_skeleton(p, x0, benchmark_control.resample(sim_steps)).path;
        return EventSpec::tube(std::move(ref), lc.tube_radius);
    }
    throw ConfigError("ldp/event", "unknown event '" + lc.event + "'");
}

inline int run_ldp(const RunConfig& cfg, ArtifactSink& sink) {
    if (!cfg.ldp) throw ConfigError("ldp", "section required for this command");
    const Problem p = cfg.problem.build();
    const auto& lc = *cfg.ldp;
    const SimConfig base = sim_config(cfg, cfg.noise.epsilon.front());

    // the tilt (and tube center) steers to the event level; the rate benchmark
    // steers to the configured dominant target, which for tube events is
    // usually the cheapest point of the tube rather than its center
    Vec y_target = zeros(static_cast<std::size_t>(p.dim()));
    y_target[static_cast<std::size_t>(lc.coordinate)] = lc.level;
    y_target = p.domain().project(y_target);
    const MinimizeResult bench = minimize_action(p, lc.x0, y_target, lc.benchmark_T, lc.opts);
    Control tilt = bench.control;
    double benchmark_value = bench.action.total();
    if (lc.benchmark_level && *lc.benchmark_level != lc.level) {
        Vec yb = zeros(static_cast<std::size_t>(p.dim()));
        yb[static_cast<std::size_t>(lc.coordinate)] = *lc.benchmark_level;
        benchmark_value =
            minimize_action(p, lc.x0, p.domain().project(yb), lc.benchmark_T, lc.opts).action.total();
    }

    const EventSpec event = make_event(lc, p, bench.control, lc.x0, base.steps);

    LadderOptions lo;
    lo.n_rep = {lc.n_rep};
    lo.mode = lc.mode == "plain" ? EstimatorMode::plain : EstimatorMode::importance_sampled;
    if (lo.mode == EstimatorMode::importance_sampled) lo.tilt = tilt;
    lo.benchmark = benchmark_value;
    lo.rate_rel_tol = lc.rate_rel_tol;
    lo.theta = lc.theta;
    const LdpReport ladder = ldp_ladder(p, base, event, cfg.noise.epsilon, lc.x0, lo, cfg.noise.seed);
    sink.add_csv("ldp_ladder.csv", ldp_csv(ladder));
    sink.add_json("ldp_ladder.json", ldp_json(ladder));

    bool pass = ladder.pass;
    const std::vector<Vec> x0_set = lc.x0_set.empty() ? std::vector<Vec>{lc.x0} : lc.x0_set;
    if (lc.fw_check) {
        FwOptions fo;
        fo.n_rep = lc.n_rep;
        const FwReport fw = fw_bound_check(p, base, x0_set, tilt, lc.delta, lc.theta, lc.m_prime,
                                           cfg.noise.epsilon, fo, cfg.noise.seed);
        sink.add_json("fw_check.json", fw_json(fw));
        pass = pass && fw.pass;
    }
    if (lc.dz_check) {
        DzOptions dz;
        dz.n_rep = lc.n_rep;
        dz.open_tilt = tilt;
        dz.benchmark_open = benchmark_value;
        dz.benchmark_closed = benchmark_value;
        dz.theta = lc.theta;
        const EventSpec open_ev =
            EventSpec::tube(solve_skeleton(p, lc.x0, tilt.resample(base.steps)).path, lc.tube_radius);
        const DzReport rep = dz_bound_check(p, base, x0_set, open_ev, event, cfg.noise.epsilon, dz,
                                            cfg.noise.seed);
        sink.add_json("dz_check.json", dz_json(rep));
        pass = pass && rep.pass;
    }
    say(cfg, std::string("ldp: ") + (pass ? "pass" : "FAIL") +
                 (ladder.advice.empty() ? "" : " (" + ladder.advice + ")"));
    return pass ? kExitOk : kExitCheckFailed;
}

inline int run_invariant(const RunConfig& cfg, ArtifactSink& sink) {
    if (!cfg.invariant) throw ConfigError("invariant", "section required for this command");
    const Problem p = cfg.problem.build();
    const auto& ic = *cfg.invariant;
    const SimConfig base = sim_config(cfg, cfg.noise.epsilon.front());

    const AuditReport audit =
        audit_hypotheses(p, cfg.audit.n_samples, cfg.audit.radius, cfg.noise.seed, cfg.audit.tolerance);
    if (!audit.regime_ok())
        say(cfg, "invariant: warning, audited regime label is '" + audit.regime_label + "'");

    ErgodicConfig erg;
    erg.burn_in = ic.burn_in;
    erg.horizon = ic.horizon;
    erg.thin = ic.thin;
    erg.x0 = ic.x0;
    SlackPolicy slack;
    const TailReport tail = invariant_tail_experiment(p, base, cfg.noise.epsilon, ic.r_list, ic.beta,
                                                      erg, slack, cfg.noise.seed);
    sink.add_json("invariant_tail.json", tail_json(tail));
    {
        CsvWriter w({"epsilon", "r", "mu_hat", "se", "bound", "rate", "censored", "bound_ok"});
        for (const auto& row : tail.rows)
            w.row({row.epsilon, row.r, row.mu_hat, row.se, row.bound, row.rate,
                   row.censored ? 1.0 : 0.0, row.bound_ok ? 1.0 : 0.0});
        sink.add_csv("invariant_tail.csv", w);
    }

    bool pass = tail.pass;
    if (ic.qv_compare) {
        QvTailOptions qo;
        qo.delta = ic.delta;
        qo.theta = ic.theta;
        qo.s = ic.s;
        qo.T_grid = ic.T_grid;
        qo.min_opts = ic.opts;
        qo.ergodic = erg;
        const QvTailReport qv =
            quasipotential_vs_tail(p, base, cfg.noise.epsilon, ic.r_list, qo, cfg.noise.seed);
        sink.add_json("qv_tail.json", qv_tail_json(qv));
        pass = pass && qv.pass;
    }
    say(cfg, std::string("invariant: ") + (pass ? "pass" : "FAIL"));
    return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace rundetail

/// Dispatch one subcommand against a parsed configuration; writes the
/// artifacts, the echoed resolved_config.json and a manifest with content
/// hashes into the output directory.
inline int run_command(const std::string& cmd, const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ArtifactSink sink(cfg.output.dir, cfg.output.format);
    sink.add("resolved_config.json", cfg.resolved.dump(2) + "\n");
    int status = kExitOk;
    if (cmd == "audit")
        status = rundetail::run_audit(cfg, sink);
    else if (cmd == "simulate")
        status = rundetail::run_simulate(cfg, sink);
    else if (cmd == "skeleton")
        status = rundetail::run_skeleton(cfg, sink);
    else if (cmd == "action")
        status = rundetail::run_action(cfg, sink);
    else if (cmd == "quasipotential")
        status = rundetail::run_quasipotential(cfg, sink);
    else if (cmd == "ldp")
        status = rundetail::run_ldp(cfg, sink);
    else if (cmd == "invariant")
        status = rundetail::run_invariant(cfg, sink);
    else
        throw ConfigError("command", "unknown command '" + cmd + "'");
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    sink.flush(cmd, cfg.noise.seed, wall_ms);
    return status;
}

}  // namespace mvsde
