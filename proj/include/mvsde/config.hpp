#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mvsde/action.hpp"
#include "mvsde/ldp.hpp"
#include "mvsde/model.hpp"
#include "mvsde/simulate.hpp"

namespace mvsde {

using json = nlohmann::json;

/// Configuration error with a field path, raised for unknown keys, type
/// mismatches and missing required fields.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& path, const std::string& what)
        : std::invalid_argument("config error at '" + path + "': " + what) {}
};

namespace cfgdetail {

inline void require_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError(path + "/" + it.key(), "unknown key");
    }
}

template <typename T>
T get_req(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) throw ConfigError(path + "/" + key, "missing required field");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + "/" + key, std::string("type mismatch: ") + e.what());
    }
}

template <typename T>
T get_opt(const json& obj, const std::string& path, const char* key, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path + "/" + key, std::string("type mismatch: ") + e.what());
    }
}

inline Vec get_vec(const json& obj, const std::string& path, const char* key, std::size_t dim) {
    Vec v = get_req<Vec>(obj, path, key);
    if (v.size() != dim)
        throw ConfigError(path + "/" + key, "expected " + std::to_string(dim) + " entries");
    return v;
}

}  // namespace cfgdetail

// ---------------------------------------------------------------------------
// Problem section
// ---------------------------------------------------------------------------

inline ConvexDomain parse_domain(const json& j, const std::string& path, int d) {
    using namespace cfgdetail;
    require_keys(j, path, {"kind", "lo", "hi", "center", "radius", "halfspaces"});
    const std::string kind = get_req<std::string>(j, path, "kind");
    if (kind == "whole_space") return ConvexDomain::whole_space(d);
    if (kind == "halfline_nonneg") {
        if (d != 1) throw ConfigError(path, "halfline_nonneg requires d = 1");
        return ConvexDomain::halfline_nonneg();
    }
    if (kind == "box")
        return ConvexDomain::box(get_vec(j, path, "lo", static_cast<std::size_t>(d)),
                                 get_vec(j, path, "hi", static_cast<std::size_t>(d)));
    if (kind == "ball")
        return ConvexDomain::ball(get_vec(j, path, "center", static_cast<std::size_t>(d)),
                                  get_req<double>(j, path, "radius"));
    if (kind == "halfspace_intersection") {
        std::vector<Halfspace> hs;
        if (!j.contains("halfspaces")) throw ConfigError(path + "/halfspaces", "missing required field");
        for (std::size_t i = 0; i < j.at("halfspaces").size(); ++i) {
            const json& h = j.at("halfspaces").at(i);
            const std::string hp = path + "/halfspaces/" + std::to_string(i);
            require_keys(h, hp, {"normal", "offset"});
            hs.push_back({get_vec(h, hp, "normal", static_cast<std::size_t>(d)),
                          get_req<double>(h, hp, "offset")});
        }
        return ConvexDomain::halfspace_intersection(std::move(hs), d);
    }
    throw ConfigError(path + "/kind", "unknown domain kind '" + kind + "'");
}

inline MonotoneOp parse_operator(const json& j, const std::string& path, int d) {
    using namespace cfgdetail;
    require_keys(j, path, {"kind", "domain", "potential", "scale"});
    const std::string kind = get_req<std::string>(j, path, "kind");
    if (kind == "zero") return MonotoneOp::zero(d);
    if (kind == "indicator") {
        if (!j.contains("domain")) throw ConfigError(path + "/domain", "missing required field");
        return MonotoneOp::indicator(parse_domain(j.at("domain"), path + "/domain", d));
    }
    if (kind == "convex") {
        const std::string pot = get_req<std::string>(j, path, "potential");
        ConvexPotential cp;
        cp.scale = get_opt<double>(j, path, "scale", 1.0);
        if (pot == "quadratic")
            cp.kind = PotentialKind::quadratic;
        else if (pot == "abs")
            cp.kind = PotentialKind::abs;
        else if (pot == "power4")
            cp.kind = PotentialKind::power4;
        else
            throw ConfigError(path + "/potential", "unknown potential '" + pot + "'");
        return MonotoneOp::convex(cp, d);
    }
    throw ConfigError(path + "/kind", "unknown operator kind '" + kind + "'");
}

inline DriftSpec parse_drift(const json& j, const std::string& path, int d);

inline std::vector<DriftSpec> parse_drift_terms(const json& j, const std::string& path, int d) {
    std::vector<DriftSpec> out;
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(parse_drift(j.at(i), path + "/" + std::to_string(i), d));
    return out;
}

inline DriftSpec parse_drift(const json& j, const std::string& path, int d) {
    using namespace cfgdetail;
    require_keys(j, path, {"kind", "value", "gain", "cap", "lo", "hi", "factor", "terms"});
    DriftSpec s;
    s.kind = get_req<std::string>(j, path, "kind");
    if (s.kind == "constant" || s.kind == "affine")
        s.constant = get_vec(j, path, "value", static_cast<std::size_t>(d));
    if (s.kind == "linear" || s.kind == "affine" || s.kind == "saturating")
        s.gain = get_req<double>(j, path, "gain");
    if (s.kind == "saturating") s.cap = get_opt<double>(j, path, "cap", 1.0);
    if (s.kind == "clamp") {
        if (j.contains("lo")) s.lo = get_vec(j, path, "lo", static_cast<std::size_t>(d));
        if (j.contains("hi")) s.hi = get_vec(j, path, "hi", static_cast<std::size_t>(d));
    }
    if (s.kind == "scale") s.factor = get_req<double>(j, path, "factor");
    if (s.kind == "clamp" || s.kind == "scale" || s.kind == "sum") {
        if (!j.contains("terms")) throw ConfigError(path + "/terms", "missing required field");
        s.terms = parse_drift_terms(j.at("terms"), path + "/terms", d);
    }
    // validate the preset name eagerly
    eval_drift(s, zeros(static_cast<std::size_t>(d)));
    return s;
}

inline Mat parse_matrix(const json& j, const std::string& path, int rows, int cols) {
    Mat m(rows, cols);
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw ConfigError(path, "expected " + std::to_string(rows) + " rows");
    for (int i = 0; i < rows; ++i) {
        const json& row = j.at(static_cast<std::size_t>(i));
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw ConfigError(path, "expected " + std::to_string(cols) + " columns");
        for (int c = 0; c < cols; ++c) m.at(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline DiffusionSpec parse_diffusion(const json& j, const std::string& path, int d, int l) {
    using namespace cfgdetail;
    require_keys(j, path, {"kind", "matrix", "scale", "cap"});
    DiffusionSpec s;
    s.kind = get_req<std::string>(j, path, "kind");
    if (s.kind == "constant" || s.kind == "norm_clamped") {
        if (!j.contains("matrix")) throw ConfigError(path + "/matrix", "missing required field");
        s.matrix = parse_matrix(j.at("matrix"), path + "/matrix", d, l);
    }
    s.scale = get_opt<double>(j, path, "scale", 1.0);
    s.cap = get_opt<double>(j, path, "cap", 1.0);
    eval_diffusion(s, zeros(static_cast<std::size_t>(d)), d, l);
    return s;
}

inline JumpSpec parse_jump(const json& j, const std::string& path, int d);

inline JumpSpec parse_jump(const json& j, const std::string& path, int d) {
    using namespace cfgdetail;
    require_keys(j, path, {"kind", "value", "scale", "lo", "hi", "terms"});
    JumpSpec s;
    s.kind = get_req<std::string>(j, path, "kind");
    if (s.kind == "constant") s.constant = get_vec(j, path, "value", static_cast<std::size_t>(d));
    s.scale_factor = get_opt<double>(j, path, "scale", 1.0);
    if (s.kind == "mark_scaled_clamp") {
        if (j.contains("lo")) s.lo = get_vec(j, path, "lo", static_cast<std::size_t>(d));
        if (j.contains("hi")) s.hi = get_vec(j, path, "hi", static_cast<std::size_t>(d));
    }
    if (s.kind == "sum" || s.kind == "scale") {
        if (!j.contains("terms")) throw ConfigError(path + "/terms", "missing required field");
        for (std::size_t i = 0; i < j.at("terms").size(); ++i)
            s.terms.push_back(parse_jump(j.at("terms").at(i), path + "/terms/" + std::to_string(i), d));
    }
    return s;
}

struct ProblemConfig {
    int d = 1;
    int l = 1;
    json domain_op;   // resolved operator subdocument
    json drift, diffusion, jump, marks;
    HypothesisConstants constants;
    RegimeSpec regime;
    std::vector<std::string> labels;

    Problem build() const {
        MonotoneOp op = parse_operator(domain_op, "problem/operator", d);
        DriftSpec b = parse_drift(drift, "problem/drift", d);
        DiffusionSpec sig = parse_diffusion(diffusion, "problem/diffusion", d, l);
        JumpSpec f = parse_jump(jump, "problem/jump", d);
        std::vector<Mark> ms;
        for (std::size_t i = 0; i < marks.size(); ++i) {
            const json& m = marks.at(i);
            const std::string mp = "problem/marks/" + std::to_string(i);
            cfgdetail::require_keys(m, mp, {"value", "weight", "l2"});
            Vec val;
            if (m.at("value").is_number())
                val = Vec{m.at("value").get<double>()};
            else
                val = m.at("value").get<Vec>();
            ms.push_back({std::move(val), cfgdetail::get_req<double>(m, mp, "weight"),
                          cfgdetail::get_req<double>(m, mp, "l2")});
        }
        return Problem(d, l, std::move(op), std::move(b), std::move(sig), std::move(f),
                       MarkMeasure(std::move(ms)), constants, regime, labels);
    }
};

inline ProblemConfig parse_problem(const json& j, const std::string& path) {
    using namespace cfgdetail;
    require_keys(j, path,
                 {"d", "l", "operator", "drift", "diffusion", "jump", "marks", "constants",
                  "regime", "labels"});
    ProblemConfig pc;
    pc.d = get_req<int>(j, path, "d");
    pc.l = get_req<int>(j, path, "l");
    if (!j.contains("operator")) throw ConfigError(path + "/operator", "missing required field");
    pc.domain_op = j.at("operator");
    pc.drift = j.contains("drift") ? j.at("drift") : json{{"kind", "zero"}};
    pc.diffusion = j.contains("diffusion") ? j.at("diffusion") : json{{"kind", "zero"}};
    pc.jump = j.contains("jump") ? j.at("jump") : json{{"kind", "zero"}};
    pc.marks = j.contains("marks") ? j.at("marks") : json::array();

    const json cst = j.contains("constants") ? j.at("constants") : json::object();
    require_keys(cst, path + "/constants", {"L1", "gamma1", "gamma2", "L_sigma", "L3"});
    pc.constants.L1 = get_opt<double>(cst, path + "/constants", "L1", 0.0);
    pc.constants.gamma1 = get_opt<double>(cst, path + "/constants", "gamma1", 0.0);
    pc.constants.gamma2 = get_opt<double>(cst, path + "/constants", "gamma2", 1.0);
    if (cst.contains("L_sigma")) pc.constants.L_sigma = cst.at("L_sigma").get<double>();
    if (cst.contains("L3")) pc.constants.L3 = cst.at("L3").get<double>();

    const json reg = j.contains("regime") ? j.at("regime") : json{{"kind", "strict"}};
    require_keys(reg, path + "/regime", {"kind", "inner_radius", "L3"});
    pc.regime.kind = get_opt<std::string>(reg, path + "/regime", "kind", "strict");
    pc.regime.inner_radius = get_opt<double>(reg, path + "/regime", "inner_radius", 0.0);
    if (reg.contains("L3")) pc.regime.L3 = reg.at("L3").get<double>();

    pc.labels = get_opt<std::vector<std::string>>(j, path, "labels", {});
    return pc;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct GridConfig {
    double T = 1.0;
    int steps = 1000;
};

struct NoiseConfig {
    std::vector<double> epsilon{0.1};
    std::uint64_t seed = 0;
};

struct AuditConfig {
    int n_samples = 2000;
    double radius = 1.0;
    double tolerance = 1e-6;
};

struct ControlConfig {
    Vec h_const;           // per noise coordinate, default zeros
    std::vector<double> g_const;  // per mark, default ones
    int cells = 0;         // 0 = grid steps

    Control build(double T, int default_cells, int l, int n_marks) const {
        Control c = Control::zero(T, cells > 0 ? cells : default_cells, l, n_marks);
        for (int k = 0; k < c.cells; ++k) {
            for (int j = 0; j < l && j < static_cast<int>(h_const.size()); ++j)
                c.h_at(k, j) = h_const[static_cast<std::size_t>(j)];
            for (int i = 0; i < n_marks && i < static_cast<int>(g_const.size()); ++i)
                c.g_at(k, i) = g_const[static_cast<std::size_t>(i)];
        }
        return c;
    }
};

struct SimulateConfig {
    Vec x0;
    std::optional<ControlConfig> tilt;
};

struct SkeletonConfig {
    Vec x0;
    ControlConfig control;
    std::optional<double> yosida_eta;
};

struct ActionConfig {
    Vec x0;                 // default zeros
    Vec y;
    std::vector<double> T_grid{1.0};
    MinimizeOptions opts;
    std::optional<double> level_s;
    std::vector<Vec> level_grid;
};

struct LdpConfig {
    std::string event = "endpoint";  // endpoint | running_sup | tube
    int coordinate = 0;
    double level = 1.0;
    int direction = +1;
    double tube_radius = 0.25;
    std::string mode = "plain";  // plain | importance_sampled
    long n_rep = 10000;
    Vec x0;
    std::vector<Vec> x0_set;     // fw/dz spot-check set, default {x0}
    double delta = 0.25, theta = 0.3, m_prime = 0.5;
    double rate_rel_tol = 0.25;
    bool fw_check = false;
    bool dz_check = false;
    MinimizeOptions opts;            // benchmark optimizer
    double benchmark_T = 1.0;
    std::optional<double> benchmark_level;  // the event's dominant target; defaults to `level`
};

struct InvariantConfig {
    std::vector<double> r_list{0.5, 1.0};
    double beta = 0.1;
    double burn_in = 10.0;
    double horizon = 200.0;
    double thin = 0.05;
    Vec x0;
    bool qv_compare = false;
    double delta = 0.25, theta = 0.5, s = 1.0;
    std::vector<double> T_grid{1.0, 2.0, 5.0};
    MinimizeOptions opts;
};

struct OutputConfig {
    std::string dir = "out";
    std::string format = "both";  // csv | json | both
    bool quiet = false;
};

struct RunConfig {
    ProblemConfig problem;
    GridConfig grid;
    NoiseConfig noise;
    AuditConfig audit;
    std::optional<SimulateConfig> simulate;
    std::optional<SkeletonConfig> skeleton;
    std::optional<ActionConfig> action;
    std::optional<LdpConfig> ldp;
    std::optional<InvariantConfig> invariant;
    OutputConfig output;

    json resolved;  // the fully materialized document (echoed to disk)
};

namespace cfgdetail {

inline MinimizeOptions parse_min_opts(const json& j, const std::string& path) {
    require_keys(j, path,
                 {"cells", "max_dt", "penalty_schedule", "max_iterations", "fd_step", "step_init",
                  "grad_tol", "endpoint_gap_rel", "t_tie_rel", "member_rel_tol",
                  "start_radius_ladder"});
    MinimizeOptions o;
    o.cells = get_opt<int>(j, path, "cells", o.cells);
    if (j.contains("max_dt")) o.max_dt = j.at("max_dt").get<double>();
    o.penalty_schedule = get_opt<std::vector<double>>(j, path, "penalty_schedule", o.penalty_schedule);
    o.max_iterations = get_opt<int>(j, path, "max_iterations", o.max_iterations);
    o.fd_step = get_opt<double>(j, path, "fd_step", o.fd_step);
    o.step_init = get_opt<double>(j, path, "step_init", o.step_init);
    o.grad_tol = get_opt<double>(j, path, "grad_tol", o.grad_tol);
    o.endpoint_gap_rel = get_opt<double>(j, path, "endpoint_gap_rel", o.endpoint_gap_rel);
    o.t_tie_rel = get_opt<double>(j, path, "t_tie_rel", o.t_tie_rel);
    o.member_rel_tol = get_opt<double>(j, path, "member_rel_tol", o.member_rel_tol);
    o.start_radius_ladder =
        get_opt<std::vector<double>>(j, path, "start_radius_ladder", o.start_radius_ladder);
    return o;
}

inline json emit_min_opts(const MinimizeOptions& o) {
    json out{{"cells", o.cells},
                {"penalty_schedule", o.penalty_schedule},
                {"max_iterations", o.max_iterations},
                {"fd_step", o.fd_step},
                {"step_init", o.step_init},
                {"grad_tol", o.grad_tol},
                {"endpoint_gap_rel", o.endpoint_gap_rel},
                {"t_tie_rel", o.t_tie_rel},
                {"member_rel_tol", o.member_rel_tol},
                {"start_radius_ladder", o.start_radius_ladder}};
    if (std::isfinite(o.max_dt)) out["max_dt"] = o.max_dt;
    return out;
}

inline ControlConfig parse_control(const json& j, const std::string& path) {
    require_keys(j, path, {"h_const", "g_const", "cells"});
    ControlConfig c;
    c.h_const = get_opt<Vec>(j, path, "h_const", {});
    c.g_const = get_opt<std::vector<double>>(j, path, "g_const", {});
    c.cells = get_opt<int>(j, path, "cells", 0);
    return c;
}

inline json emit_control(const ControlConfig& c) {
    return json{{"h_const", c.h_const}, {"g_const", c.g_const}, {"cells", c.cells}};
}

inline std::vector<Vec> parse_vec_list(const json& j, const std::string& path, int d) {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        Vec v = j.at(i).is_number() ? Vec{j.at(i).get<double>()} : j.at(i).get<Vec>();
        if (v.size() != static_cast<std::size_t>(d))
            throw ConfigError(path + "/" + std::to_string(i), "expected a d-vector");
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace cfgdetail

struct RunConfig;
inline json emit_config(const RunConfig& cfg);

/// Parse and validate a configuration document. Every key is checked against a
/// whitelist (unknown keys are errors), the seed is mandatory, and all defaults
/// are materialized into cfg.resolved, which round-trips through parse_config.
inline RunConfig parse_config(const std::string& text) {
    using namespace cfgdetail;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("document", std::string("not valid JSON: ") + e.what());
    }
    require_keys(j, "",
                 {"problem", "grid", "noise", "audit", "simulate", "skeleton", "action", "ldp",
                  "invariant", "output"});

    RunConfig cfg;
    if (!j.contains("problem")) throw ConfigError("problem", "missing required section");
    cfg.problem = parse_problem(j.at("problem"), "problem");
    const int d = cfg.problem.d;

    const json grid = j.contains("grid") ? j.at("grid") : json::object();
    require_keys(grid, "grid", {"T", "steps"});
    cfg.grid.T = get_opt<double>(grid, "grid", "T", 1.0);
    cfg.grid.steps = get_opt<int>(grid, "grid", "steps", 1000);

    if (!j.contains("noise")) throw ConfigError("noise", "missing required section");
    const json noise = j.at("noise");
    require_keys(noise, "noise", {"epsilon", "seed"});
    if (!noise.contains("seed")) throw ConfigError("noise/seed", "missing required field (no entropy defaults)");
    cfg.noise.seed = noise.at("seed").get<std::uint64_t>();
    if (noise.contains("epsilon")) {
        if (noise.at("epsilon").is_number())
            cfg.noise.epsilon = {noise.at("epsilon").get<double>()};
        else
            cfg.noise.epsilon = noise.at("epsilon").get<std::vector<double>>();
    }
    for (double e : cfg.noise.epsilon)
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("noise/epsilon", "entries must lie in (0,1)");

    const json audit = j.contains("audit") ? j.at("audit") : json::object();
    require_keys(audit, "audit", {"n_samples", "radius", "tolerance"});
    cfg.audit.n_samples = get_opt<int>(audit, "audit", "n_samples", 2000);
    cfg.audit.radius = get_opt<double>(audit, "audit", "radius", 1.0);
    cfg.audit.tolerance = get_opt<double>(audit, "audit", "tolerance", 1e-6);

    if (j.contains("simulate")) {
        const json s = j.at("simulate");
        require_keys(s, "simulate", {"x0", "tilt"});
        SimulateConfig sc;
        sc.x0 = get_vec(s, "simulate", "x0", static_cast<std::size_t>(d));
        if (s.contains("tilt")) sc.tilt = parse_control(s.at("tilt"), "simulate/tilt");
        cfg.simulate = std::move(sc);
    }
    if (j.contains("skeleton")) {
        const json s = j.at("skeleton");
        require_keys(s, "skeleton", {"x0", "control", "yosida_eta"});
        SkeletonConfig sc;
        sc.x0 = get_vec(s, "skeleton", "x0", static_cast<std::size_t>(d));
        if (s.contains("control")) sc.control = parse_control(s.at("control"), "skeleton/control");
        if (s.contains("yosida_eta")) sc.yosida_eta = s.at("yosida_eta").get<double>();
        cfg.skeleton = std::move(sc);
    }
    if (j.contains("action")) {
        const json a = j.at("action");
        require_keys(a, "action", {"x0", "y", "T_grid", "optimizer", "level_s", "level_grid"});
        ActionConfig ac;
        ac.x0 = a.contains("x0") ? get_vec(a, "action", "x0", static_cast<std::size_t>(d))
                                 : zeros(static_cast<std::size_t>(d));
        ac.y = get_vec(a, "action", "y", static_cast<std::size_t>(d));
        ac.T_grid = get_opt<std::vector<double>>(a, "action", "T_grid", ac.T_grid);
        if (a.contains("optimizer")) ac.opts = parse_min_opts(a.at("optimizer"), "action/optimizer");
        if (a.contains("level_s")) ac.level_s = a.at("level_s").get<double>();
        if (a.contains("level_grid"))
            ac.level_grid = parse_vec_list(a.at("level_grid"), "action/level_grid", d);
        cfg.action = std::move(ac);
    }
    if (j.contains("ldp")) {
        const json l = j.at("ldp");
        require_keys(l, "ldp",
                     {"event", "coordinate", "level", "direction", "tube_radius", "mode", "n_rep",
                      "x0", "x0_set", "delta", "theta", "m_prime", "rate_rel_tol", "fw_check",
                      "dz_check", "optimizer", "benchmark_T", "benchmark_level"});
        LdpConfig lc;
        lc.event = get_opt<std::string>(l, "ldp", "event", "endpoint");
        lc.coordinate = get_opt<int>(l, "ldp", "coordinate", 0);
        lc.level = get_opt<double>(l, "ldp", "level", 1.0);
        lc.direction = get_opt<int>(l, "ldp", "direction", +1);
        lc.tube_radius = get_opt<double>(l, "ldp", "tube_radius", 0.25);
        lc.mode = get_opt<std::string>(l, "ldp", "mode", "plain");
        if (lc.mode != "plain" && lc.mode != "importance_sampled")
            throw ConfigError("ldp/mode", "must be plain or importance_sampled");
        lc.n_rep = get_opt<long>(l, "ldp", "n_rep", 10000);
        lc.x0 = l.contains("x0") ? get_vec(l, "ldp", "x0", static_cast<std::size_t>(d))
                                 : zeros(static_cast<std::size_t>(d));
        if (l.contains("x0_set")) lc.x0_set = parse_vec_list(l.at("x0_set"), "ldp/x0_set", d);
        lc.delta = get_opt<double>(l, "ldp", "delta", 0.25);
        lc.theta = get_opt<double>(l, "ldp", "theta", 0.3);
        lc.m_prime = get_opt<double>(l, "ldp", "m_prime", 0.5);
        lc.rate_rel_tol = get_opt<double>(l, "ldp", "rate_rel_tol", 0.25);
        lc.fw_check = get_opt<bool>(l, "ldp", "fw_check", false);
        lc.dz_check = get_opt<bool>(l, "ldp", "dz_check", false);
        if (l.contains("optimizer")) lc.opts = parse_min_opts(l.at("optimizer"), "ldp/optimizer");
        lc.benchmark_T = get_opt<double>(l, "ldp", "benchmark_T", 1.0);
        if (l.contains("benchmark_level")) lc.benchmark_level = l.at("benchmark_level").get<double>();
        cfg.ldp = std::move(lc);
    }
    if (j.contains("invariant")) {
        const json v = j.at("invariant");
        require_keys(v, "invariant",
                     {"r_list", "beta", "burn_in", "horizon", "thin", "x0", "qv_compare", "delta",
                      "theta", "s", "T_grid", "optimizer"});
        InvariantConfig ic;
        ic.r_list = get_opt<std::vector<double>>(v, "invariant", "r_list", ic.r_list);
        ic.beta = get_opt<double>(v, "invariant", "beta", ic.beta);
        ic.burn_in = get_opt<double>(v, "invariant", "burn_in", ic.burn_in);
        ic.horizon = get_opt<double>(v, "invariant", "horizon", ic.horizon);
        ic.thin = get_opt<double>(v, "invariant", "thin", ic.thin);
        ic.x0 = v.contains("x0") ? get_vec(v, "invariant", "x0", static_cast<std::size_t>(d))
                                 : zeros(static_cast<std::size_t>(d));
        ic.qv_compare = get_opt<bool>(v, "invariant", "qv_compare", false);
        ic.delta = get_opt<double>(v, "invariant", "delta", ic.delta);
        ic.theta = get_opt<double>(v, "invariant", "theta", ic.theta);
        ic.s = get_opt<double>(v, "invariant", "s", ic.s);
        ic.T_grid = get_opt<std::vector<double>>(v, "invariant", "T_grid", ic.T_grid);
        if (v.contains("optimizer")) ic.opts = parse_min_opts(v.at("optimizer"), "invariant/optimizer");
        cfg.invariant = std::move(ic);
    }

    const json out = j.contains("output") ? j.at("output") : json::object();
    require_keys(out, "output", {"dir", "format", "quiet"});
    cfg.output.dir = get_opt<std::string>(out, "output", "dir", "out");
    cfg.output.format = get_opt<std::string>(out, "output", "format", "both");
    if (cfg.output.format != "csv" && cfg.output.format != "json" && cfg.output.format != "both")
        throw ConfigError("output/format", "must be csv, json or both");
    cfg.output.quiet = get_opt<bool>(out, "output", "quiet", false);

    cfg.resolved = emit_config(cfg);
    return cfg;
}

/// Emit the fully materialized configuration document; parse_config(emit(cfg))
/// reproduces cfg exactly.
inline json emit_config(const RunConfig& cfg) {
    using namespace cfgdetail;
    json j;
    json prob;
    prob["d"] = cfg.problem.d;
    prob["l"] = cfg.problem.l;
    prob["operator"] = cfg.problem.domain_op;
    prob["drift"] = cfg.problem.drift;
    prob["diffusion"] = cfg.problem.diffusion;
    prob["jump"] = cfg.problem.jump;
    prob["marks"] = cfg.problem.marks;
    json cst{{"L1", cfg.problem.constants.L1},
             {"gamma1", cfg.problem.constants.gamma1},
             {"gamma2", cfg.problem.constants.gamma2}};
    if (cfg.problem.constants.L_sigma) cst["L_sigma"] = *cfg.problem.constants.L_sigma;
    if (cfg.problem.constants.L3) cst["L3"] = *cfg.problem.constants.L3;
    prob["constants"] = cst;
    json reg{{"kind", cfg.problem.regime.kind}, {"inner_radius", cfg.problem.regime.inner_radius}};
    if (cfg.problem.regime.L3) reg["L3"] = *cfg.problem.regime.L3;
    prob["regime"] = reg;
    prob["labels"] = cfg.problem.labels;
    j["problem"] = prob;

    j["grid"] = json{{"T", cfg.grid.T}, {"steps", cfg.grid.steps}};
    j["noise"] = json{{"epsilon", cfg.noise.epsilon}, {"seed", cfg.noise.seed}};
    j["audit"] = json{{"n_samples", cfg.audit.n_samples},
                      {"radius", cfg.audit.radius},
                      {"tolerance", cfg.audit.tolerance}};
    if (cfg.simulate) {
        json s{{"x0", cfg.simulate->x0}};
        if (cfg.simulate->tilt) s["tilt"] = emit_control(*cfg.simulate->tilt);
        j["simulate"] = s;
    }
    if (cfg.skeleton) {
        json s{{"x0", cfg.skeleton->x0}, {"control", emit_control(cfg.skeleton->control)}};
        if (cfg.skeleton->yosida_eta) s["yosida_eta"] = *cfg.skeleton->yosida_eta;
        j["skeleton"] = s;
    }
    if (cfg.action) {
        json a{{"x0", cfg.action->x0},
               {"y", cfg.action->y},
               {"T_grid", cfg.action->T_grid},
               {"optimizer", emit_min_opts(cfg.action->opts)}};
        if (cfg.action->level_s) a["level_s"] = *cfg.action->level_s;
        if (!cfg.action->level_grid.empty()) a["level_grid"] = cfg.action->level_grid;
        j["action"] = a;
    }
    if (cfg.ldp) {
        const auto& l = *cfg.ldp;
        json lj{{"event", l.event},        {"coordinate", l.coordinate},
                {"level", l.level},        {"direction", l.direction},
                {"tube_radius", l.tube_radius},
                {"mode", l.mode},          {"n_rep", l.n_rep},
                {"x0", l.x0},              {"delta", l.delta},
                {"theta", l.theta},        {"m_prime", l.m_prime},
                {"rate_rel_tol", l.rate_rel_tol},
                {"fw_check", l.fw_check},  {"dz_check", l.dz_check},
                {"optimizer", emit_min_opts(l.opts)},
                {"benchmark_T", l.benchmark_T}};
        if (l.benchmark_level) lj["benchmark_level"] = *l.benchmark_level;
        if (!l.x0_set.empty()) lj["x0_set"] = l.x0_set;
        j["ldp"] = lj;
    }
    if (cfg.invariant) {
        const auto& v = *cfg.invariant;
        j["invariant"] = json{{"r_list", v.r_list},     {"beta", v.beta},
                              {"burn_in", v.burn_in},   {"horizon", v.horizon},
                              {"thin", v.thin},         {"x0", v.x0},
                              {"qv_compare", v.qv_compare},
                              {"delta", v.delta},       {"theta", v.theta},
                              {"s", v.s},               {"T_grid", v.T_grid},
                              {"optimizer", emit_min_opts(v.opts)}};
    }
    j["output"] = json{{"dir", cfg.output.dir}, {"format", cfg.output.format},
                       {"quiet", cfg.output.quiet}};
    return j;
}

}  // namespace mvsde
