#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsde/domain.hpp"
#include "mvsde/ldp.hpp"
#include "mvsde/model.hpp"

namespace mvsde {

// Artifact schema versions, recorded in every manifest.
inline const std::vector<std::pair<std::string, int>>& artifact_schemas() {
    static const std::vector<std::pair<std::string, int>> v{
        {"path_csv", 1},      {"audit_json", 1},     {"ldp_csv", 1},   {"ldp_json", 1},
        {"quasipotential_json", 1}, {"level_set_csv", 1}, {"tail_json", 1}, {"control_json", 1},
        {"manifest", 1}};
    return v;
}

/// Shortest-roundtrip float formatting; deterministic for identical doubles.
inline std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double json_safe(double v) {
    // JSON has no inf/nan; reports use large sentinels plus explicit flags
    if (std::isnan(v)) return -1.0;
    if (std::isinf(v)) return v > 0 ? 1e308 : -1e308;
    return v;
}

class CsvWriter {
public:
    CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
        for (const auto& c : columns_) {
            if (!body_.empty()) body_ += ',';
            body_ += c;
        }
        body_ += '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_.size())
            throw std::runtime_error("csv row does not match the schema (" +
                                     std::to_string(values.size()) + " vs " +
                                     std::to_string(columns_.size()) + " columns)");
        std::string line;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) line += ',';
            line += fmt_double(values[i]);
        }
        body_ += line + '\n';
    }

    void row_mixed(const std::vector<std::string>& values) {
        if (values.size() != columns_.size())
            throw std::runtime_error("csv row does not match the schema");
        std::string line;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) line += ',';
            line += values[i];
        }
        body_ += line + '\n';
    }

    const std::string& text() const { return body_; }

private:
    std::vector<std::string> columns_;
    std::string body_;
};

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Collects artifacts in memory, writes them under the output directory and
/// emits a manifest with per-file content hashes and the schema table.
class ArtifactSink {
public:
    ArtifactSink(std::string dir, std::string format) : dir_(std::move(dir)), format_(std::move(format)) {}

    bool want_csv() const { return format_ == "csv" || format_ == "both"; }
    bool want_json() const { return format_ == "json" || format_ == "both"; }

    void add(const std::string& name, const std::string& bytes) {
        files_.emplace_back(name, bytes);
    }

    void add_json(const std::string& name, const nlohmann::json& j) {
        if (want_json() || name == "resolved_config.json") add(name, j.dump(2) + "\n");
    }

    void add_csv(const std::string& name, const CsvWriter& w) {
        if (want_csv()) add(name, w.text());
    }

    /// Write all artifacts plus manifest.json; returns the manifest.
    nlohmann::json flush(const std::string& command, std::uint64_t seed, double wall_ms) {
        namespace fs = std::filesystem;
        fs::create_directories(dir_);
        nlohmann::json manifest;
        manifest["command"] = command;
        manifest["seed"] = seed;
        manifest["wall_time_ms"] = wall_ms;
        nlohmann::json schemas = nlohmann::json::object();
        for (const auto& [k, v] : artifact_schemas()) schemas[k] = v;
        manifest["schema_versions"] = schemas;
        nlohmann::json arts = nlohmann::json::array();
        for (const auto& [name, bytes] : files_) {
            std::ofstream f(fs::path(dir_) / name, std::ios::binary);
            f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!f) throw std::runtime_error("failed to write artifact " + name);
            arts.push_back({{"file", name}, {"bytes", bytes.size()}, {"fnv64", hex64(fnv1a(bytes))}});
        }
        manifest["artifacts"] = arts;
        std::ofstream mf(fs::path(dir_) / "manifest.json", std::ios::binary);
        mf << manifest.dump(2) << "\n";
        return manifest;
    }

    const std::string& dir() const { return dir_; }

private:
    std::string dir_;
    std::string format_;
    std::vector<std::pair<std::string, std::string>> files_;
};

// ---------------------------------------------------------------------------
// Typed emitters
// ---------------------------------------------------------------------------

/// Path CSV: t, x_1..x_d, K_var (cumulative constraint-force variation),
/// jump_flag (events inside the cell ending at this knot).
inline CsvWriter path_csv(const GridPath& path, const ForcePath& force) {
    std::vector<std::string> cols{"t"};
    for (int i = 1; i <= path.dim(); ++i) cols.push_back("x_" + std::to_string(i));
    cols.push_back("K_var");
    cols.push_back("jump_flag");
    CsvWriter w(std::move(cols));
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        std::vector<double> row{path.times[k]};
        for (double v : path.states[k]) row.push_back(v);
        row.push_back(force.cum_variation.empty() ? 0.0 : force.cum_variation[k]);
        double jumps = 0.0;
        if (k > 0) {
            for (const auto& e : path.jump_log)
                if (e.time > path.times[k - 1] && e.time <= path.times[k]) jumps += 1.0;
        }
        row.push_back(jumps);
        w.row(row);
    }
    return w;
}

inline nlohmann::json path_json(const GridPath& path, const ForcePath& force) {
    nlohmann::json j;
    j["times"] = path.times;
    j["states"] = path.states;
    j["cum_variation"] = force.cum_variation;
    nlohmann::json jl = nlohmann::json::array();
    for (const auto& e : path.jump_log)
        jl.push_back({{"time", e.time}, {"mark", e.mark}, {"jump", e.jump}});
    j["jump_log"] = jl;
    return j;
}

inline nlohmann::json flag_json(const AuditFlag& f) {
    return nlohmann::json{{"checked", f.checked}, {"ok", f.ok}};
}

inline nlohmann::json audit_json(const AuditReport& r) {
    nlohmann::json j;
    j["disclaimer"] = "sampling-based audit: it can falsify hypotheses but never certify them";
    j["n_samples"] = r.n_samples;
    j["radius"] = r.radius;
    j["seed"] = r.seed;
    j["tolerance"] = r.tolerance;
    j["lip_drift"] = json_safe(r.lip_drift);
    j["lip_sigma"] = json_safe(r.lip_sigma);
    j["lip_combined"] = json_safe(r.lip_combined);
    j["lip_jump"] = r.lip_jump;
    j["sup_jump"] = r.sup_jump;
    j["jump_at_origin"] = r.jump_at_origin;
    j["sup_sigma"] = json_safe(r.sup_sigma);
    j["dissip_min"] = json_safe(r.dissip_min);
    j["dissip_min_outside"] = json_safe(r.dissip_min_outside);
    j["exp_integral"] = json_safe(r.exp_integral);
    j["flags"] = {{"op_zero_at_origin", flag_json(r.op_zero_at_origin)},
                  {"lipschitz_drift_diffusion", flag_json(r.lipschitz_drift_diffusion)},
                  {"jump_admissible", flag_json(r.jump_admissible)},
                  {"jump_lipschitz", flag_json(r.jump_lipschitz)},
                  {"jump_bounded", flag_json(r.jump_bounded)},
                  {"exp_integrable", flag_json(r.exp_integrable)},
                  {"diffusion_bounded", flag_json(r.diffusion_bounded)},
                  {"dissipative_strict", flag_json(r.dissipative_strict)},
                  {"dissipative_empirical", flag_json(r.dissipative_empirical)}};
    j["worst_dissip_x"] = r.worst_dissip_x;
    j["worst_lip_x1"] = r.worst_lip_x1;
    j["worst_lip_x2"] = r.worst_lip_x2;
    j["regime_label"] = r.regime_label;
    return j;
}

inline nlohmann::json control_json(const Control& c) {
    nlohmann::json j;
    j["T"] = c.T;
    j["cells"] = c.cells;
    j["noise_dim"] = c.noise_dim;
    j["n_marks"] = c.n_marks;
    j["h"] = c.h;
    j["g"] = c.g;
    return j;
}

inline CsvWriter ldp_csv(const LdpReport& r) {
    CsvWriter w({"epsilon", "p_hat", "se", "n", "rate", "benchmark", "margin", "pass"});
    for (const auto& rung : r.rungs) {
        const double margin = std::isfinite(r.benchmark) && std::isfinite(rung.rate)
                                  ? rung.rate - r.benchmark
                                  : std::numeric_limits<double>::quiet_NaN();
        w.row({rung.epsilon, rung.p_hat, rung.se, static_cast<double>(rung.n), rung.rate,
               r.benchmark, margin, rung.usable ? 1.0 : 0.0});
    }
    return w;
}

inline nlohmann::json ldp_json(const LdpReport& r) {
    nlohmann::json j;
    j["mode"] = r.mode;
    j["benchmark"] = json_safe(r.benchmark);
    j["extrapolated_rate"] = json_safe(r.extrapolated_rate);
    j["fit_slope"] = json_safe(r.fit_slope);
    j["rate_match"] = r.rate_match;
    j["sandwich_ok"] = r.sandwich_ok;
    j["pass"] = r.pass;
    j["advice"] = r.advice;
    nlohmann::json rungs = nlohmann::json::array();
    for (const auto& rung : r.rungs)
        rungs.push_back({{"epsilon", rung.epsilon},
                         {"p_hat", rung.p_hat},
                         {"se", rung.se},
                         {"n", rung.n},
                         {"rate", json_safe(rung.rate)},
                         {"usable", rung.usable},
                         {"note", rung.note}});
    j["rungs"] = rungs;
    return j;
}

inline nlohmann::json fw_json(const FwReport& r) {
    nlohmann::json j;
    j["delta"] = r.delta;
    j["theta"] = r.theta;
    j["m_prime"] = r.m_prime;
    j["control_action"] = r.control_action;
    j["pass"] = r.pass;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"x0", row.x0},
                        {"epsilon", row.epsilon},
                        {"side", row.side},
                        {"p_hat", row.p_hat},
                        {"se", row.se},
                        {"bound", row.bound},
                        {"margin", row.margin},
                        {"pass", row.pass}});
    j["rows"] = rows;
    return j;
}

inline nlohmann::json dz_json(const DzReport& r) {
    nlohmann::json j;
    j["benchmark_open"] = json_safe(r.benchmark_open);
    j["benchmark_closed"] = json_safe(r.benchmark_closed);
    j["liminf_surrogate_worst"] = json_safe(r.liminf_surrogate_worst);
    j["limsup_surrogate_worst"] = json_safe(r.limsup_surrogate_worst);
    j["pass_open"] = r.pass_open;
    j["pass_closed"] = r.pass_closed;
    j["pass"] = r.pass;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"x0", row.x0},
                        {"epsilon", row.epsilon},
                        {"side", row.side},
                        {"p_hat", row.p_hat},
                        {"se", row.se},
                        {"rate", json_safe(row.rate)},
                        {"usable", row.usable}});
    j["rows"] = rows;
    return j;
}

inline nlohmann::json quasipotential_json(const QuasiPotentialResult& q) {
    nlohmann::json j;
    j["y"] = q.y;
    j["finite"] = q.finite;
    j["value"] = json_safe(q.value);
    j["t_star"] = q.t_star;
    j["endpoint_gap"] = json_safe(q.endpoint_gap);
    j["total_iterations"] = q.total_iterations;
    nlohmann::json ph = nlohmann::json::array();
    for (const auto& [T, a] : q.per_horizon) ph.push_back({{"T", T}, {"action", json_safe(a)}});
    j["per_horizon"] = ph;
    if (!q.start_ladder.empty()) {
        nlohmann::json sl = nlohmann::json::array();
        for (const auto& [r, v] : q.start_ladder) sl.push_back({{"start_radius", r}, {"value", json_safe(v)}});
        j["start_ladder"] = sl;
    }
    if (q.control) j["control"] = control_json(*q.control);
    return j;
}

inline CsvWriter level_set_csv(const LevelSetResult& ls) {
    const std::size_t d = ls.entries.empty() ? 1 : ls.entries.front().y.size();
    std::vector<std::string> cols;
    for (std::size_t i = 1; i <= d; ++i) cols.push_back("y_" + std::to_string(i));
    cols.push_back("V_hat");
    cols.push_back("member");
    CsvWriter w(std::move(cols));
    for (const auto& e : ls.entries) {
        std::vector<double> row(e.y.begin(), e.y.end());
        row.push_back(std::isinf(e.value) ? std::numeric_limits<double>::infinity() : e.value);
        row.push_back(e.member ? 1.0 : 0.0);
        w.row(row);
    }
    return w;
}

inline nlohmann::json tail_json(const TailReport& r) {
    nlohmann::json j;
    j["beta"] = r.beta;
    j["bounds_ok"] = r.bounds_ok;
    j["trend_ok"] = r.trend_ok;
    j["pass"] = r.pass;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"epsilon", row.epsilon},
                        {"r", row.r},
                        {"mu_hat", row.mu_hat},
                        {"se", row.se},
                        {"hits", row.hits},
                        {"n", row.n},
                        {"bound", row.bound},
                        {"rate", json_safe(row.rate)},
                        {"censored", row.censored},
                        {"bound_ok", row.bound_ok}});
    j["rows"] = rows;
    return j;
}

inline nlohmann::json qv_tail_json(const QvTailReport& r) {
    nlohmann::json j;
    j["pass"] = r.pass;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"epsilon", row.epsilon},
                        {"check", row.check},
                        {"target", row.target},
                        {"mu_hat", row.mu_hat},
                        {"bound", row.bound},
                        {"benchmark", json_safe(row.benchmark)},
                        {"rate", json_safe(row.rate)},
                        {"margin", row.margin},
                        {"vacuous", row.vacuous},
                        {"pass", row.pass}});
    j["rows"] = rows;
    return j;
}

}  // namespace mvsde
