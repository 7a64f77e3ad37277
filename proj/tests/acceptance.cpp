// Acceptance suite: one binary, one pass/fail line per criterion.
// Run with no arguments for all criteria, or with a criterion number.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvsde/mvsde.hpp"
#include "test_problems.hpp"

using namespace mvsde;
namespace fs = std::filesystem;

namespace {

struct Checker {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }

    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

double gauss_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Vec random_point(RngStream& rng, int d, double spread) {
    Vec x(static_cast<std::size_t>(d));
    for (double& v : x) v = spread * rng.normal();
    return x;
}

// --- criterion 1: operator calculus ---------------------------------------
void criterion_operator_calculus(Checker& c) {
    std::vector<ConvexDomain> domains{
        ConvexDomain::whole_space(2), ConvexDomain::halfline_nonneg(),
        ConvexDomain::box({-1.0, -1.0}, {1.0, 1.0}), ConvexDomain::ball({0.0, 0.0}, 1.0),
        ConvexDomain::halfspace_intersection(
            {{{1.0, 0.0}, 1.0}, {{-1.0, 0.0}, 1.0}, {{0.0, 1.0}, 2.0}, {{1.0, 1.0}, 2.5}}, 2)};
    std::vector<MonotoneOp> ops;
    ops.push_back(MonotoneOp::zero(2));
    for (auto& d : domains) ops.push_back(MonotoneOp::indicator(d));
    ops.push_back(MonotoneOp::convex({PotentialKind::quadratic, 0.5}, 2));
    ops.push_back(MonotoneOp::convex({PotentialKind::abs, 0.3}, 2));
    ops.push_back(MonotoneOp::convex({PotentialKind::power4, 1.0}, 2));

    RngStream rng(2024);
    double worst_idem = 0.0, worst_gap = 0.0, worst_exp = 0.0;
    for (const auto& dom : domains) {
        for (int i = 0; i < 10000; ++i) {
            const Vec x = random_point(rng, dom.dim(), 3.0);
            const Vec p1 = dom.project(x);
            worst_idem = std::max(worst_idem, dist(p1, dom.project(p1)));
        }
    }
    for (const auto& op : ops) {
        for (int i = 0; i < 10000; ++i) {
            const Vec x = random_point(rng, op.dim(), 3.0);
            const Vec y = random_point(rng, op.dim(), 3.0);
            worst_gap = std::min(worst_gap, monotone_gap(op, x, y, 0.5));
            for (double eta : {1e-3, 1.0, 1e3}) {
                if (i % 10 == 0)  // keep the eta sweep at 10^4 draws total per preset
                    worst_exp = std::max(worst_exp, dist(op.resolvent(eta, x), op.resolvent(eta, y)) -
                                                        dist(x, y));
            }
        }
    }
    c.expect(worst_idem <= 1e-12, "projection idempotence");
    c.expect(worst_exp <= 1e-12, "resolvent expansiveness");
    c.expect(worst_gap >= -1e-12, "yosida monotonicity");
    c.note("idem " + fmt_double(worst_idem) + ", gap " + fmt_double(worst_gap));
}

// --- criterion 2: Skorokhod ramp oracle ------------------------------------
void criterion_skorokhod(Checker& c) {
    const Problem p = testing::reflected_ramp();
    SimConfig cfg;
    cfg.epsilon = 0.5;
    cfg.T = 1.0;
    cfg.steps = 1000;
    RngStream rng(1);
    const auto r = simulate_path(p, cfg, {1.0}, rng);
    const double dt = cfg.dt();
    double sup = 0.0;
    for (std::size_t k = 0; k < r.path.times.size(); ++k)
        sup = std::max(sup,
                       std::abs(r.path.states[k][0] - std::max(1.0 - 2.0 * r.path.times[k], 0.0)));
    c.expect(sup <= 2.0 * dt, "sup error " + fmt_double(sup) + " > 2dt");
    const double kvar = total_variation(r.force);
    c.expect(std::abs(kvar - 1.0) <= 2.0 * dt, "|K| = " + fmt_double(kvar));
    c.note("sup " + fmt_double(sup) + ", |K| " + fmt_double(kvar));
}

// --- criterion 3: decay bound ----------------------------------------------
void criterion_decay(Checker& c) {
    const Problem p = testing::strict1d();
    const double l3 = *p.constants().L3;
    const GridPath path = solve_unperturbed(p, {1.5}, 5.0, 5000);
    double worst = 0.0;
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        const double bound = 1.5 * 1.5 * std::exp(-l3 * path.times[k]);
        worst = std::max(worst, norm_sq(path.states[k]) / bound);
    }
    c.expect(worst <= 1.02, "decay slack " + fmt_double(worst));
    c.note("max |X|^2 / bound = " + fmt_double(worst));
}

// --- criterion 4: action oracles -------------------------------------------
void criterion_action(Checker& c) {
    const Problem p = testing::ou1d();
    MinimizeOptions opts;
    opts.cells = 64;
    opts.max_dt = 0.05;  // the Euler skeleton biases the LQ cost by -dt/2
    opts.max_iterations = 300;

    const double lq = 1.0 / (1.0 - std::exp(-2.0));  // 1.156518
    const MinimizeResult r = minimize_action(p, {0.0}, {1.0}, 1.0, opts);
    c.expect(r.converged, "fixed-horizon optimizer did not converge");
    c.expect(std::abs(r.action.total() - lq) <= 0.10 * lq,
             "LQ action " + fmt_double(r.action.total()) + " vs " + fmt_double(lq));

    // quadrature oracle for the quasi-potential: V(y) = -2 int_0^y b/sigma^2 = y^2
    double oracle = 0.0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        const double z0 = i * (1.0 / n), z1 = (i + 1) * (1.0 / n), zm = 0.5 * (z0 + z1);
        auto f = [&](double z) {
            const double sig = p.diffusion({z}).at(0, 0);
            return -2.0 * p.drift({z})[0] / (sig * sig);
        };
        oracle += (1.0 / n) / 6.0 * (f(z0) + 4.0 * f(zm) + f(z1));
    }
    const QuasiPotentialResult q = quasipotential(p, {1.0}, {1.0, 2.0, 5.0, 10.0}, opts);
    c.expect(q.finite, "quasi-potential sentinel on a reachable target");
    c.expect(std::abs(q.value - oracle) <= 0.10 * oracle,
             "V(1) " + fmt_double(q.value) + " vs oracle " + fmt_double(oracle));
    c.note("LQ " + fmt_double(r.action.total()) + ", V(1) " + fmt_double(q.value));
}

// --- criterion 5: Gaussian rare-event oracle --------------------------------
void criterion_gaussian_ladder(Checker& c) {
    const Problem p = testing::brownian1d();
    SimConfig base;
    base.T = 1.0;
    base.steps = 100;
    base.epsilon = 0.25;

    Control tilt = Control::zero(1.0, 100, 1, 0);
    for (int k = 0; k < tilt.cells; ++k) tilt.h_at(k, 0) = 1.0;

    LadderOptions lo;
    lo.n_rep = {200000};
    lo.mode = EstimatorMode::importance_sampled;
    lo.tilt = tilt;
    lo.benchmark = 0.5;
    lo.rate_rel_tol = 0.15;
    const std::vector<double> eps{0.25, 0.1, 0.05};
    const LdpReport rep =
        ldp_ladder(p, base, EventSpec::endpoint(0, 1.0, +1), eps, {0.0}, lo, 1905);

    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double exact_p = gauss_tail(1.0 / std::sqrt(eps[i]));
        const auto& rung = rep.rungs[i];
        c.expect(std::abs(rung.p_hat - exact_p) <= 3.0 * rung.se,
                 "rung eps=" + fmt_double(eps[i]) + ": p_hat " + fmt_double(rung.p_hat) + " vs " +
                     fmt_double(exact_p) + " (3se " + fmt_double(3.0 * rung.se) + ")");
    }
    c.expect(std::abs(rep.extrapolated_rate - 0.5) <= 0.15 * 0.5,
             "extrapolated rate " + fmt_double(rep.extrapolated_rate));
    c.note("extrapolated " + fmt_double(rep.extrapolated_rate));
}

// --- criterion 6: FW lower bound --------------------------------------------
void criterion_fw_lower(Checker& c) {
    const Problem p = testing::ou1d();
    MinimizeOptions opts;
    opts.cells = 50;
    opts.max_iterations = 250;
    const MinimizeResult steer = minimize_action(p, {0.0}, {1.0}, 1.0, opts);
    c.expect(steer.converged, "steering optimizer did not converge");

    SimConfig base;
    base.T = 1.0;
    base.steps = 100;
    base.epsilon = 0.2;
    FwOptions fo;
    fo.n_rep = 100000;
    fo.lower_mode = EstimatorMode::importance_sampled;
    const FwReport rep = fw_bound_check(p, base, {{0.0}}, steer.control, 0.25, 0.3, 0.5,
                                        {0.2, 0.1, 0.05}, fo, 1906);
    for (const auto& row : rep.rows) {
        if (row.side != "lower") continue;
        c.expect(row.pass, "lower rung eps=" + fmt_double(row.epsilon) + " p_hat " +
                               fmt_double(row.p_hat) + " bound " + fmt_double(row.bound));
    }
    c.note("action benchmark " + fmt_double(rep.control_action));
}

// --- criterion 7: exponential moment ----------------------------------------
void criterion_exp_moment(Checker& c) {
    const Problem p = testing::strict1d();
    SimConfig cfg;
    cfg.epsilon = 0.2;
    cfg.T = 1.0;
    cfg.steps = 500;
    RngStream rng(1907);
    const ExpMomentResult r = exp_moment_probe(p, cfg, {1.0}, 0.1, 2.0, 100000, rng);
    c.expect(r.empirical_mean <= r.bound * 1.05,
             "mean " + fmt_double(r.empirical_mean) + " vs bound " + fmt_double(r.bound));
    c.note("mean " + fmt_double(r.empirical_mean) + ", bound " + fmt_double(r.bound));
}

// --- criterion 8: invariant tail ---------------------------------------------
void criterion_invariant_tail(Checker& c) {
    const Problem p = testing::strict1d();
    SimConfig base;
    base.T = 1.0;
    base.steps = 500;
    base.epsilon = 0.5;
    ErgodicConfig erg;
    erg.burn_in = 10.0;
    erg.horizon = 200.0;
    erg.thin = 0.05;
    erg.x0 = {1.0};
    const TailReport rep =
        invariant_tail_experiment(p, base, {0.5, 0.2}, {0.5, 1.0}, 0.1, erg, SlackPolicy{}, 1908);
    c.expect(rep.bounds_ok, "a tail bound failed");
    c.expect(rep.trend_ok, "tail rate decreased along the ladder");
    std::string rates;
    for (const auto& row : rep.rows)
        rates += " (" + fmt_double(row.epsilon) + "," + fmt_double(row.r) + ")->" +
                 (row.censored ? std::string("censored") : fmt_double(row.rate));
    c.note("rates" + rates);
}

// --- criterion 9: Girsanov sanity ---------------------------------------------
void criterion_girsanov(Checker& c) {
    struct Setup {
        std::string name;
        Problem problem;
        double h;
        double g;
    };
    std::vector<Setup> setups;
    setups.push_back({"brownian", testing::ou1d(), 0.5, 1.0});
    setups.push_back({"jump", testing::purejump1d(), 0.0, 2.0});
    setups.push_back({"mixed", testing::strict1d(), 0.3, 1.5});

    for (const auto& s : setups) {
        SimConfig cfg;
        cfg.epsilon = 0.5;
        cfg.T = 1.0;
        cfg.steps = 100;
        Control tilt = Control::zero(1.0, 100, s.problem.noise_dim(),
                                     static_cast<int>(s.problem.marks().size()));
        for (int k = 0; k < tilt.cells; ++k) {
            for (int j = 0; j < tilt.noise_dim; ++j) tilt.h_at(k, j) = s.h;
            for (int i = 0; i < tilt.n_marks; ++i) tilt.g_at(k, i) = s.g;
        }
        cfg.tilt = tilt;
        RngStream rng(1909, std::hash<std::string>{}(s.name));
        const long reps = 100000;
        double sum = 0.0, sum_sq = 0.0;
        const Vec x0 = zeros(static_cast<std::size_t>(s.problem.dim()));
        for (long rep = 0; rep < reps; ++rep) {
            RngStream r = rng.split(static_cast<std::uint64_t>(rep));
            const double w = std::exp(simulate_tilted_path(s.problem, cfg, x0, r).log_weight);
            sum += w;
            sum_sq += w * w;
        }
        const double mean = sum / static_cast<double>(reps);
        const double se =
            std::sqrt(std::max(0.0, sum_sq / static_cast<double>(reps) - mean * mean) /
                      static_cast<double>(reps));
        c.expect(std::abs(mean - 1.0) <= 3.0 * se,
                 s.name + ": mean " + fmt_double(mean) + " (3se " + fmt_double(3.0 * se) + ")");
        c.note(s.name + " " + fmt_double(mean));
    }
}

// --- criterion 10: CLI determinism ---------------------------------------------
void criterion_determinism(Checker& c) {
    const fs::path config = fs::path(MVSDE_CONFIG_DIR) / "determinism.json";
    const fs::path root = fs::temp_directory_path() / "mvsde_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::vector<std::string> commands{"audit",          "simulate", "skeleton", "action",
                                            "quasipotential", "ldp",      "invariant"};
    for (const auto& cmd : commands) {
        // identical invocations into the same directory, snapshotting between
        // runs: artifact bytes must match exactly
        const fs::path out = root / cmd;
        const fs::path snap = root / (cmd + "_snapshot");
        std::vector<int> codes;
        for (int run = 0; run < 2; ++run) {
            const std::string line = std::string(MVSDE_CLI_PATH) + " " + cmd + " --config " +
                                     config.string() + " --out " + out.string() +
                                     " --quiet > /dev/null 2>&1";
            codes.push_back(WEXITSTATUS(std::system(line.c_str())));
            if (run == 0) {
                fs::remove_all(snap);
                fs::copy(out, snap, fs::copy_options::recursive);
            }
        }
        c.expect(codes[0] == codes[1], cmd + ": exit codes differ");
        c.expect(codes[0] != kExitConfigError, cmd + ": configuration rejected");

        // the manifest's wall time may differ but its artifact hash table must not
        for (const auto& entry : fs::directory_iterator(snap)) {
            const std::string name = entry.path().filename().string();
            if (name == "manifest.json") continue;
            const fs::path other = out / name;
            c.expect(fs::exists(other), cmd + ": " + name + " missing in second run");
            if (fs::exists(other))
                c.expect(slurp(entry.path()) == slurp(other), cmd + ": " + name + " differs");
        }
        const auto m0 = nlohmann::json::parse(slurp(snap / "manifest.json"));
        const auto m1 = nlohmann::json::parse(slurp(out / "manifest.json"));
        c.expect(m0.at("artifacts") == m1.at("artifacts"), cmd + ": manifest hashes differ");
    }
}

struct Criterion {
    int id;
    std::string name;
    std::function<void(Checker&)> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> v{
        {1, "operator-calculus", criterion_operator_calculus},
        {2, "skorokhod-ramp-oracle", criterion_skorokhod},
        {3, "unperturbed-decay-bound", criterion_decay},
        {4, "action-oracles", criterion_action},
        {5, "gaussian-rare-event-ladder", criterion_gaussian_ladder},
        {6, "fw-lower-bound", criterion_fw_lower},
        {7, "exponential-moment", criterion_exp_moment},
        {8, "invariant-tail", criterion_invariant_tail},
        {9, "girsanov-unbiasedness", criterion_girsanov},
        {10, "cli-determinism", criterion_determinism}};
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);
    int failures = 0;
    for (const auto& cr : criteria()) {
        if (only != 0 && cr.id != only) continue;
        Checker c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (c.ok ? "[PASS] " : "[FAIL] ") << cr.id << " " << cr.name << " ("
                  << fmt_double(secs) << " s)" << (c.detail.empty() ? "" : " -- " + c.detail)
                  << "\n";
        if (!c.ok) ++failures;
    }
    return failures;
}
