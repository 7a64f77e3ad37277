#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mvsde/mvsde.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw mvsde::ConfigError("document", "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mvsde: constrained jump-diffusion simulation, action minimization and "
                 "large-deviation Monte Carlo checks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string format;
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    bool quiet = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "configuration file (JSON)")->required();
        sub->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { have_seed = true; });
        sub->add_option("--out", out_dir, "output directory (overrides config)");
        sub->add_option("--format", format, "artifact format: csv|json|both");
        sub->add_flag("--quiet", quiet, "suppress progress lines");
    };

    for (const char* name : {"audit", "simulate", "skeleton", "action", "quasipotential", "ldp",
                             "invariant"})
        add_common(app.add_subcommand(name));

    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    try {
        mvsde::RunConfig cfg = mvsde::parse_config(read_file(config_path));
        if (have_seed) cfg.noise.seed = seed_override;
        if (!out_dir.empty()) cfg.output.dir = out_dir;
        if (!format.empty()) {
            if (format != "csv" && format != "json" && format != "both")
                throw mvsde::ConfigError("--format", "must be csv, json or both");
            cfg.output.format = format;
        }
        if (quiet) cfg.output.quiet = true;
        cfg.resolved = mvsde::emit_config(cfg);
        return mvsde::run_command(cmd, cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mvsde::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return mvsde::kExitCheckFailed;
    }
}
