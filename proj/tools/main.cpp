#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "experiment/config.hpp"
#include "experiment/runner.hpp"

using namespace diffnet::experiment;

namespace {

const std::map<std::string, std::string>& key_help() {
    static const std::map<std::string, std::string> help{
        {"scheme", "explicit | fsi | implicit | multigrid"},
        {"flux", "linear | pm_exp | charbonnier"},
        {"lambda", "contrast parameter of the nonlinear fluxes"},
        {"weights", "derivative weights m:alpha[,m:alpha...], m in 0..2"},
        {"h", "grid spacing"},
        {"tau", "time step, or 'auto' for the stability bound"},
        {"steps", "explicit / implicit time steps"},
        {"cycle_length", "FSI cycle length L"},
        {"cycles", "FSI cycles or multigrid V-cycles"},
        {"inner_iterations", "fixed-point iterations per implicit step"},
        {"tol", "implicit early-exit residual / multigrid relative residual target"},
        {"levels", "multigrid grid levels"},
        {"pre_smooth", "Jacobi sweeps before coarse correction"},
        {"post_smooth", "Jacobi sweeps after coarse correction"},
        {"omega", "Jacobi damping"},
        {"coarse_solver", "direct | smoother"},
        {"input", "signal file (one value per line, '#' comments)"},
        {"signal", "built-in signal: step | ramp | sine | random"},
        {"n", "built-in signal length"},
        {"seed", "seed for random signals and reduction measurements"},
        {"output", "file for the final signal"},
        {"trajectory", "CSV file for diagnostics (default: stdout)"},
        {"mode", "comparison to run"},
        {"output_dir", "directory for per-scheme CSV files"},
    };
    return help;
}

struct KeyOptions {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* sub, const std::vector<std::string>& skip) {
        sub->add_option("--config", config_path, "file of key = value lines; flags override it");
        for (const auto& key : config_keys()) {
            if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
            options[key] = sub->add_option("--" + key, values[key], key_help().at(key));
        }
    }

    ExperimentConfig build(const std::string& command) {
        ConfigBuilder b;
        if (!config_path.empty()) b.read_file(config_path);
        for (const auto& [key, opt] : options) {
            if (opt->count() > 0) b.set(key, values[key]);
        }
        return b.build(command);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffnet: diffusion schemes as network blocks"};
    app.set_help_flag("--help", "print this help and exit");  // -h would clash with --h (grid spacing)
    app.require_subcommand(1);

    KeyOptions run_opts, compare_opts;
    auto* run = app.add_subcommand("run", "run one scheme and write its diagnostics");
    run_opts.attach(run, {"mode", "output_dir"});
    auto* compare = app.add_subcommand("compare", "run a named comparison experiment");
    compare_opts.attach(compare, {"scheme", "output", "trajectory"});
    auto* selftest = app.add_subcommand("selftest", "run every acceptance suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_usage;
    }

    try {
        if (run->parsed()) return run_command(run_opts.build("run"), std::cout, std::cerr);
        if (compare->parsed()) return compare_command(compare_opts.build("compare"), std::cout, std::cerr);
        if (selftest->parsed()) return selftest_command(std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return exit_usage;
}
