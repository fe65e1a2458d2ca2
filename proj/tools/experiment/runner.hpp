#pragma once

#include <cstdint>
#include <exception>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "diffnet/signal.hpp"

namespace diffnet::experiment {

/// Process exit codes; every error family gets its own.
enum ExitCode : int {
    exit_ok = 0,
    exit_check_failed = 1,  // a selftest or acceptance comparison failed
    exit_usage = 2,         // bad flags, unknown or conflicting config keys, malformed files
    exit_size = 3,
    exit_capability = 4,
    exit_parameter = 5,
    exit_convergence = 6,
    exit_singularity = 7,
    exit_divergence = 8,
    exit_io = 9,
};

int exit_code_for(const std::exception& e);

/// Deterministic test signals: step (0, then 1 from the midpoint), ramp
/// (0 to 1), sine (one period), random (seeded uniform in [0, 1]).
Signal builtin_signal(const std::string& name, std::size_t n, std::uint64_t seed, double h = 1.0);

/// The run input: the `input` file if given, otherwise the generator.
Signal load_input(const ExperimentConfig& c);

/// A finished run, before anything is written.
struct RunResult {
    Signal final_signal;
    std::string csv;                                         // trajectory or residual history
    std::vector<std::pair<std::string, std::string>> info;  // key, value
};

RunResult execute_run(const ExperimentConfig& c);

/// A finished comparison: one CSV per member scheme plus summary values.
struct CompareResult {
    std::vector<std::pair<std::string, std::string>> files;  // file name, CSV text
    std::vector<std::pair<std::string, std::string>> info;
    bool pass = true;
};

const std::vector<std::string>& compare_modes();
CompareResult execute_compare(const ExperimentConfig& c);

/// Command drivers: write outputs, report errors on `err`, return an exit code.
int run_command(const ExperimentConfig& c, std::ostream& out, std::ostream& err);
int compare_command(const ExperimentConfig& c, std::ostream& out, std::ostream& err);
int selftest_command(std::ostream& out, std::ostream& err);

}  // namespace diffnet::experiment
