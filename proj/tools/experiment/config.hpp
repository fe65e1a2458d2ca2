#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/flux.hpp"
#include "diffnet/multigrid.hpp"
#include "diffnet/operators.hpp"

namespace diffnet::experiment {

/// Unknown key, malformed value, or keys that contradict each other.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class Scheme { explicit_chain, fsi, implicit, multigrid };

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

/// Everything a run depends on. Identical configs (and input files) give
/// byte-identical outputs.
struct ExperimentConfig {
    Scheme scheme = Scheme::explicit_chain;
    FluxFunction flux = FluxFunction::linear();
    std::vector<DerivativeWeight> weights{{1, 1.0}};
    double h = 1.0;
    std::optional<double> tau;  // unset = "auto": stable_tau at run start

    std::size_t steps = 10;         // explicit, implicit
    std::size_t cycle_length = 4;   // fsi
    std::optional<std::size_t> cycles;  // fsi cycles (default 1) / multigrid cycles (default 20)
    std::size_t inner_iterations = 20;
    std::optional<double> tol;      // implicit early exit / multigrid stop
    CycleConfig multigrid;

    std::string input;              // signal file; empty = generator
    std::string signal = "step";    // step | ramp | sine | random
    std::optional<std::size_t> n;   // generator size; default 64, or 65 for multigrid
    std::uint64_t seed = 1;

    std::string output;             // final signal; empty = not written
    std::string trajectory;         // CSV; empty = stdout
    std::string mode;               // compare only
    std::string output_dir;         // compare only; empty = no CSV files

    StencilOp op(std::size_t size) const { return StencilOp(weights, h, size); }
    std::size_t cycles_or(std::size_t fallback) const { return cycles.value_or(fallback); }
    std::size_t n_or(std::size_t fallback) const { return n.value_or(fallback); }
};

/// Every recognised key, in a fixed order.
const std::vector<std::string>& config_keys();

/// Collects key=value settings from files and flags; later sets override
/// earlier ones. `build` validates and produces the config.
class ConfigBuilder {
public:
    /// Throws ConfigError naming the key if it is not recognised.
    void set(const std::string& key, const std::string& value);

    /// Reads key=value lines; '#' starts a comment, blank lines are skipped.
    /// A line without '=' is a ParseError carrying its line number.
    void read(std::istream& in);
    void read_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    /// `command` is "run" or "compare"; keys that belong to a different
    /// scheme or command are rejected.
    ExperimentConfig build(const std::string& command = "run") const;

private:
    std::map<std::string, std::string> values_;
};

ExperimentConfig parse_config(std::istream& in, const std::string& command = "run");

/// "m:alpha,m:alpha" -> derivative weights.
std::vector<DerivativeWeight> parse_weights(const std::string& text);
std::string format_weights(const std::vector<DerivativeWeight>& w);

}  // namespace diffnet::experiment
