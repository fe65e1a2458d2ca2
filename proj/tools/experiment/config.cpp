#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace diffnet::experiment {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || !std::isfinite(out)) {
        throw ConfigError("invalid number for '" + key + "': '" + v + "'");
    }
    return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("invalid non-negative integer for '" + key + "': '" + v + "'");
    }
    return out;
}

// keys that only make sense for some schemes
const std::map<std::string, std::set<Scheme>>& scheme_keys() {
    static const std::map<std::string, std::set<Scheme>> m{
        {"steps", {Scheme::explicit_chain, Scheme::implicit}},
        {"cycle_length", {Scheme::fsi}},
        {"cycles", {Scheme::fsi, Scheme::multigrid}},
        {"inner_iterations", {Scheme::implicit}},
        {"tol", {Scheme::implicit, Scheme::multigrid}},
        {"levels", {Scheme::multigrid}},
        {"pre_smooth", {Scheme::multigrid}},
        {"post_smooth", {Scheme::multigrid}},
        {"omega", {Scheme::multigrid}},
        {"coarse_solver", {Scheme::multigrid}},
        {"flux", {Scheme::explicit_chain, Scheme::fsi, Scheme::implicit}},
        {"lambda", {Scheme::explicit_chain, Scheme::fsi, Scheme::implicit}},
    };
    return m;
}

}  // namespace

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::explicit_chain: return "explicit";
        case Scheme::fsi: return "fsi";
        case Scheme::implicit: return "implicit";
        case Scheme::multigrid: return "multigrid";
    }
    return "?";
}

Scheme parse_scheme(const std::string& name) {
    for (Scheme s : {Scheme::explicit_chain, Scheme::fsi, Scheme::implicit, Scheme::multigrid}) {
        if (scheme_name(s) == name) return s;
    }
    throw ConfigError("unknown scheme '" + name + "' (expected explicit, fsi, implicit or multigrid)");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "scheme",      "flux",       "lambda",      "weights",       "h",          "tau",
        "steps",       "cycle_length", "cycles",    "inner_iterations", "tol",     "levels",
        "pre_smooth",  "post_smooth", "omega",      "coarse_solver", "input",      "signal",
        "n",           "seed",       "output",      "trajectory",    "mode",       "output_dir",
    };
    return keys;
}

std::vector<DerivativeWeight> parse_weights(const std::string& text) {
    std::vector<DerivativeWeight> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("invalid weight '" + item + "' (expected m:alpha)");
        const auto m = to_unsigned("weights", trim(item.substr(0, colon)));
        const double alpha = to_double("weights", trim(item.substr(colon + 1)));
        if (m > 2) throw CapabilityError("derivative order " + std::to_string(m) + " is not supported (max 2)");
        out.push_back({static_cast<int>(m), alpha});
    }
    if (out.empty()) throw ConfigError("weights must list at least one m:alpha pair");
    return out;
}

std::string format_weights(const std::vector<DerivativeWeight>& w) {
    std::string s;
    for (const auto& x : w) {
        if (!s.empty()) s += ',';
        s += std::to_string(x.order) + ':' + format_real(x.alpha);
    }
    return s;
}

void ConfigBuilder::set(const std::string& key, const std::string& value) {
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

void ConfigBuilder::read(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ParseError("missing key before '='", lineno);
        set(key, trim(t.substr(eq + 1)));
    }
}

void ConfigBuilder::read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path);
    read(in);
}

ExperimentConfig ConfigBuilder::build(const std::string& command) const {
    ExperimentConfig c;
    auto get = [&](const std::string& k) -> const std::string* {
        const auto it = values_.find(k);
        return it == values_.end() ? nullptr : &it->second;
    };

    if (command == "run") {
        for (const char* k : {"mode", "output_dir"}) {
            if (has(k)) throw ConfigError("key '" + std::string(k) + "' only applies to the compare command");
        }
    } else if (command == "compare") {
        for (const char* k : {"scheme", "output", "trajectory"}) {
            if (has(k)) throw ConfigError("key '" + std::string(k) + "' does not apply to the compare command");
        }
        if (!has("mode")) throw ConfigError("compare needs a 'mode'");
    } else {
        throw ConfigError("unknown command '" + command + "'");
    }

    if (auto v = get("scheme")) c.scheme = parse_scheme(*v);
    if (command == "run") {
        for (const auto& [key, schemes] : scheme_keys()) {
            if (has(key) && !schemes.count(c.scheme)) {
                throw ConfigError("key '" + key + "' conflicts with scheme '" + scheme_name(c.scheme) + "'");
            }
        }
    }

    if (auto v = get("flux")) {
        FluxKind kind{};
        try {
            kind = parse_flux_kind(*v);
        } catch (const ParameterError&) {
            throw ConfigError("unknown flux '" + *v + "' (expected linear, pm_exp or charbonnier)");
        }
        if (kind == FluxKind::linear) {
            if (has("lambda")) throw ConfigError("key 'lambda' conflicts with flux 'linear'");
            c.flux = FluxFunction::linear();
        } else {
            const double lam = has("lambda") ? to_double("lambda", *get("lambda")) : 1.0;
            c.flux = FluxFunction{kind, lam};
            if (!(lam > 0.0)) throw ParameterError("lambda must be positive");
        }
    } else if (has("lambda")) {
        throw ConfigError("key 'lambda' needs a nonlinear 'flux'");
    }

    if (auto v = get("weights")) c.weights = parse_weights(*v);
    if (auto v = get("h")) c.h = to_double("h", *v);
    if (!(c.h > 0.0)) throw ParameterError("h must be positive");
    if (auto v = get("tau"); v && *v != "auto") {
        c.tau = to_double("tau", *v);
        if (*c.tau < 0.0) throw ParameterError("tau must be >= 0");
    }

    if (auto v = get("steps")) c.steps = to_unsigned("steps", *v);
    if (auto v = get("cycle_length")) c.cycle_length = to_unsigned("cycle_length", *v);
    if (c.cycle_length < 1) throw ParameterError("cycle_length must be >= 1");
    if (auto v = get("cycles")) c.cycles = to_unsigned("cycles", *v);
    if (auto v = get("inner_iterations")) c.inner_iterations = to_unsigned("inner_iterations", *v);
    if (c.inner_iterations < 1) throw ParameterError("inner_iterations must be >= 1");
    if (auto v = get("tol")) {
        c.tol = to_double("tol", *v);
        if (!(*c.tol > 0.0)) throw ParameterError("tol must be positive");
    }
    if (auto v = get("levels")) c.multigrid.levels = to_unsigned("levels", *v);
    if (auto v = get("pre_smooth")) c.multigrid.pre_smooth = to_unsigned("pre_smooth", *v);
    if (auto v = get("post_smooth")) c.multigrid.post_smooth = to_unsigned("post_smooth", *v);
    if (auto v = get("omega")) c.multigrid.omega = to_double("omega", *v);
    if (auto v = get("coarse_solver")) {
        if (*v == "direct") {
            c.multigrid.coarse_solver = CoarseSolver::direct;
        } else if (*v == "smoother") {
            c.multigrid.coarse_solver = CoarseSolver::smoother_only;
        } else {
            throw ConfigError("unknown coarse_solver '" + *v + "' (expected direct or smoother)");
        }
    }
    c.multigrid.validate();

    if (has("input")) {
        for (const char* k : {"signal", "n"}) {
            if (has(k)) throw ConfigError("key '" + std::string(k) + "' conflicts with 'input'");
        }
        c.input = *get("input");
    }
    if (auto v = get("signal")) c.signal = *v;
    if (auto v = get("n")) c.n = to_unsigned("n", *v);
    if (auto v = get("seed")) c.seed = to_unsigned("seed", *v);
    if (auto v = get("output")) c.output = *v;
    if (auto v = get("trajectory")) c.trajectory = *v;
    if (auto v = get("mode")) c.mode = *v;
    if (auto v = get("output_dir")) c.output_dir = *v;
    return c;
}

ExperimentConfig parse_config(std::istream& in, const std::string& command) {
    ConfigBuilder b;
    b.read(in);
    return b.build(command);
}

}  // namespace diffnet::experiment
