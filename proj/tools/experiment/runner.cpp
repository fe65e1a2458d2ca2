#include "runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "criteria.hpp"
#include "diffnet/diffnet.hpp"

namespace diffnet::experiment {

namespace {

using Info = std::vector<std::pair<std::string, std::string>>;

std::string real(double v) { return format_real(v); }

template <class Record>
std::string to_csv(const Record& r) {
    std::ostringstream out;
    r.write_csv(out);
    return out.str();
}

double resolve_tau(const ExperimentConfig& c, const StencilOp& op, const FluxFunction& f) {
    return c.tau ? *c.tau : stable_tau(op, f);
}

std::size_t default_n(const ExperimentConfig& c, bool multigrid) { return c.n_or(multigrid ? 65 : 64); }

Signal input_for(const ExperimentConfig& c, bool multigrid) {
    if (!c.input.empty()) return read_signal(c.input, c.h);
    return builtin_signal(c.signal, default_n(c, multigrid), c.seed, c.h);
}

/// Residual history of plain damped Jacobi, `sweeps` sweeps per cycle.
MultigridRun jacobi_history(const DiffusionSystem& a, const Signal& b, std::size_t sweeps, double omega,
                            std::size_t cycles) {
    UNetState s{Signal::constant(a.size(), 0.0, a.h()), b, b};
    MultigridRun run{s, {}};
    double prev = l2_norm(s.r);
    run.history.push_back({0, prev, std::nan("")});
    for (std::size_t k = 1; k <= cycles; ++k) {
        s = smoother(a, b, s.x, sweeps, omega);
        const double rn = l2_norm(s.r);
        run.history.push_back({k, rn, prev > 0.0 ? rn / prev : 0.0});
        prev = rn;
    }
    run.final_state = std::move(s);
    return run;
}

CompareResult fsi_vs_explicit(const ExperimentConfig& c) {
    const Signal u = input_for(c, false);
    const StencilOp op = c.op(u.size());
    const BlockParams p(op, c.flux, resolve_tau(c, op, c.flux));
    const FsiCycle cycle(p, c.cycle_length);
    const std::size_t cycles = c.cycles_or(4);
    const auto fsi = run_fsi(cycle, u, cycles);

    // explicit reference sampled at the same times: ceil(L(L+1)/3) steps per super step
    const double t = super_time(cycle);
    const auto sub = static_cast<std::size_t>(std::ceil(static_cast<double>(c.cycle_length * (c.cycle_length + 1)) / 3.0));
    const BlockParams fine(op, c.flux, t / static_cast<double>(sub));
    TrajectoryRecord expl;
    Signal v = u;
    expl.rows.push_back(make_row(fine, 0, 0.0, v));
    for (std::size_t k = 1; k <= cycles; ++k) {
        v = run_chain(fine, v, sub).output;
        expl.rows.push_back(make_row(fine, k, static_cast<double>(k) * t, v));
    }

    CompareResult r;
    r.files = {{"explicit.csv", to_csv(expl)}, {"fsi.csv", to_csv(fsi.trajectory)}};
    r.info = {{"mode", "fsi_vs_explicit"},
              {"tau", real(p.tau)},
              {"cycle_length", std::to_string(c.cycle_length)},
              {"super_time", real(t)},
              {"explicit_steps_per_cycle", std::to_string(sub)},
              {"explicit_tau", real(fine.tau)},
              {"final_rel_l2_diff", real(distance(fsi.output, v) / l2_norm(v))}};
    return r;
}

CompareResult implicit_vs_explicit(const ExperimentConfig& c) {
    const Signal u = input_for(c, false);
    const StencilOp op = c.op(u.size());
    const BlockParams p(op, c.flux, resolve_tau(c, op, c.flux));
    const ImplicitStep s(p, c.inner_iterations, c.tol);
    const auto expl = run_chain(p, u, c.steps);
    const auto impl = run_implicit(s, u, c.steps);

    CompareResult r;
    r.files = {{"explicit.csv", to_csv(expl.trajectory)}, {"implicit.csv", to_csv(impl.trajectory)}};
    r.info = {{"mode", "implicit_vs_explicit"},
              {"tau", real(p.tau)},
              {"steps", std::to_string(c.steps)},
              {"inner_iterations", std::to_string(c.inner_iterations)},
              {"contraction_margin", real(contraction_margin(s))},
              {"final_rel_l2_diff", real(distance(impl.output, expl.output) / l2_norm(expl.output))}};
    return r;
}

CompareResult multigrid_vs_jacobi(const ExperimentConfig& c) {
    const Signal b = input_for(c, true);
    const StencilOp op = c.op(b.size());
    const DiffusionSystem a(op, resolve_tau(c, op, FluxFunction::linear()));
    const std::size_t cycles = c.cycles_or(20);
    const std::size_t sweeps = c.multigrid.pre_smooth + c.multigrid.post_smooth;
    const auto mg = solve_multigrid(LinearProblem(a, b), Signal::constant(b.size(), 0.0, b.h()), c.multigrid, cycles,
                                    c.tol.value_or(0.0));
    const auto jac = jacobi_history(a, b, sweeps, c.multigrid.omega, cycles);
    const double rho_mg = vcycle_reduction(a, c.multigrid, 30, c.seed);
    const double rho_jac = jacobi_reduction(a, sweeps, c.multigrid.omega, 30, c.seed);

    CompareResult r;
    r.files = {{"multigrid.csv", to_csv(mg)}, {"jacobi.csv", to_csv(jac)}};
    r.info = {{"mode", "multigrid_vs_jacobi"},
              {"tau", real(a.tau())},
              {"n", std::to_string(b.size())},
              {"levels", std::to_string(c.multigrid.levels)},
              {"jacobi_sweeps_per_cycle", std::to_string(sweeps)},
              {"rho_multigrid", real(rho_mg)},
              {"rho_jacobi", real(rho_jac)},
              {"speedup", real(rho_jac / rho_mg)}};
    return r;
}

CompareResult stable_vs_unstable(const ExperimentConfig& c) {
    const Signal u = input_for(c, false);
    const StencilOp op = c.op(u.size());
    const double tau = resolve_tau(c, op, c.flux);
    const auto stable = run_chain(BlockParams(op, c.flux, tau), u, c.steps);

    CompareResult r;
    r.files = {{"stable.csv", to_csv(stable.trajectory)}};
    r.info = {{"mode", "stable_vs_unstable"},
              {"tau_stable", real(tau)},
              {"tau_unstable", real(2.0 * tau)},
              {"steps", std::to_string(c.steps)},
              {"stable_norm_ratio", real(l2_norm(stable.output) / l2_norm(u))}};
    try {
        const auto unstable = run_chain(BlockParams(op, c.flux, 2.0 * tau), u, c.steps);
        r.files.emplace_back("unstable.csv", to_csv(unstable.trajectory));
        r.info.emplace_back("unstable_norm_ratio", real(l2_norm(unstable.output) / l2_norm(u)));
    } catch (const DivergenceError& e) {
        r.info.emplace_back("unstable_diverged_at_step", std::to_string(e.step()));
    }
    return r;
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e)) return exit_usage;
    if (dynamic_cast<const SizeError*>(&e)) return exit_size;
    if (dynamic_cast<const CapabilityError*>(&e)) return exit_capability;
    if (dynamic_cast<const ParameterError*>(&e)) return exit_parameter;
    if (dynamic_cast<const ConvergenceError*>(&e)) return exit_convergence;
    if (dynamic_cast<const SingularityError*>(&e)) return exit_singularity;
    if (dynamic_cast<const DivergenceError*>(&e)) return exit_divergence;
    return exit_io;
}

Signal builtin_signal(const std::string& name, std::size_t n, std::uint64_t seed, double h) {
    std::vector<double> v(n);
    if (name == "step") {
        for (std::size_t i = 0; i < n; ++i) v[i] = i < n / 2 ? 0.0 : 1.0;
    } else if (name == "ramp") {
        for (std::size_t i = 0; i < n; ++i) v[i] = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    } else if (name == "sine") {
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        }
    } else if (name == "random") {
        v = Rng(seed).uniform_vector(n, 0.0, 1.0);
    } else {
        throw ConfigError("unknown signal generator '" + name + "' (expected step, ramp, sine or random)");
    }
    return Signal(std::move(v), h);
}

Signal load_input(const ExperimentConfig& c) { return input_for(c, c.scheme == Scheme::multigrid); }

RunResult execute_run(const ExperimentConfig& c) {
    const Signal u = load_input(c);
    const StencilOp op = c.op(u.size());
    RunResult r{u, {}, {{"scheme", scheme_name(c.scheme)}, {"n", std::to_string(u.size())}}};

    if (c.scheme == Scheme::multigrid) {
        const DiffusionSystem a(op, resolve_tau(c, op, FluxFunction::linear()));
        const auto run = solve_multigrid(LinearProblem(a, u), Signal::constant(u.size(), 0.0, u.h()), c.multigrid,
                                         c.cycles_or(20), c.tol.value_or(1e-10));
        r.final_signal = run.final_state.x;
        r.csv = to_csv(run);
        r.info.emplace_back("tau", real(a.tau()));
        r.info.emplace_back("cycles", std::to_string(run.history.size() - 1));
        r.info.emplace_back("final_residual_norm", real(run.history.back().residual_norm));
        return r;
    }

    const BlockParams p(op, c.flux, resolve_tau(c, op, c.flux));
    r.info.emplace_back("tau", real(p.tau));
    ChainResult chain{u, {}};
    switch (c.scheme) {
        case Scheme::explicit_chain:
            chain = run_chain(p, u, c.steps);
            break;
        case Scheme::fsi: {
            const FsiCycle cycle(p, c.cycle_length);
            chain = run_fsi(cycle, u, c.cycles_or(1));
            r.info.emplace_back("super_time", real(super_time(cycle)));
            break;
        }
        case Scheme::implicit: {
            const ImplicitStep s(p, c.inner_iterations, c.tol);
            chain = run_implicit(s, u, c.steps);
            r.info.emplace_back("contraction_margin", real(contraction_margin(s)));
            break;
        }
        case Scheme::multigrid:
            break;
    }
    r.final_signal = std::move(chain.output);
    r.csv = to_csv(chain.trajectory);
    r.info.emplace_back("final_l2_norm", real(l2_norm(r.final_signal)));
    return r;
}

const std::vector<std::string>& compare_modes() {
    static const std::vector<std::string> modes = [] {
        std::vector<std::string> m{"fsi_vs_explicit", "implicit_vs_explicit", "multigrid_vs_jacobi", "stable_vs_unstable"};
        for (const auto& s : acceptance::suites()) m.emplace_back(s.mode);
        return m;
    }();
    return modes;
}

CompareResult execute_compare(const ExperimentConfig& c) {
    if (c.mode == "fsi_vs_explicit") return fsi_vs_explicit(c);
    if (c.mode == "implicit_vs_explicit") return implicit_vs_explicit(c);
    if (c.mode == "multigrid_vs_jacobi") return multigrid_vs_jacobi(c);
    if (c.mode == "stable_vs_unstable") return stable_vs_unstable(c);
    for (const auto& s : acceptance::suites()) {
        if (c.mode == s.mode) {
            const auto o = s.run();
            CompareResult r;
            r.pass = o.pass;
            r.info = {{"mode", c.mode}, {"result", o.pass ? "PASS" : "FAIL"}, {"details", o.details}};
            return r;
        }
    }
    std::string list;
    for (const auto& m : compare_modes()) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError("unknown compare mode '" + c.mode + "' (expected one of: " + list + ")");
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path.string());
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

void print_info(std::ostream& out, const Info& info) {
    for (const auto& [k, v] : info) out << k << '=' << v << '\n';
}

}  // namespace

int run_command(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
    try {
        const RunResult r = execute_run(c);
        if (!c.output.empty()) write_signal(r.final_signal, c.output);
        if (c.trajectory.empty()) {
            out << r.csv;
        } else {
            write_text(c.trajectory, r.csv);
            print_info(out, r.info);
        }
        return exit_ok;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int compare_command(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
    try {
        const CompareResult r = execute_compare(c);
        if (!c.output_dir.empty()) {
            std::filesystem::create_directories(c.output_dir);
            for (const auto& [name, text] : r.files) write_text(std::filesystem::path(c.output_dir) / name, text);
        }
        print_info(out, r.info);
        return r.pass ? exit_ok : exit_check_failed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int selftest_command(std::ostream& out, std::ostream& err) {
    try {
        std::vector<std::string> report;
        const bool ok = acceptance::run_all(report);
        for (const auto& line : report) out << line << '\n';
        out << (ok ? "selftest: all suites passed" : "selftest: FAILED") << '\n';
        return ok ? exit_ok : exit_check_failed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace diffnet::experiment
