#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/operators.hpp"
#include "diffnet/random.hpp"
#include "diffnet/signal.hpp"

namespace diffnet {

// ---------------------------------------------------------------------------
// Linear systems
// ---------------------------------------------------------------------------

/// Symmetric positive definite, matrix-free system matrix on one grid level
/// that knows its diagonal and how to rebuild itself on the next coarser grid.
template <class S>
concept SpdSystem = requires(const S& a, std::span<const double> x) {
    { a.size() } -> std::convertible_to<std::size_t>;
    { a.h() } -> std::convertible_to<double>;
    { a.apply(x) } -> std::same_as<std::vector<double>>;
    { a.diagonal() } -> std::convertible_to<std::span<const double>>;
    { a.coarsened() } -> std::same_as<S>;
};

/// Number of samples after one vertex-centred coarsening (every other node).
inline std::size_t coarse_size(std::size_t n) {
    if (n < 3 || n % 2 == 0) {
        throw SizeError("grid of " + std::to_string(n) + " samples cannot be coarsened (need odd N >= 3)");
    }
    return (n + 1) / 2;
}

/// A = I + tau K^T K: one implicit linear diffusion step. Coarser levels
/// rediscretise K at spacing 2h.
class DiffusionSystem {
public:
    DiffusionSystem(StencilOp k, double tau) : k_(std::move(k)), tau_(tau) {
        if (!(tau_ >= 0.0) || !std::isfinite(tau_)) throw ParameterError("tau must be finite and >= 0");
        diag_ = gram_diagonal(k_);
        for (auto& d : diag_) d = 1.0 + tau_ * d;
    }

    /// Default family: K = forward difference.
    static DiffusionSystem forward_difference(std::size_t n, double h, double tau) {
        return DiffusionSystem(diffnet::forward_difference(h, n), tau);
    }

    std::size_t size() const noexcept { return k_.domain_size(); }
    double h() const noexcept { return k_.h(); }
    double tau() const noexcept { return tau_; }
    const StencilOp& op() const noexcept { return k_; }
    const std::vector<double>& diagonal() const noexcept { return diag_; }

    std::vector<double> apply(std::span<const double> x) const {
        auto y = k_.apply_adjoint(k_.apply(x));
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + tau_ * y[i];
        return y;
    }

    DiffusionSystem coarsened() const {
        return DiffusionSystem(k_.rediscretized(2.0 * h(), coarse_size(size())), tau_);
    }

private:
    StencilOp k_;
    double tau_;
    std::vector<double> diag_;
};

template <SpdSystem S>
struct LinearProblem {
    S system;
    Signal rhs;

    LinearProblem(S a, Signal b) : system(std::move(a)), rhs(std::move(b)) {
        if (rhs.size() != system.size()) throw SizeError("right-hand side does not match system size");
    }
};

template <SpdSystem S>
LinearProblem(S, Signal) -> LinearProblem<S>;

/// Three-channel signal: iterate x, right-hand side b, residual r.
struct UNetState {
    Signal x;
    Signal b;
    Signal r;
};

template <SpdSystem S>
Signal residual(const S& a, const Signal& b, const Signal& x) {
    if (x.size() != a.size() || b.size() != a.size()) throw SizeError("residual: size mismatch");
    auto ax = a.apply(x.values());
    std::vector<double> r(ax.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - ax[i];
    return Signal(std::move(r), a.h());
}

/// `sweeps` damped Jacobi sweeps x <- x + omega D^{-1} (b - A x), emitted as a
/// three-channel state with a fresh residual.
template <SpdSystem S>
UNetState smoother(const S& a, const Signal& b, const Signal& x0, std::size_t sweeps, double omega) {
    if (x0.size() != a.size() || b.size() != a.size()) throw SizeError("smoother: size mismatch");
    const std::span<const double> d = a.diagonal();
    for (double v : d) {
        if (v == 0.0) throw SingularityError("Jacobi smoother: zero diagonal entry");
    }
    std::vector<double> x(x0.values().begin(), x0.values().end());
    for (std::size_t s = 0; s < sweeps; ++s) {
        const auto ax = a.apply(x);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += omega * (b[i] - ax[i]) / d[i];
    }
    Signal xs(std::move(x), a.h());
    Signal r = residual(a, b, xs);
    return {std::move(xs), b, std::move(r)};
}

// ---------------------------------------------------------------------------
// Grid transfer (vertex-centred: coarse node j sits on fine node 2j)
// ---------------------------------------------------------------------------

/// Full weighting (1/4, 1/2, 1/4); the end nodes mirror about themselves, so
/// their rows become (1/2, 1/2). Rows sum to one.
inline Signal restriction(const Signal& fine) {
    const std::size_t nf = fine.size();
    const std::size_t nc = coarse_size(nf);
    std::vector<double> c(nc);
    c[0] = 0.5 * fine[0] + 0.5 * fine[1];
    for (std::size_t j = 1; j + 1 < nc; ++j) {
        c[j] = 0.25 * fine[2 * j - 1] + 0.5 * fine[2 * j] + 0.25 * fine[2 * j + 1];
    }
    c[nc - 1] = 0.5 * fine[nf - 2] + 0.5 * fine[nf - 1];
    return Signal(std::move(c), 2.0 * fine.h());
}

/// Linear interpolation onto 2 N_c - 1 fine nodes. P = 2 R^T except in the two
/// columns belonging to the end nodes, where the mirrored restriction rows differ.
inline Signal prolongation(const Signal& coarse) {
    const std::size_t nc = coarse.size();
    const std::size_t nf = 2 * nc - 1;
    std::vector<double> f(nf);
    for (std::size_t j = 0; j < nc; ++j) f[2 * j] = coarse[j];
    for (std::size_t j = 0; j + 1 < nc; ++j) f[2 * j + 1] = 0.5 * (coarse[j] + coarse[j + 1]);
    return Signal(std::move(f), 0.5 * coarse.h());
}

// ---------------------------------------------------------------------------
// Cycles
// ---------------------------------------------------------------------------

enum class CoarseSolver { direct, smoother_only };

struct CycleConfig {
    std::size_t pre_smooth = 2;
    std::size_t post_smooth = 2;
    double omega = 2.0 / 3.0;
    std::size_t levels = 2;
    CoarseSolver coarse_solver = CoarseSolver::direct;

    void validate() const {
        if (!(omega > 0.0 && omega <= 1.0)) throw ParameterError("Jacobi damping must satisfy 0 < omega <= 1");
        if (levels < 2) throw ParameterError("a cycle needs at least 2 levels");
    }
};

/// Throws SizeError unless n can be halved levels - 1 times.
inline void check_coarsenable(std::size_t n, std::size_t levels) {
    for (std::size_t l = 1; l < levels; ++l) n = coarse_size(n);
}

namespace detail {

/// Dense Cholesky solve; the matrix is assembled by probing A with unit vectors.
template <SpdSystem S>
std::vector<double> dense_spd_solve(const S& a, std::span<const double> b) {
    const std::size_t n = a.size();
    std::vector<double> m(n * n);
    std::vector<double> e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const auto col = a.apply(e);
        for (std::size_t i = 0; i < n; ++i) m[i * n + j] = col[i];
        e[j] = 0.0;
    }
    // lower factor in place
    for (std::size_t j = 0; j < n; ++j) {
        double d = m[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= m[j * n + k] * m[j * n + k];
        if (!(d > 0.0)) throw SingularityError("coarse system is not positive definite");
        d = std::sqrt(d);
        m[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= m[i * n + k] * m[j * n + k];
            m[i * n + j] = s / d;
        }
    }
    std::vector<double> y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) y[i] -= m[i * n + k] * y[k];
        y[i] /= m[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) y[i] -= m[k * n + i] * y[k];
        y[i] /= m[i * n + i];
    }
    return y;
}

template <SpdSystem S>
UNetState coarsest_solve(const S& a, const Signal& b, const CycleConfig& cfg) {
    const Signal zero = Signal::constant(a.size(), 0.0, a.h());
    if (cfg.coarse_solver == CoarseSolver::smoother_only) {
        return smoother(a, b, zero, cfg.pre_smooth + cfg.post_smooth, cfg.omega);
    }
    Signal x(dense_spd_solve(a, b.values()), a.h());
    Signal r = residual(a, b, x);
    return {std::move(x), b, std::move(r)};
}

template <SpdSystem S>
UNetState classic_cycle(const S& a, const Signal& b, const Signal& x0, const CycleConfig& cfg,
                        std::size_t level) {
    // 1. pre-smoothing
    UNetState fine = smoother(a, b, x0, cfg.pre_smooth, cfg.omega);
    // 2. residual equation on the coarse grid, zero initial guess
    const S coarse_a = a.coarsened();
    const Signal coarse_b = restriction(fine.r);
    // 3. coarse solve, recursively for deeper cycles
    const UNetState coarse =
        level + 2 == cfg.levels
            ? coarsest_solve(coarse_a, coarse_b, cfg)
            : classic_cycle(coarse_a, coarse_b, Signal::constant(coarse_a.size(), 0.0, coarse_a.h()), cfg,
                            level + 1);
    // 4.-5. prolongate the coarse error and correct
    const Signal e = prolongation(coarse.x);
    std::vector<double> x(fine.x.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = fine.x[i] + e[i];
    // 6. post-smoothing
    return smoother(a, b, Signal(std::move(x), a.h()), cfg.post_smooth, cfg.omega);
}

}  // namespace detail

/// Two-level V-cycle written as a classic multigrid routine.
template <SpdSystem S>
UNetState two_grid_cycle(const LinearProblem<S>& p, const Signal& x0, const CycleConfig& cfg) {
    cfg.validate();
    if (cfg.levels != 2) throw ParameterError("two_grid_cycle requires levels = 2");
    check_coarsenable(p.system.size(), 2);
    if (x0.size() != p.system.size()) throw SizeError("initial guess does not match system size");
    return detail::classic_cycle(p.system, p.rhs, x0, cfg, 0);
}

/// Recursive V-cycle over cfg.levels grids.
template <SpdSystem S>
UNetState v_cycle(const LinearProblem<S>& p, const Signal& x0, const CycleConfig& cfg) {
    cfg.validate();
    check_coarsenable(p.system.size(), cfg.levels);
    if (x0.size() != p.system.size()) throw SizeError("initial guess does not match system size");
    return detail::classic_cycle(p.system, p.rhs, x0, cfg, 0);
}

// ---------------------------------------------------------------------------
// The same cycle as a three-channel U-net
// ---------------------------------------------------------------------------

/// Linear map between three-channel states: a 3x3 block matrix whose entries
/// are linear maps or zero. Output channel i is the sum of block (i, j)
/// applied to input channel j; a row of zero blocks yields a zero channel.
struct ChannelTransfer {
    using Block = std::function<Signal(const Signal&)>;

    std::array<std::array<Block, 3>, 3> blocks;
    std::size_t out_size;
    double out_h;

    UNetState operator()(const UNetState& in) const {
        const std::array<const Signal*, 3> src{&in.x, &in.b, &in.r};
        std::array<std::vector<double>, 3> out;
        for (std::size_t i = 0; i < 3; ++i) {
            out[i].assign(out_size, 0.0);
            for (std::size_t j = 0; j < 3; ++j) {
                if (!blocks[i][j]) continue;
                const Signal y = blocks[i][j](*src[j]);
                if (y.size() != out_size) throw SizeError("channel transfer: block output size mismatch");
                for (std::size_t k = 0; k < out_size; ++k) out[i][k] += y[k];
            }
        }
        return {Signal(std::move(out[0]), out_h), Signal(std::move(out[1]), out_h),
                Signal(std::move(out[2]), out_h)};
    }
};

/// Downsampling: only the fine residual is restricted, into the coarse b
/// channel. Coarse x starts at zero; the unused r row is zero.
inline ChannelTransfer downsampling_transfer(std::size_t fine_size, double fine_h) {
    ChannelTransfer t{{}, coarse_size(fine_size), 2.0 * fine_h};
    t.blocks[1][2] = [](const Signal& r) { return restriction(r); };
    return t;
}

/// Upsampling: only the coarse x channel (the error estimate) is prolongated.
inline ChannelTransfer upsampling_transfer(std::size_t coarse_size_, double coarse_h) {
    ChannelTransfer t{{}, 2 * coarse_size_ - 1, 0.5 * coarse_h};
    t.blocks[0][0] = [](const Signal& x) { return prolongation(x); };
    return t;
}

/// Channel-wise sum of two states (the additive skip connection).
inline UNetState add_channels(const UNetState& a, const UNetState& b) {
    auto sum = [](const Signal& u, const Signal& v) {
        if (u.size() != v.size()) throw SizeError("channel addition: size mismatch");
        std::vector<double> s(u.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = u[i] + v[i];
        return Signal(std::move(s), u.h());
    };
    return {sum(a.x, b.x), sum(a.b, b.b), sum(a.r, b.r)};
}

namespace detail {

template <SpdSystem S>
UNetState unet_cycle(const S& a, const UNetState& in, const CycleConfig& cfg, std::size_t level) {
    // S^h: reads x and b, ignores the incoming residual
    auto fine_solver = [&](const UNetState& s, std::size_t sweeps) {
        return smoother(a, s.b, s.x, sweeps, cfg.omega);
    };
    const UNetState pre = fine_solver(in, cfg.pre_smooth);
    const UNetState down = downsampling_transfer(a.size(), a.h())(pre);
    const S coarse_a = a.coarsened();
    const UNetState coarse = level + 2 == cfg.levels ? coarsest_solve(coarse_a, down.b, cfg)
                                                     : unet_cycle(coarse_a, down, cfg, level + 1);
    const UNetState up = upsampling_transfer(coarse_a.size(), coarse_a.h())(coarse);
    const UNetState merged = add_channels(pre, up);
    return fine_solver(merged, cfg.post_smooth);
}

}  // namespace detail

/// The V-cycle routed through three-channel states and block transfer
/// operators. Produces the same numbers as two_grid_cycle / v_cycle.
template <SpdSystem S>
UNetState unet_form_cycle(const LinearProblem<S>& p, const Signal& x0, const CycleConfig& cfg) {
    cfg.validate();
    check_coarsenable(p.system.size(), cfg.levels);
    if (x0.size() != p.system.size()) throw SizeError("initial guess does not match system size");
    // the input residual channel is not read by the first solver
    const UNetState in{x0, p.rhs, Signal::constant(x0.size(), 0.0, x0.h())};
    return detail::unet_cycle(p.system, in, cfg, 0);
}

// ---------------------------------------------------------------------------
// Driving and measuring cycles
// ---------------------------------------------------------------------------

struct CycleRecord {
    std::size_t cycle;
    double residual_norm;
    double reduction_factor;  // NaN for cycle 0
};

struct MultigridRun {
    UNetState final_state;
    std::vector<CycleRecord> history;

    static constexpr const char* csv_header = "cycle,residual_norm,reduction_factor";

    void write_csv(std::ostream& out) const {
        out << csv_header << '\n';
        for (const auto& r : history) {
            out << r.cycle << ',' << format_real(r.residual_norm) << ',';
            if (r.cycle > 0) out << format_real(r.reduction_factor);
            out << '\n';
        }
    }
};

/// Repeats V-cycles until ||r|| <= tol * ||b|| or `max_cycles` is reached.
template <SpdSystem S>
MultigridRun solve_multigrid(const LinearProblem<S>& p, const Signal& x0, const CycleConfig& cfg,
                             std::size_t max_cycles, double tol) {
    UNetState state{x0, p.rhs, residual(p.system, p.rhs, x0)};
    MultigridRun run{state, {}};
    double prev = l2_norm(state.r);
    run.history.push_back({0, prev, std::nan("")});
    const double target = tol * l2_norm(p.rhs);
    for (std::size_t c = 1; c <= max_cycles && prev > target; ++c) {
        state = v_cycle(p, state.x, cfg);
        const double rn = l2_norm(state.r);
        run.history.push_back({c, rn, prev > 0.0 ? rn / prev : 0.0});
        prev = rn;
    }
    run.final_state = std::move(state);
    return run;
}

/// Asymptotic per-cycle residual reduction of an iteration x -> cycle(x) on
/// the homogeneous problem (b = 0), started from a seeded random x and
/// renormalised each cycle. Returns the geometric mean of the factors over
/// the second half of the cycles.
template <SpdSystem S, class Cycle>
double measure_reduction(const S& a, Cycle&& cycle, std::size_t cycles, std::uint64_t seed,
                         std::vector<double>* factors = nullptr) {
    if (cycles < 2) throw ParameterError("need at least 2 cycles to measure a reduction factor");
    Rng rng(seed);
    const Signal zero_b = Signal::constant(a.size(), 0.0, a.h());
    Signal x(rng.normal_vector(a.size()), a.h());
    double rn = l2_norm(residual(a, zero_b, x));
    double log_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 1; c <= cycles; ++c) {
        const UNetState s = cycle(a, zero_b, x);
        const double next = l2_norm(s.r);
        if (next == 0.0) return 0.0;  // solved exactly
        const double f = next / rn;
        if (factors) factors->push_back(f);
        if (2 * c > cycles) {
            log_sum += std::log(f);
            ++counted;
        }
        std::vector<double> xs(s.x.values().begin(), s.x.values().end());
        for (auto& v : xs) v /= next;
        x = Signal(std::move(xs), a.h());
        rn = 1.0;
    }
    return std::exp(log_sum / static_cast<double>(counted));
}

/// Asymptotic reduction factor of one V-cycle.
template <SpdSystem S>
double vcycle_reduction(const S& a, const CycleConfig& cfg, std::size_t cycles = 30, std::uint64_t seed = 7,
                        std::vector<double>* factors = nullptr) {
    auto cycle = [&](const S& sys, const Signal& b, const Signal& x) {
        return v_cycle(LinearProblem<S>(sys, b), x, cfg);
    };
    return measure_reduction(a, cycle, cycles, seed, factors);
}

/// Asymptotic reduction factor of `sweeps` plain damped Jacobi sweeps.
template <SpdSystem S>
double jacobi_reduction(const S& a, std::size_t sweeps, double omega, std::size_t cycles = 30,
                        std::uint64_t seed = 7, std::vector<double>* factors = nullptr) {
    auto cycle = [&](const S& sys, const Signal& b, const Signal& x) { return smoother(sys, b, x, sweeps, omega); };
    return measure_reduction(a, cycle, cycles, seed, factors);
}

}  // namespace diffnet
