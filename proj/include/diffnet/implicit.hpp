#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/explicit_block.hpp"

namespace diffnet {

/// Implicit step u^{k+1} = u^k - tau K^T Phi(K u^{k+1}) solved by at most
/// `inner_iters` fixed-point iterations
///   v_{l+1} = u^k - tau K^T Phi(K v_l),   v_0 = u^k.
/// Every inner iterate is fed the same u^k, which is what makes the unrolled
/// solver recurrent rather than a plain chain of blocks.
template <LinearOperator Op>
struct ImplicitStep {
    BlockParams<Op> base;
    std::size_t inner_iters;
    /// Absolute early-exit threshold; unset means 1e-12 * ||u||.
    std::optional<double> residual_tol;
    /// tau * L * ||K||^2; below 1 the fixed-point map is a contraction.
    double margin;

    ImplicitStep(BlockParams<Op> b, std::size_t iters, std::optional<double> tol = std::nullopt,
                 double norm_tol = 1e-10)
        : base(std::move(b)), inner_iters(iters), residual_tol(tol) {
        if (inner_iters < 1) throw ParameterError("implicit step needs at least one inner iteration");
        if (residual_tol && !(*residual_tol > 0.0)) throw ParameterError("residual tolerance must be positive");
        margin = base.tau * lipschitz_constant(base.flux) * spectral_norm_sq(base.op, norm_tol);
    }

    bool contracting() const noexcept { return margin < 1.0; }
};

template <LinearOperator Op>
ImplicitStep(BlockParams<Op>, std::size_t) -> ImplicitStep<Op>;

template <LinearOperator Op>
double contraction_margin(const ImplicitStep<Op>& s) {
    return s.margin;
}

struct ImplicitResult {
    Signal output;
    std::size_t iterations;
    double residual;
    /// Fixed-point residual of v_1, v_2, ... in order.
    std::vector<double> residual_history;
};

/// ||v - (u - tau K^T Phi(K v))||_2, the defect of v in the implicit equation.
template <LinearOperator Op>
double implicit_residual(const BlockParams<Op>& p, const Signal& u, const Signal& v) {
    detail::check_domain(p.op, u.size());
    detail::check_domain(p.op, v.size());
    const auto phi = apply_flux(p.flux, p.op.apply(v.values()));
    const auto back = p.op.apply_adjoint(phi);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = v[i] - (u[i] - p.tau * back[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

/// Runs the fixed-point iteration. Exits early once the residual of the
/// newest iterate is at or below the tolerance. Not reaching the tolerance is
/// not an error: the iterate with the smallest residual is returned together
/// with that residual.
template <LinearOperator Op>
ImplicitResult implicit_step(const ImplicitStep<Op>& s, const Signal& u) {
    detail::check_domain(s.base.op, u.size());
    const double tol = s.residual_tol ? *s.residual_tol : 1e-12 * l2_norm(u);

    // F(v) = u - tau K^T Phi(K v)
    auto fixed_point_map = [&](std::span<const double> v) {
        const auto phi = apply_flux(s.base.flux, s.base.op.apply(v));
        const auto back = s.base.op.apply_adjoint(phi);
        std::vector<double> out(u.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = u[i] - s.base.tau * back[i];
        return out;
    };

    std::vector<double> f_cur = fixed_point_map(u.values());
    std::vector<double> best;
    double best_res = std::numeric_limits<double>::infinity();
    std::vector<double> history;
    std::size_t used = 0;
    for (std::size_t l = 1; l <= s.inner_iters; ++l) {
        std::vector<double> next = std::move(f_cur);
        f_cur = fixed_point_map(next);
        if (!all_finite(next) || !all_finite(f_cur)) {
            throw DivergenceError("fixed-point iteration diverged", l);
        }
        double res = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double d = next[i] - f_cur[i];
            res += d * d;
        }
        res = std::sqrt(res);
        history.push_back(res);
        used = l;
        if (res < best_res || best.empty()) {
            best_res = res;
            best = next;
        }
        if (res <= tol) break;
    }
    return {u.with_values(std::move(best)), used, best_res, std::move(history)};
}

/// Applies `steps` implicit steps; rows record time k * tau.
template <LinearOperator Op>
ChainResult run_implicit(const ImplicitStep<Op>& s, const Signal& u0, std::size_t steps) {
    detail::check_domain(s.base.op, u0.size());
    TrajectoryRecord rec;
    rec.rows.push_back(make_row(s.base, 0, 0.0, u0));
    Signal u = u0;
    for (std::size_t k = 1; k <= steps; ++k) {
        try {
            u = implicit_step(s, u).output;
        } catch (const DivergenceError&) {
            throw DivergenceError("implicit run diverged", k);
        }
        rec.rows.push_back(make_row(s.base, k, static_cast<double>(k) * s.base.tau, u));
    }
    return {std::move(u), std::move(rec)};
}

}  // namespace diffnet
