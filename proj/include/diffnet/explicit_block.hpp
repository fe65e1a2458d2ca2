#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/flux.hpp"
#include "diffnet/operators.hpp"
#include "diffnet/signal.hpp"

namespace diffnet {

/// Relative safety margin applied to power-iteration estimates of ||K||^2.
inline double norm_safety_factor(double tol) { return 10.0 * tol; }

/// Parameters of one diffusion block, u -> u - tau K^T Phi(K u).
///
/// In residual-block terms: W1 = K, W2 = -K^T, sigma1 = tau Phi,
/// sigma2 = identity, b1 = b2 = 0.
template <LinearOperator Op>
struct BlockParams {
    Op op;
    FluxFunction flux;
    double tau;

    BlockParams(Op o, FluxFunction f, double t) : op(std::move(o)), flux(f), tau(t) {
        if (!(tau >= 0.0) || !std::isfinite(tau)) throw ParameterError("time step must be finite and >= 0");
    }
};

template <LinearOperator Op>
BlockParams(Op, FluxFunction, double) -> BlockParams<Op>;

/// Largest step with guaranteed Euclidean stability, 2 / (L ||K||^2), with
/// ||K||^2 inflated by the power-iteration safety factor. Infinite for K = 0.
template <LinearOperator Op>
double stable_tau(const Op& op, const FluxFunction& f, double tol = 1e-8) {
    const double k2 = spectral_norm_sq(op, tol);
    if (k2 == 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 / (lipschitz_constant(f) * k2 * (1.0 + norm_safety_factor(tol)));
}

/// Block whose step is set to stable_tau(op, flux) scaled by `fraction`.
template <LinearOperator Op>
BlockParams<Op> stable_block(Op op, FluxFunction f, double fraction = 1.0, double tol = 1e-8) {
    const double tau = fraction * stable_tau(op, f, tol);
    return BlockParams<Op>(std::move(op), f, tau);
}

namespace detail {

template <LinearOperator Op>
void check_domain(const Op& op, std::size_t n) {
    if (op.domain_size() != n) {
        throw SizeError("signal length " + std::to_string(n) + " does not match operator domain " +
                        std::to_string(op.domain_size()));
    }
}

/// u - tau K^T Phi(K u) on raw samples; may contain non-finite values.
template <LinearOperator Op>
std::vector<double> explicit_update(const BlockParams<Op>& p, std::span<const double> u) {
    const auto phi = apply_flux(p.flux, p.op.apply(u));
    const auto back = p.op.apply_adjoint(phi);
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] - p.tau * back[i];
    return out;
}

}  // namespace detail

/// One explicit diffusion step. Throws DivergenceError (step 0) on overflow.
template <LinearOperator Op>
Signal diffusion_block(const BlockParams<Op>& p, const Signal& u) {
    detail::check_domain(p.op, u.size());
    auto next = detail::explicit_update(p, u.values());
    if (!all_finite(next)) throw DivergenceError("non-finite sample in diffusion block", 0);
    return u.with_values(std::move(next));
}

/// Generic residual block sigma2(f + W2 sigma1(W1 f + b1) + b2), composed
/// literally. W1, W2 map vectors to vectors; sigma1, sigma2 act per entry.
template <class W1, class W2, class Sigma1, class Sigma2>
std::vector<double> residual_block(const W1& w1, const W2& w2, const Sigma1& sigma1, const Sigma2& sigma2,
                                   std::span<const double> b1, std::span<const double> b2,
                                   std::span<const double> f) {
    std::vector<double> inner = w1(f);
    if (inner.size() != b1.size()) throw SizeError("residual block: bias b1 size mismatch");
    for (std::size_t i = 0; i < inner.size(); ++i) inner[i] = sigma1(inner[i] + b1[i]);
    std::vector<double> outer = w2(std::span<const double>(inner));
    if (outer.size() != f.size() || b2.size() != f.size()) {
        throw SizeError("residual block: skip connection size mismatch");
    }
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = sigma2(f[i] + outer[i] + b2[i]);
    return out;
}

/// The diffusion block expressed through residual_block with W1 = K,
/// W2 = -K^T, sigma1 = tau Phi, sigma2 = Id and zero biases.
template <LinearOperator Op>
Signal diffusion_block_as_resnet(const BlockParams<Op>& p, const Signal& u) {
    detail::check_domain(p.op, u.size());
    const std::vector<double> b1(p.op.codomain_size(), 0.0);
    const std::vector<double> b2(u.size(), 0.0);
    auto w1 = [&](std::span<const double> x) { return p.op.apply(x); };
    auto w2 = [&](std::span<const double> y) {
        auto x = p.op.apply_adjoint(y);
        for (auto& v : x) v = -v;
        return x;
    };
    auto sigma1 = [&](double s) { return p.tau * flux(p.flux, s); };
    auto sigma2 = [](double s) { return s; };
    auto out = residual_block(w1, w2, sigma1, sigma2, b1, b2, u.values());
    if (!all_finite(out)) throw DivergenceError("non-finite sample in residual block", 0);
    return u.with_values(std::move(out));
}

struct TrajectoryRow {
    std::size_t step;
    double time;
    double l2_norm;
    double energy;
    double mean;
};

/// Per-step diagnostics of a chain, including the initial state.
struct TrajectoryRecord {
    std::vector<TrajectoryRow> rows;

    static constexpr const char* csv_header = "step,time,l2_norm,energy,mean";

    void write_csv(std::ostream& out) const {
        out << csv_header << '\n';
        for (const auto& r : rows) {
            out << r.step << ',' << format_real(r.time) << ',' << format_real(r.l2_norm) << ','
                << format_real(r.energy) << ',' << format_real(r.mean) << '\n';
        }
    }
};

template <LinearOperator Op>
TrajectoryRow make_row(const BlockParams<Op>& p, std::size_t step, double time, const Signal& u) {
    return {step, time, l2_norm(u), energy(p.flux, p.op, u), mean(u)};
}

struct ChainResult {
    Signal output;
    TrajectoryRecord trajectory;
};

/// Applies `steps` diffusion blocks to u0, recording diagnostics at every
/// level. Throws DivergenceError naming the first step (1-based) that
/// produced a non-finite sample.
template <LinearOperator Op>
ChainResult run_chain(const BlockParams<Op>& p, const Signal& u0, std::size_t steps) {
    detail::check_domain(p.op, u0.size());
    TrajectoryRecord rec;
    rec.rows.reserve(steps + 1);
    rec.rows.push_back(make_row(p, 0, 0.0, u0));
    Signal u = u0;
    for (std::size_t k = 1; k <= steps; ++k) {
        auto next = detail::explicit_update(p, u.values());
        if (!all_finite(next)) throw DivergenceError("explicit chain diverged", k);
        u = u.with_values(std::move(next));
        rec.rows.push_back(make_row(p, k, static_cast<double>(k) * p.tau, u));
    }
    return {std::move(u), std::move(rec)};
}

}  // namespace diffnet
