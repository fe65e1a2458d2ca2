#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/explicit_block.hpp"

namespace diffnet {

/// Extrapolation weight alpha_l = (4l + 2) / (2l + 3) as an exact fraction.
struct FsiWeight {
    long numerator;
    long denominator;

    double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
};

inline FsiWeight fsi_weight(std::size_t l) {
    return {4 * static_cast<long>(l) + 2, 2 * static_cast<long>(l) + 3};
}

/// [alpha_0, ..., alpha_{L-1}]. All lie in [2/3, 2) and increase with l.
inline std::vector<double> fsi_weights(std::size_t cycle_length) {
    if (cycle_length < 1) throw ParameterError("FSI cycle length must be >= 1");
    std::vector<double> w(cycle_length);
    for (std::size_t l = 0; l < cycle_length; ++l) w[l] = fsi_weight(l).value();
    return w;
}

/// One FSI block: L explicit diffusion steps, each extrapolated against the
/// iterate two levels back.
template <LinearOperator Op>
struct FsiCycle {
    BlockParams<Op> base;
    std::size_t cycle_length;
    std::vector<double> weights;

    FsiCycle(BlockParams<Op> b, std::size_t l)
        : base(std::move(b)), cycle_length(l), weights(fsi_weights(l)) {}
};

template <LinearOperator Op>
FsiCycle(BlockParams<Op>, std::size_t) -> FsiCycle<Op>;

/// Time covered by one cycle, L (L + 1) / 3 * tau.
template <LinearOperator Op>
double super_time(const FsiCycle<Op>& c) {
    const auto l = static_cast<double>(c.cycle_length);
    return l * (l + 1.0) / 3.0 * c.base.tau;
}

namespace detail {

template <LinearOperator Op>
std::vector<double> fsi_update(const FsiCycle<Op>& c, std::span<const double> u) {
    // v_{-1} = v_0 = u
    std::vector<double> prev(u.begin(), u.end());
    std::vector<double> cur = prev;
    for (std::size_t l = 0; l < c.cycle_length; ++l) {
        const double a = c.weights[l];
        auto step = explicit_update(c.base, cur);
        for (std::size_t i = 0; i < step.size(); ++i) step[i] = prev[i] + a * (step[i] - prev[i]);
        if (!all_finite(step)) throw DivergenceError("FSI cycle diverged (inner index)", l);
        prev = std::move(cur);
        cur = std::move(step);
    }
    return cur;
}

}  // namespace detail

template <LinearOperator Op>
Signal fsi_cycle(const FsiCycle<Op>& c, const Signal& u) {
    detail::check_domain(c.base.op, u.size());
    return u.with_values(detail::fsi_update(c, u.values()));
}

/// Runs `cycles` FSI cycles; one trajectory row per completed cycle at time
/// k * super_time.
template <LinearOperator Op>
ChainResult run_fsi(const FsiCycle<Op>& c, const Signal& u0, std::size_t cycles) {
    detail::check_domain(c.base.op, u0.size());
    const double dt = super_time(c);
    TrajectoryRecord rec;
    rec.rows.push_back(make_row(c.base, 0, 0.0, u0));
    Signal u = u0;
    for (std::size_t k = 1; k <= cycles; ++k) {
        std::vector<double> next;
        try {
            next = detail::fsi_update(c, u.values());
        } catch (const DivergenceError&) {
            throw DivergenceError("FSI run diverged in cycle", k);
        }
        u = u.with_values(std::move(next));
        rec.rows.push_back(make_row(c.base, k, static_cast<double>(k) * dt, u));
    }
    return {std::move(u), std::move(rec)};
}

}  // namespace diffnet
