#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/operators.hpp"
#include "diffnet/signal.hpp"

namespace diffnet {

enum class FluxKind { linear, perona_malik_exp, charbonnier };

/// Diffusivity g(s^2) with its flux Phi(s) = g(s^2) s and energy integrand
/// Psi(s^2), normalised so that Psi(0) = 0 and dPsi/d(s^2) = g.
///
/// Scaled by a time step, Phi is the activation of a diffusion block. The
/// Perona-Malik flux is antisymmetric and nonmonotone, with extrema at +-lambda.
struct FluxFunction {
    FluxKind kind = FluxKind::linear;
    double lambda = 1.0;  // contrast parameter; ignored by the linear kind

    FluxFunction() = default;
    FluxFunction(FluxKind k, double lam = 1.0) : kind(k), lambda(lam) {
        if (kind != FluxKind::linear && (!(lambda > 0.0) || !std::isfinite(lambda))) {
            throw ParameterError("contrast parameter lambda must be positive");
        }
    }

    static FluxFunction linear() { return FluxFunction(FluxKind::linear); }
    static FluxFunction perona_malik(double lam) { return FluxFunction(FluxKind::perona_malik_exp, lam); }
    static FluxFunction charbonnier(double lam) { return FluxFunction(FluxKind::charbonnier, lam); }

    bool operator==(const FluxFunction&) const = default;
};

inline double diffusivity(const FluxFunction& f, double s2) {
    switch (f.kind) {
        case FluxKind::linear: return 1.0;
        case FluxKind::perona_malik_exp: return std::exp(-s2 / (2.0 * f.lambda * f.lambda));
        case FluxKind::charbonnier: return 1.0 / std::sqrt(1.0 + s2 / (f.lambda * f.lambda));
    }
    return 1.0;
}

inline double flux(const FluxFunction& f, double s) { return diffusivity(f, s * s) * s; }

/// Lipschitz constant of Phi. All three kinds attain max |Phi'| = 1 at s = 0.
inline double lipschitz_constant(const FluxFunction& f) {
    switch (f.kind) {
        case FluxKind::linear:
        case FluxKind::perona_malik_exp:
        case FluxKind::charbonnier: return 1.0;
    }
    return 1.0;
}

/// Psi(s^2). Generic in the scalar type so that derivative checks can run in
/// extended precision.
template <class T = double>
T energy_density(const FluxFunction& f, T s2) {
    using std::expm1;
    using std::sqrt;
    const T l2 = T(f.lambda) * T(f.lambda);
    switch (f.kind) {
        case FluxKind::linear: return s2;
        case FluxKind::perona_malik_exp: return T(2) * l2 * -expm1(-s2 / (T(2) * l2));
        case FluxKind::charbonnier: return T(2) * l2 * (sqrt(T(1) + s2 / l2) - T(1));
    }
    return s2;
}

/// Phi applied componentwise.
inline std::vector<double> apply_flux(const FluxFunction& f, std::span<const double> s) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = flux(f, s[i]);
    return out;
}

/// Discrete energy h * sum_i Psi((K u)_i^2).
template <LinearOperator Op>
double energy(const FluxFunction& f, const Op& op, const Signal& u) {
    const auto ku = op.apply(u.values());
    double e = 0.0;
    for (double s : ku) e += energy_density(f, s * s);
    return u.h() * e;
}

inline std::string_view flux_name(FluxKind k) {
    switch (k) {
        case FluxKind::linear: return "linear";
        case FluxKind::perona_malik_exp: return "pm_exp";
        case FluxKind::charbonnier: return "charbonnier";
    }
    return "linear";
}

inline FluxKind parse_flux_kind(std::string_view name) {
    if (name == "linear") return FluxKind::linear;
    if (name == "pm_exp") return FluxKind::perona_malik_exp;
    if (name == "charbonnier") return FluxKind::charbonnier;
    throw ParameterError("unknown flux kind '" + std::string(name) +
                         "' (expected linear, pm_exp or charbonnier)");
}

}  // namespace diffnet
