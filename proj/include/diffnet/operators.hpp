#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "diffnet/error.hpp"
#include "diffnet/random.hpp"
#include "diffnet/signal.hpp"

namespace diffnet {

/// A matrix-free linear map K: R^domain -> R^codomain together with its exact
/// transpose. Everything downstream (diffusion blocks, FSI, fixed-point solver,
/// norm estimation) is written against this concept, so stencil operators and
/// arbitrary dense matrices go through the same code.
template <class Op>
concept LinearOperator = requires(const Op& op, std::span<const double> x) {
    { op.domain_size() } -> std::convertible_to<std::size_t>;
    { op.codomain_size() } -> std::convertible_to<std::size_t>;
    { op.apply(x) } -> std::same_as<std::vector<double>>;
    { op.apply_adjoint(x) } -> std::same_as<std::vector<double>>;
};

/// One term alpha_m * d^m/dx^m of a differential operator.
struct DerivativeWeight {
    int order = 1;
    double alpha = 1.0;

    bool operator==(const DerivativeWeight&) const = default;
};

/// Finite-difference discretisation of sum_m alpha_m d^m/dx^m on N samples with
/// reflecting boundaries.
///
/// Each order contributes one block of rows, stacked in the order the weights
/// were given:
///   m = 0: alpha_0 * u_i                                   (N rows)
///   m = 1: alpha_1 * (u_{i+1} - u_i) / h                   (N-1 rows, cell midpoints)
///   m = 2: alpha_2 * (u_{i-1} - 2 u_i + u_{i+1}) / h^2     (N rows, u_{-1}=u_0, u_N=u_{N-1})
/// The adjoint is the sum of the per-block adjoints. With alpha_0 = 0 every
/// block maps constants to exactly zero.
class StencilOp {
public:
    static constexpr int max_order = 2;

    StencilOp(std::vector<DerivativeWeight> weights, double h, std::size_t n)
        : weights_(std::move(weights)), h_(h), n_(n) {
        if (weights_.empty()) throw ParameterError("operator needs at least one derivative weight");
        if (!(h_ > 0.0) || !std::isfinite(h_)) throw ParameterError("grid spacing must be positive");
        if (n_ < 2) throw SizeError("operator needs N >= 2, got " + std::to_string(n_));
        std::size_t offset = 0;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const auto& w = weights_[k];
            if (w.order < 0 || w.order > max_order) {
                throw CapabilityError("derivative order " + std::to_string(w.order) +
                                      " not supported (0 <= m <= 2)");
            }
            if (!std::isfinite(w.alpha)) throw ParameterError("derivative weight must be finite");
            for (std::size_t j = 0; j < k; ++j) {
                if (weights_[j].order == w.order) {
                    throw ParameterError("derivative order " + std::to_string(w.order) +
                                         " listed twice");
                }
            }
            offsets_.push_back(offset);
            offset += block_rows(w.order);
        }
        rows_ = offset;
    }

    std::size_t domain_size() const noexcept { return n_; }
    std::size_t codomain_size() const noexcept { return rows_; }
    double h() const noexcept { return h_; }
    const std::vector<DerivativeWeight>& weights() const noexcept { return weights_; }

    /// True when no zeroth-order term is present, i.e. K * 1 = 0.
    bool annihilates_constants() const noexcept {
        return std::none_of(weights_.begin(), weights_.end(),
                            [](const DerivativeWeight& w) { return w.order == 0 && w.alpha != 0.0; });
    }

    /// Same weights, rebuilt on another grid.
    StencilOp rediscretized(double h, std::size_t n) const { return StencilOp(weights_, h, n); }

    std::vector<double> apply(std::span<const double> u) const {
        if (u.size() != n_) {
            throw SizeError("apply: expected " + std::to_string(n_) + " samples, got " +
                            std::to_string(u.size()));
        }
        std::vector<double> out(rows_);
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const double a = weights_[k].alpha;
            double* o = out.data() + offsets_[k];
            switch (weights_[k].order) {
                case 0:
                    for (std::size_t i = 0; i < n_; ++i) o[i] = a * u[i];
                    break;
                case 1: {
                    const double c = a / h_;
                    for (std::size_t i = 0; i + 1 < n_; ++i) o[i] = c * (u[i + 1] - u[i]);
                    break;
                }
                case 2: {
                    const double c = a / (h_ * h_);
                    for (std::size_t i = 0; i < n_; ++i) {
                        const double left = i == 0 ? u[0] : u[i - 1];
                        const double right = i + 1 == n_ ? u[n_ - 1] : u[i + 1];
                        o[i] = c * ((left - 2.0 * u[i]) + right);
                    }
                    break;
                }
            }
        }
        return out;
    }

    std::vector<double> apply_adjoint(std::span<const double> v) const {
        if (v.size() != rows_) {
            throw SizeError("apply_adjoint: expected " + std::to_string(rows_) + " values, got " +
                            std::to_string(v.size()));
        }
        std::vector<double> out(n_, 0.0);
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            const double a = weights_[k].alpha;
            const double* p = v.data() + offsets_[k];
            switch (weights_[k].order) {
                case 0:
                    for (std::size_t i = 0; i < n_; ++i) out[i] += a * p[i];
                    break;
                case 1: {
                    // Transpose of the forward difference: zero flux through both ends.
                    const double c = a / h_;
                    out[0] += -c * p[0];
                    for (std::size_t i = 1; i + 1 < n_; ++i) out[i] += c * (p[i - 1] - p[i]);
                    out[n_ - 1] += c * p[n_ - 2];
                    break;
                }
                case 2: {
                    // The reflected second difference is a symmetric matrix.
                    const double c = a / (h_ * h_);
                    for (std::size_t i = 0; i < n_; ++i) {
                        const double left = i == 0 ? p[0] : p[i - 1];
                        const double right = i + 1 == n_ ? p[n_ - 1] : p[i + 1];
                        out[i] += c * ((left - 2.0 * p[i]) + right);
                    }
                    break;
                }
            }
        }
        return out;
    }

private:
    std::size_t block_rows(int order) const { return order == 1 ? n_ - 1 : n_; }

    std::vector<DerivativeWeight> weights_;
    double h_;
    std::size_t n_;
    std::size_t rows_ = 0;
    std::vector<std::size_t> offsets_;
};

inline StencilOp build_operator(std::vector<DerivativeWeight> weights, double h, std::size_t n) {
    return StencilOp(std::move(weights), h, n);
}

/// Forward difference (u_{i+1} - u_i)/h: the 1D Perona-Malik operator.
inline StencilOp forward_difference(double h, std::size_t n) { return StencilOp({{1, 1.0}}, h, n); }

/// Explicit row-major matrix. Used to exercise the stability theory on
/// operators without convolution structure.
class DenseOperator {
public:
    DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), a_(std::move(entries)) {
        if (rows_ == 0 || cols_ == 0) throw SizeError("dense operator needs nonzero dimensions");
        if (a_.size() != rows_ * cols_) throw SizeError("dense operator: entry count mismatch");
    }

    std::size_t domain_size() const noexcept { return cols_; }
    std::size_t codomain_size() const noexcept { return rows_; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    std::vector<double> apply(std::span<const double> x) const {
        if (x.size() != cols_) throw SizeError("dense apply: dimension mismatch");
        std::vector<double> y(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* row = a_.data() + i * cols_;
            double s = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) s += row[j] * x[j];
            y[i] = s;
        }
        return y;
    }

    std::vector<double> apply_adjoint(std::span<const double> y) const {
        if (y.size() != rows_) throw SizeError("dense adjoint: dimension mismatch");
        std::vector<double> x(cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            const double* row = a_.data() + i * cols_;
            for (std::size_t j = 0; j < cols_; ++j) x[j] += row[j] * y[i];
        }
        return x;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> a_;
};

/// Diagonal of K^T K (squared column norms), by probing with unit vectors.
template <LinearOperator Op>
std::vector<double> gram_diagonal(const Op& op) {
    const std::size_t n = op.domain_size();
    std::vector<double> e(n, 0.0), diag(n);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const auto col = op.apply(e);
        diag[j] = dot(col, col);
        e[j] = 0.0;
    }
    return diag;
}

struct PowerIterationOptions {
    double tol = 1e-8;
    std::size_t max_iterations = 100000;
    std::uint64_t seed = 0x5eed'0f'd1ff'5eedULL;
};

/// Gershgorin lower bound on the spectrum of K^T K, clamped at 0. K^T K is
/// assembled column by column, so this costs N operator applications.
template <LinearOperator Op>
double gram_lower_bound(const Op& op) {
    const std::size_t n = op.domain_size();
    std::vector<double> e(n, 0.0);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const auto col = op.apply_adjoint(op.apply(e));
        e[j] = 0.0;
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i != j) off += std::abs(col[i]);
        }
        lo = std::min(lo, col[j] - off);
    }
    return std::max(0.0, lo);
}

/// Largest eigenvalue of K^T K (= squared spectral norm) by power iteration.
///
/// The iteration runs on K^T K - sigma I with sigma the Gershgorin lower
/// bound of K^T K; the shifted matrix stays positive semidefinite, so its
/// dominant eigenvector is unchanged, and operators with a large zeroth-order
/// part no longer converge at the crawl set by their clustered top spectrum.
///
/// Returns a Rayleigh quotient of K^T K, hence a lower bound. Iteration stops
/// once the relative increment drops below tol/2 and the geometric tail,
/// extrapolated with the largest increment ratio of the last 16 iterations, is
/// below tol/2 as well, so the result under-estimates by at most about `tol`
/// relative. An increment at or below roundoff level also stops the iteration
/// (the quotient is nondecreasing in exact arithmetic). Callers that need a
/// safe upper bound multiply by (1 + 10 tol).
template <LinearOperator Op>
double spectral_norm_sq(const Op& op, const PowerIterationOptions& opt = {}) {
    if (!(opt.tol > 0.0)) throw ParameterError("power iteration tolerance must be positive");
    const std::size_t n = op.domain_size();
    const double sigma = gram_lower_bound(op);
    Rng rng(opt.seed);
    std::vector<double> x = rng.normal_vector(n);
    const double nx = norm2(x);
    for (auto& v : x) v /= nx;

    constexpr double eps = std::numeric_limits<double>::epsilon();
    constexpr std::size_t window = 16;
    const double target = 0.5 * opt.tol;
    std::vector<double> ratios;  // ring buffer of recent increment ratios
    double q_prev = -1.0;
    double d_prev = -1.0;
    double best = 0.0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        const auto y = op.apply(x);
        const double q = dot(y, y);
        best = std::max(best, q);
        auto z = op.apply_adjoint(y);
        for (std::size_t i = 0; i < n; ++i) z[i] -= sigma * x[i];
        const double nz = norm2(z);
        if (nz == 0.0) return best;  // x is an eigenvector of the shifted matrix with eigenvalue 0
        for (std::size_t i = 0; i < n; ++i) x[i] = z[i] / nz;

        if (q_prev >= 0.0) {
            const double d = q - q_prev;
            if (d <= 8.0 * eps * q) return best;
            if (d_prev > 0.0) {
                if (ratios.size() < window) {
                    ratios.push_back(d / d_prev);
                } else {
                    ratios[it % window] = d / d_prev;
                }
                const double r = *std::max_element(ratios.begin(), ratios.end());
                if (d < target * q && r < 1.0 && d * r / (1.0 - r) < target * q) return best;
            }
            d_prev = d;
        }
        q_prev = q;
    }
    throw ConvergenceError("power iteration did not converge within " +
                           std::to_string(opt.max_iterations) + " iterations");
}

template <LinearOperator Op>
double spectral_norm_sq(const Op& op, double tol) {
    PowerIterationOptions opt;
    opt.tol = tol;
    return spectral_norm_sq(op, opt);
}

}  // namespace diffnet
