#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "diffnet/error.hpp"

namespace diffnet {

// ---------------------------------------------------------------------------
// Plain vector helpers shared by every module. Operators map between spaces of
// different dimension, so they work on spans rather than on Signal.
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw SizeError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Euclidean norm; rescales when squaring would underflow or overflow.
inline double norm2(std::span<const double> a) {
    double big = 0.0;
    for (double v : a) big = std::max(big, std::abs(v));
    if (big == 0.0 || (big > 1e-150 && big < 1e150)) return std::sqrt(dot(a, a));
    double s = 0.0;
    for (double v : a) s += (v / big) * (v / big);
    return big * std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// Formats with 17 significant digits, which round-trips every double.
inline std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// Sampled 1D function on a uniform grid. Immutable once constructed: at least
/// two samples, every sample finite, spacing h > 0.
class Signal {
public:
    Signal(std::vector<double> values, double h = 1.0) : values_(std::move(values)), h_(h) {
        if (values_.size() < 2) {
            throw SizeError("signal needs at least 2 samples, got " +
                            std::to_string(values_.size()));
        }
        if (!(h_ > 0.0) || !std::isfinite(h_)) {
            throw ParameterError("grid spacing must be positive and finite");
        }
        if (!all_finite(values_)) throw ParameterError("signal contains non-finite samples");
    }

    /// Constant signal of length n.
    static Signal constant(std::size_t n, double c, double h = 1.0) {
        return Signal(std::vector<double>(n, c), h);
    }

    std::size_t size() const noexcept { return values_.size(); }
    double h() const noexcept { return h_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    /// Same grid, new samples.
    Signal with_values(std::vector<double> v) const {
        if (v.size() != values_.size()) {
            throw SizeError("with_values: length " + std::to_string(v.size()) +
                            " does not match signal length " + std::to_string(values_.size()));
        }
        return Signal(std::move(v), h_);
    }

    bool operator==(const Signal&) const = default;

private:
    std::vector<double> values_;
    double h_;
};

/// Unweighted Euclidean norm, sqrt(sum of squares).
inline double l2_norm(const Signal& s) { return norm2(s.values()); }

inline double mean(const Signal& s) {
    auto v = s.values();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double distance(const Signal& a, const Signal& b) {
    if (a.size() != b.size()) throw SizeError("distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Text format: one decimal value per line; lines starting with '#' (after
// optional whitespace) and blank lines are skipped. h is not stored.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace detail

inline Signal parse_signal(std::istream& in, double h = 1.0) {
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = detail::trim(line);
        if (tok.empty() || tok.front() == '#') continue;
        double v = 0.0;
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        if (*first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) {
            throw ParseError("not a number: '" + std::string(tok) + "'", lineno);
        }
        if (!std::isfinite(v)) throw ParseError("non-finite sample", lineno);
        values.push_back(v);
    }
    if (values.size() < 2) {
        throw SizeError("signal file holds " + std::to_string(values.size()) +
                        " samples; at least 2 required");
    }
    return Signal(std::move(values), h);
}

inline Signal read_signal(const std::string& path, double h = 1.0) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open signal file: " + path);
    return parse_signal(in, h);
}

inline void format_signal(std::ostream& out, const Signal& s) {
    for (double v : s.values()) out << format_real(v) << '\n';
}

inline void write_signal(const Signal& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write signal file: " + path);
    format_signal(out, s);
    if (!out) throw Error("write failed: " + path);
}

}  // namespace diffnet
