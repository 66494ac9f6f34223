#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lal/errors.hpp"

namespace lal {

// Flat parameter vector: model weights or a quadratic iterate.
using ParamVector = std::vector<double>;

inline bool all_finite(const ParamVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void check_finite(const ParamVector& v, const char* what) {
    if (!all_finite(v)) throw NumericError(std::string(what) + ": non-finite entry");
}

inline void check_same_length(const ParamVector& a, const ParamVector& b, const char* what) {
    if (a.size() != b.size())
        throw DimensionError(std::string(what) + ": length mismatch (" +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

inline double dot(const ParamVector& a, const ParamVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// sum_i a_i * w_i * b_i for a diagonal weight w.
inline double weighted_dot(const ParamVector& a, const ParamVector& w, const ParamVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * w[i] * b[i];
    return s;
}

inline double norm2(const ParamVector& a) { return std::sqrt(dot(a, a)); }

// x^n for integer n >= 0 by repeated squaring; deterministic across platforms.
inline double ipow(double x, long n) {
    double r = 1.0, base = x;
    while (n > 0) {
        if (n & 1) r *= base;
        base *= base;
        n >>= 1;
    }
    return r;
}

}  // namespace lal
