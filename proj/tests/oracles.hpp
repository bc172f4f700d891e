#pragma once

// Independent reference values used by the tests. Nothing here calls into the
// library's own numerics.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using cplx = std::complex<double>;
using rational = boost::multiprecision::cpp_rational;

/// Position spread of a free Gaussian with initial spread s0 (hbar = 1).
inline double free_width(double s0, double t, double mass = 1.0) {
    const double r = t / (2.0 * mass * s0 * s0);
    return s0 * std::sqrt(1.0 + r * r);
}

/// d(sigma)/dt divided by sigma for the free Gaussian.
inline double free_width_rate(double s0, double t, double mass = 1.0) {
    const double r = t / (2.0 * mass * s0 * s0);
    return r / (2.0 * mass * s0 * s0) / (1.0 + r * r);
}

/// Evolved free Gaussian amplitude at x (initial center 0, no momentum).
inline cplx free_gaussian(double x, double s0, double t, double mass = 1.0) {
    const cplx st = s0 * (1.0 + cplx(0.0, t / (2.0 * mass * s0 * s0)));
    return std::pow(2.0 * M_PI * st * st, -0.25) * std::exp(-x * x / (4.0 * s0 * st));
}

/// Exact binomial sum over k with |k/n - p| <= w, p and w given as n-exact rationals.
inline rational binomial_window(unsigned n, const rational& p, const rational& w) {
    rational total = 0;
    const rational q = 1 - p;
    boost::multiprecision::cpp_int c = 1;
    for (unsigned k = 0; k <= n; ++k) {
        if (k > 0) c = c * (n - k + 1) / k;
        rational freq(k, n);
        rational dev = freq > p ? freq - p : p - freq;
        if (dev <= w) {
            rational term = rational(c);
            for (unsigned i = 0; i < k; ++i) term *= p;
            for (unsigned i = 0; i < n - k; ++i) term *= q;
            total += term;
        }
    }
    return total;
}

inline double binomial_pmf(unsigned n, unsigned k, double p) {
    double c = 1.0;
    for (unsigned i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

/// Standard normal upper quantile for the two-sided 3 sigma bands.
inline constexpr double three_sigma = 3.0;

inline double binomial_se(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

} // namespace oracle
