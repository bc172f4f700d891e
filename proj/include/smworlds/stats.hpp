#pragma once

// Goodness-of-fit and interval helpers for ensemble statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "error.hpp"

namespace smw::stats {

/// Large-sample two-sided Kolmogorov-Smirnov critical value sqrt(-ln(alpha/2)/2)/sqrt(n).
inline double ks_critical(double alpha, std::size_t n) {
    return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

/// One-sample KS statistic of `samples` against the CDF of a density that is
/// constant on the cells of a periodic grid (cell j covers [x_j - h/2, x_j + h/2)).
/// `cell_mass` holds the probability of each cell; it is renormalized.
inline double ks_statistic_cells(std::vector<double> samples, std::span<const double> cell_mass, double first_center,
                                 double spacing) {
    if (samples.empty()) throw ConfigError("ks_statistic_cells(): no samples");
    std::vector<double> cdf(cell_mass.size() + 1, 0.0);
    for (std::size_t j = 0; j < cell_mass.size(); ++j) cdf[j + 1] = cdf[j] + cell_mass[j];
    const double total = cdf.back();
    if (!(total > 0.0)) throw ConfigError("ks_statistic_cells(): reference has no mass");
    const double lo = first_center - 0.5 * spacing;
    auto ref = [&](double x) {
        const double u = (x - lo) / spacing;
        if (u <= 0.0) return 0.0;
        const auto j = static_cast<std::size_t>(u);
        if (j >= cell_mass.size()) return 1.0;
        return (cdf[j] + (u - static_cast<double>(j)) * cell_mass[j]) / total;
    };
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = ref(samples[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Pearson chi-square statistic and upper-tail p-value; bins with zero expectation are skipped.
struct ChiSquare {
    double statistic = 0.0;
    std::size_t dof = 0;
    double p_value = 1.0;
};

inline ChiSquare chi_square(std::span<const double> observed, std::span<const double> expected) {
    if (observed.size() != expected.size()) throw ConfigError("chi_square(): size mismatch");
    ChiSquare r;
    std::size_t bins = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] <= 0.0) continue;
        const double diff = observed[i] - expected[i];
        r.statistic += diff * diff / expected[i];
        ++bins;
    }
    if (bins < 2) throw ConfigError("chi_square(): need at least two populated bins");
    r.dof = bins - 1;
    r.p_value = boost::math::gamma_q(0.5 * static_cast<double>(r.dof), 0.5 * r.statistic);
    return r;
}

/// Chi-square after pooling neighbouring bins until each expected count
/// reaches `min_expected`; empty when fewer than two pooled bins remain.
inline std::optional<ChiSquare> pooled_chi_square(std::span<const double> observed, std::span<const double> expected,
                                                  double min_expected = 5.0) {
    if (observed.size() != expected.size()) throw ConfigError("pooled_chi_square(): size mismatch");
    std::vector<double> po, pe;
    double o_acc = 0.0, e_acc = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        o_acc += observed[i];
        e_acc += expected[i];
        if (e_acc >= min_expected) {
            po.push_back(o_acc);
            pe.push_back(e_acc);
            o_acc = e_acc = 0.0;
        }
    }
    if (!pe.empty()) {
        po.back() += o_acc;
        pe.back() += e_acc;
    }
    if (pe.size() < 2) return std::nullopt;
    return chi_square(po, pe);
}

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval for a binomial proportion (z = 1.96 for 95%).
inline Interval wilson(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Two-sided tail mass outside +-3 standard deviations of a normal law.
inline constexpr double three_sigma_alpha = 0.0026997960632601866;

/// Exact Clopper-Pearson interval at confidence 1 - alpha.
inline Interval clopper_pearson(std::size_t successes, std::size_t trials, double alpha = three_sigma_alpha) {
    if (trials == 0) return {0.0, 1.0};
    const double s = static_cast<double>(successes), f = static_cast<double>(trials - successes);
    const double lo = successes == 0 ? 0.0 : boost::math::ibeta_inv(s, f + 1.0, 0.5 * alpha);
    const double hi = successes == trials ? 1.0 : boost::math::ibeta_inv(s + 1.0, f, 1.0 - 0.5 * alpha);
    return {lo, hi};
}

/// Per-test level that keeps the family-wise level at alpha over m tests.
inline double sidak_alpha(double alpha, std::size_t m) { return -std::expm1(std::log1p(-alpha) / static_cast<double>(m)); }

/// Standard error of a proportion estimate sqrt(p (1 - p) / n).
inline double proportion_se(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

/// log C(n, k) p^k (1-p)^(n-k); p in [0, 1] with 0 log 0 = 0.
inline double log_binomial_pmf(std::size_t n, std::size_t k, double p) {
    const double dn = static_cast<double>(n), dk = static_cast<double>(k);
    double l = std::lgamma(dn + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dn - dk + 1.0);
    if (k > 0) l += dk * std::log(p);
    if (k < n) l += (dn - dk) * std::log1p(-p);
    return l;
}

} // namespace smw::stats
