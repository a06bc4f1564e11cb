#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace gensim {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    bool overlaps(const Interval& o) const noexcept { return lo <= o.hi && o.lo <= hi; }
    double width() const noexcept { return hi - lo; }
};

/// log(sum(exp(v))) with max-shift; -inf for empty input or all -inf.
inline double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_add_exp(double a, double b) {
    if (a < b) std::swap(a, b);
    if (a == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean of empty sequence");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased sample standard deviation (n-1 denominator); 0 for n < 2.
inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// mean +- z * sd / sqrt(n).
inline Interval normal_ci(std::span<const double> v, double z = 1.96) {
    const double m = mean(v);
    const double half = z * sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
    return {m - half, m + half};
}

/// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Two-sided p-value of Student's t with `dof` degrees of freedom.
inline double student_t_two_sided_p(double t, double dof) {
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(dof), std::fabs(t)));
}

inline double student_t_quantile_975(double dof) { return boost::math::quantile(boost::math::students_t(dof), 0.975); }

/// Upper tail P(X > x) of a chi-square variable.
inline double chi_square_sf(double x, double dof) {
    if (x <= 0) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x));
}

}  // namespace gensim
