#pragma once

// Hierarchical generative processes, Monte-Carlo generative similarity and
// triplet sampling.
//
// A process is two-level: a parameter theta ~ p(theta), then a datum
// x ~ p(x | theta). Generative similarity of (x1, x2) is the odds that both
// came from one shared theta rather than from two independent draws, under
// equal prior odds for the two hypotheses.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gensim/error.hpp"
#include "gensim/rng.hpp"
#include "gensim/stats.hpp"

namespace gensim {

/// Two-level sampler. Theta is opaque to everything except the callbacks
/// that the owning domain installs.
///
/// `log_likelihood` returns log p(x | theta) (the density itself is always
/// nonnegative; working in logs keeps paper-scale Gaussians from underflowing).
template <class Theta, class Datum>
struct HierarchicalProcess {
    using theta_type = Theta;
    using datum_type = Datum;

    std::function<Theta(Rng&)> sample_param;
    std::function<Datum(const Theta&, Rng&)> sample_datum;
    std::function<double(const Datum&, const Theta&)> log_likelihood;  // optional
    std::function<int(const Theta&)> label_of;                         // optional

    bool has_likelihood() const noexcept { return static_cast<bool>(log_likelihood); }
    bool has_labels() const noexcept { return static_cast<bool>(label_of); }
};

template <class Datum>
struct Triplet {
    Datum anchor;
    Datum positive;
    Datum negative;
    std::optional<int> theta_plus_label;
    std::optional<int> theta_minus_label;
};

struct SimilarityValue {
    double log_odds = 0.0;
    std::optional<double> std_error;
};

namespace detail {

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const SamplingError&) {
        throw;
    } catch (const std::exception& e) {
        throw SamplingError(stage, e.what());
    }
}

}  // namespace detail

/// theta+, theta- ~ p(theta) independently; anchor, positive ~ p(.|theta+);
/// negative ~ p(.|theta-). Draw order on the stream is exactly that.
template <class Theta, class Datum>
Triplet<Datum> sample_triplet(const HierarchicalProcess<Theta, Datum>& process, Rng& rng) {
    if (!process.sample_param || !process.sample_datum)
        throw std::invalid_argument("sample_triplet: process has no samplers");
    Theta plus = detail::run_stage("theta_plus", [&] { return process.sample_param(rng); });
    Theta minus = detail::run_stage("theta_minus", [&] { return process.sample_param(rng); });
    Triplet<Datum> t{
        detail::run_stage("anchor", [&] { return process.sample_datum(plus, rng); }),
        detail::run_stage("positive", [&] { return process.sample_datum(plus, rng); }),
        detail::run_stage("negative", [&] { return process.sample_datum(minus, rng); }),
        std::nullopt,
        std::nullopt,
    };
    if (process.has_labels()) {
        t.theta_plus_label = process.label_of(plus);
        t.theta_minus_label = process.label_of(minus);
    }
    return t;
}

/// n successive sample_triplet calls on the same stream.
template <class Theta, class Datum>
std::vector<Triplet<Datum>> sample_triplet_batch(const HierarchicalProcess<Theta, Datum>& process,
                                                 Rng& rng, std::size_t n) {
    if (n == 0) throw std::invalid_argument("sample_triplet_batch: n must be >= 1");
    std::vector<Triplet<Datum>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_triplet(process, rng));
    return out;
}

/// Paired Monte-Carlo estimate of log s_gen(x1, x2) from log-likelihood
/// columns a_k = log p(x1|theta_k), b_k = log p(x2|theta_k):
///
///   log mean(e^{a+b}) - log mean(e^a) - log mean(e^b)
///
/// with a delete-one jackknife standard error.
inline SimilarityValue log_gen_sim_from_log_likelihoods(std::span<const double> a,
                                                        std::span<const double> b) {
    const std::size_t n = a.size();
    if (n != b.size()) throw std::invalid_argument("log-likelihood columns differ in length");
    if (n < 2) throw std::invalid_argument("mc_log_gen_sim: n_theta must be >= 2");

    std::vector<double> ab(n);
    for (std::size_t k = 0; k < n; ++k) ab[k] = a[k] + b[k];

    auto shifted = [](std::span<const double> v, double& shift) {
        shift = -std::numeric_limits<double>::infinity();
        for (double x : v) shift = std::max(shift, x);
        std::vector<double> e(v.size(), 0.0);
        if (!std::isfinite(shift)) return e;
        for (std::size_t k = 0; k < v.size(); ++k) e[k] = std::exp(v[k] - shift);
        return e;
    };
    double sa = 0, sb = 0, sab = 0;
    const std::vector<double> ea = shifted(a, sa), eb = shifted(b, sb), eab = shifted(ab, sab);
    if (!std::isfinite(sa) || !std::isfinite(sb))
        throw DegenerateDensity("mc_log_gen_sim: marginal likelihood estimate is zero");

    double ta = 0, tb = 0, tab = 0;
    for (std::size_t k = 0; k < n; ++k) {
        ta += ea[k];
        tb += eb[k];
        tab += eab[k];
    }
    // The 1/n factors: numerator has one, denominator two, leaving +log n.
    const double logn = std::log(static_cast<double>(n));
    auto estimate = [&](double s_ab, double s_a, double s_b, double log_count) {
        // Marginal terms are summed first so swapping x1 and x2 is bit-exact.
        return (sab + std::log(s_ab)) - ((sa + std::log(s_a)) + (sb + std::log(s_b))) + log_count;
    };
    SimilarityValue out;
    out.log_odds = estimate(tab, ta, tb, logn);

    // Delete-one jackknife. Subtracting one term from the running sum is exact
    // enough unless that term dominates, in which case recompute directly.
    auto drop = [&](const std::vector<double>& e, double total, std::size_t k) {
        const double r = total - e[k];
        if (r > 1e-8 * total) return r;
        double s = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != k) s += e[j];
        return s;
    };
    const double logn1 = std::log(static_cast<double>(n - 1));
    std::vector<double> loo(n);
    bool finite = true;
    for (std::size_t k = 0; k < n; ++k) {
        loo[k] = estimate(drop(eab, tab, k), drop(ea, ta, k), drop(eb, tb, k), logn1);
        finite = finite && std::isfinite(loo[k]);
    }
    if (finite) {
        const double m = mean(loo);
        double ss = 0;
        for (double v : loo) ss += (v - m) * (v - m);
        out.std_error = std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
    }
    return out;
}

/// Same estimator on a caller-supplied theta sample set (used to check
/// symmetry and to share draws across many pairs).
template <class Theta, class Datum>
SimilarityValue mc_log_gen_sim_on(const HierarchicalProcess<Theta, Datum>& process,
                                  const Datum& x1, const Datum& x2,
                                  std::span<const Theta> thetas) {
    if (!process.has_likelihood())
        throw std::invalid_argument("mc_log_gen_sim: process has no likelihood");
    std::vector<double> a(thetas.size()), b(thetas.size());
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        a[k] = process.log_likelihood(x1, thetas[k]);
        b[k] = process.log_likelihood(x2, thetas[k]);
    }
    return log_gen_sim_from_log_likelihoods(a, b);
}

template <class Theta, class Datum>
SimilarityValue mc_log_gen_sim(const HierarchicalProcess<Theta, Datum>& process, const Datum& x1,
                               const Datum& x2, std::size_t n_theta, Rng& rng) {
    if (!process.has_likelihood())
        throw std::invalid_argument("mc_log_gen_sim: process has no likelihood");
    if (n_theta < 2) throw std::invalid_argument("mc_log_gen_sim: n_theta must be >= 2");
    std::vector<Theta> thetas;
    thetas.reserve(n_theta);
    for (std::size_t k = 0; k < n_theta; ++k)
        thetas.push_back(detail::run_stage("theta", [&] { return process.sample_param(rng); }));
    return mc_log_gen_sim_on<Theta, Datum>(process, x1, x2, thetas);
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("euclidean: dimension mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

struct PairDistanceSummary {
    double mean_same = 0.0;
    double mean_diff = 0.0;
    Interval ci_same;
    Interval ci_diff;

    /// The separation claim: same pairs closer, 95% intervals disjoint.
    bool separated() const noexcept { return mean_same < mean_diff && ci_same.hi < ci_diff.lo; }
};

/// Mean embedding distance of (anchor, positive) and (anchor, negative) over
/// n fresh triplets, with 1.96-sigma normal intervals. `embed` maps a datum
/// to a real vector.
template <class Theta, class Datum, class Embed>
PairDistanceSummary expected_pair_distances(Embed&& embed,
                                            const HierarchicalProcess<Theta, Datum>& process,
                                            Rng& rng, std::size_t n) {
    if (n < 2) throw std::invalid_argument("expected_pair_distances: n must be >= 2");
    std::vector<double> same(n), diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Triplet<Datum> t = sample_triplet(process, rng);
        const std::vector<double> ea = embed(t.anchor);
        same[i] = euclidean(ea, embed(t.positive));
        diff[i] = euclidean(ea, embed(t.negative));
    }
    return {mean(same), mean(diff), normal_ci(same), normal_ci(diff)};
}

}  // namespace gensim
