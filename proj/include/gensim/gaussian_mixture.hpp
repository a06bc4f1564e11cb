#pragma once

// Isotropic Gaussian mixtures: the hierarchical process, the closed-form
// two-component generative similarity, and the linear-projection results.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "gensim/core.hpp"
#include "gensim/rng.hpp"
#include "gensim/stats.hpp"

namespace gensim {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// Mixture of isotropic Gaussians with one shared variance.
class GaussianMixture {
public:
    GaussianMixture(std::vector<Vec> means, double variance, Vec weights = {})
        : means_(std::move(means)), variance_(variance), weights_(std::move(weights)) {
        if (means_.empty()) throw std::invalid_argument("GaussianMixture: need >= 1 component");
        const std::size_t d = means_.front().size();
        if (d == 0) throw std::invalid_argument("GaussianMixture: zero-dimensional means");
        for (const Vec& m : means_)
            if (m.size() != d) throw std::invalid_argument("GaussianMixture: means differ in dimension");
        if (!(variance_ > 0.0) || !std::isfinite(variance_))
            throw std::invalid_argument("GaussianMixture: variance must be positive");
        if (weights_.empty()) weights_.assign(means_.size(), 1.0 / static_cast<double>(means_.size()));
        if (weights_.size() != means_.size())
            throw std::invalid_argument("GaussianMixture: one weight per component");
        double total = 0;
        for (double w : weights_) {
            if (!(w >= 0.0)) throw std::invalid_argument("GaussianMixture: negative weight");
            total += w;
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw std::invalid_argument("GaussianMixture: weights must sum to 1");
    }

    /// The two-component mixture used throughout the Gaussian experiment:
    /// means (5,5) and (1,1), unit variance.
    static GaussianMixture standard_2d() { return GaussianMixture({{5.0, 5.0}, {1.0, 1.0}}, 1.0); }

    std::size_t components() const noexcept { return means_.size(); }
    std::size_t dim() const noexcept { return means_.front().size(); }
    const std::vector<Vec>& means() const noexcept { return means_; }
    const Vec& weights() const noexcept { return weights_; }
    double variance() const noexcept { return variance_; }

    bool uniform_weights() const noexcept {
        for (double w : weights_)
            if (std::fabs(w - weights_.front()) > 1e-12) return false;
        return true;
    }

    std::size_t sample_component(Rng& rng) const {
        return std::discrete_distribution<std::size_t>(weights_.begin(), weights_.end())(rng);
    }

    Vec sample_from(std::size_t k, Rng& rng) const {
        const double sd = std::sqrt(variance_);
        Vec x(dim());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = normal(rng, means_.at(k)[i], sd);
        return x;
    }

    Vec sample(Rng& rng) const { return sample_from(sample_component(rng), rng); }

    /// log N(x; mu_k, variance * I).
    double log_density(const Vec& x, std::size_t k) const {
        const double d = static_cast<double>(dim());
        return -0.5 * squared_distance(x, means_.at(k)) / variance_ -
               0.5 * d * std::log(2.0 * std::numbers::pi * variance_);
    }

private:
    std::vector<Vec> means_;
    double variance_;
    Vec weights_;
};

/// theta = component index; datum = a draw from that component.
inline HierarchicalProcess<std::size_t, Vec> as_process(const GaussianMixture& mix) {
    HierarchicalProcess<std::size_t, Vec> p;
    p.sample_param = [mix](Rng& rng) { return mix.sample_component(rng); };
    p.sample_datum = [mix](const std::size_t& k, Rng& rng) { return mix.sample_from(k, rng); };
    p.log_likelihood = [mix](const Vec& x, const std::size_t& k) { return mix.log_density(x, k); };
    p.label_of = [](const std::size_t& k) { return static_cast<int>(k); };
    return p;
}

/// Exact log generative similarity for a uniform two-component mixture:
///
///   log [ 1/2 g1(x1) g1(x2) + 1/2 g2(x1) g2(x2) ]
///     - log [ 1/2 g1(x1) + 1/2 g2(x1) ] - log [ 1/2 g1(x2) + 1/2 g2(x2) ]
///
/// where g_k(x) = exp(-||x - mu_k||^2 / (2 sigma^2)); the Gaussian normalizer
/// cancels between numerator and denominator.
inline double closed_form_log_gen_sim(const GaussianMixture& mix, const Vec& x1, const Vec& x2) {
    if (mix.components() != 2) throw std::invalid_argument("closed form needs exactly 2 components");
    if (!mix.uniform_weights()) throw std::invalid_argument("closed form needs uniform weights");
    if (x1.size() != mix.dim() || x2.size() != mix.dim())
        throw std::invalid_argument("closed_form_log_gen_sim: dimension mismatch");
    const double s2 = 2.0 * mix.variance();
    const double half = std::log(0.5);
    double a[2], b[2];
    for (std::size_t k = 0; k < 2; ++k) {
        a[k] = -squared_distance(x1, mix.means()[k]) / s2;
        b[k] = -squared_distance(x2, mix.means()[k]) / s2;
    }
    const double num = log_add_exp(half + (a[0] + b[0]), half + (a[1] + b[1]));
    const double den = log_add_exp(half + a[0], half + a[1]) + log_add_exp(half + b[0], half + b[1]);
    return num - den;
}

/// -4 ||mu||^2 cos^2(angle(phi, mu)) for a unit projection phi.
inline double analytic_linear_loss(const Vec& phi, const Vec& mu) {
    if (std::fabs(norm(phi) - 1.0) > 1e-9) throw std::invalid_argument("phi must be a unit vector");
    const double mu_norm = norm(mu);
    if (mu_norm == 0.0) throw std::invalid_argument("mu must have nonzero norm");
    const double c = dot(phi, mu) / mu_norm;
    return -4.0 * mu_norm * mu_norm * c * c;
}

/// Per-triplet dot-product contrast (phi.x)(phi.x-) - (phi.x)(phi.x+).
inline double linear_contrast(const Vec& phi, const Triplet<Vec>& t) {
    const double pa = dot(phi, t.anchor);
    return pa * dot(phi, t.negative) - pa * dot(phi, t.positive);
}

struct MonteCarloMean {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo mean of the dot-product contrast over n fresh triplets.
inline MonteCarloMean empirical_linear_loss(const Vec& phi, const GaussianMixture& mix, Rng& rng,
                                            std::size_t n_triplets) {
    if (std::fabs(norm(phi) - 1.0) > 1e-9) throw std::invalid_argument("phi must be a unit vector");
    if (phi.size() != mix.dim()) throw std::invalid_argument("phi dimension mismatch");
    if (n_triplets < 2) throw std::invalid_argument("need >= 2 triplets");
    const auto process = as_process(mix);
    std::vector<double> v(n_triplets);
    for (auto& x : v) x = linear_contrast(phi, sample_triplet(process, rng));
    return {mean(v), sample_sd(v) / std::sqrt(static_cast<double>(n_triplets))};
}

/// (mu1 - mu2) / ||mu1 - mu2||, sign fixed so the first nonzero entry is positive.
inline Vec optimal_projection(const Vec& mu1, const Vec& mu2) {
    if (mu1.size() != mu2.size()) throw std::invalid_argument("optimal_projection: dimension mismatch");
    Vec d(mu1.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mu1[i] - mu2[i];
    const double n = norm(d);
    if (n == 0.0) throw std::invalid_argument("optimal_projection: means are equal");
    double sign = 1.0;
    for (double x : d)
        if (x != 0.0) {
            sign = x > 0 ? 1.0 : -1.0;
            break;
        }
    for (double& x : d) x *= sign / n;
    return d;
}

/// Projected stochastic gradient descent of the dot-product contrast over the
/// unit sphere. Returns the final unit vector.
inline Vec fit_linear_projection(const GaussianMixture& mix, Rng& rng, std::size_t steps = 400,
                                 std::size_t batch = 64, double learning_rate = 0.01) {
    const auto process = as_process(mix);
    Vec phi(mix.dim());
    for (double& x : phi) x = normal(rng);
    double n0 = norm(phi);
    for (double& x : phi) x /= n0;
    Vec grad(mix.dim());
    for (std::size_t s = 0; s < steps; ++s) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            const Triplet<Vec> t = sample_triplet(process, rng);
            const double pa = dot(phi, t.anchor), pp = dot(phi, t.positive), pn = dot(phi, t.negative);
            for (std::size_t i = 0; i < grad.size(); ++i)
                grad[i] += t.anchor[i] * (pn - pp) + pa * (t.negative[i] - t.positive[i]);
        }
        for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= learning_rate * grad[i] / static_cast<double>(batch);
        const double n = norm(phi);
        if (!(n > 0.0) || !std::isfinite(n)) throw NumericFailure("fit_linear_projection diverged");
        for (double& x : phi) x /= n;
    }
    return phi;
}

}  // namespace gensim
