#pragma once

// Evaluation: oddball scoring, rank correlation, cross-validated linear
// probes, PCA and bootstrap intervals.

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gensim/embed_net.hpp"
#include "gensim/quad.hpp"
#include "gensim/rng.hpp"
#include "gensim/stats.hpp"

namespace gensim {

// ---------------------------------------------------------------------------
// Oddball task

/// Index of the column farthest (Euclidean) from the column mean; the lowest
/// index wins ties. `tie` reports whether a tie occurred.
inline int oddball_predict(const MatrixXd& embeddings, bool* tie = nullptr) {
    if (embeddings.cols() < 2) throw std::invalid_argument("oddball_predict: need at least two items");
    const VectorXd centre = embeddings.rowwise().mean();
    int best = 0;
    double best_d = -1;
    bool tied = false;
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j) {
        const double d = (embeddings.col(j) - centre).squaredNorm();
        if (d > best_d) {
            best_d = d;
            best = static_cast<int>(j);
            tied = false;
        } else if (d == best_d) {
            tied = true;
        }
    }
    if (tie) *tie = tied;
    return best;
}

struct OddballResult {
    std::map<std::string, double> error_rate;
    std::map<std::string, int> n_trials;
    std::array<int, 6> predicted{};  // histogram of predicted positions
    int ties = 0;
    int total = 0;
    double overall_error = 0.0;
};

/// Maps a trial to its six network input columns.
using TrialInputs = std::function<MatrixXd(const quad::OddballTrial&)>;

inline OddballResult oddball_error_rate(const NetSpec& spec, const ParamVector& params,
                                        const std::vector<quad::OddballTrial>& trials, const TrialInputs& inputs) {
    if (trials.empty()) throw std::invalid_argument("oddball_error_rate: no trials");
    OddballResult r;
    std::map<std::string, int> wrong;
    int total_wrong = 0;
    for (const auto& t : trials) {
        const MatrixXd x = inputs(t);
        if (x.cols() != 6) throw std::invalid_argument("oddball_error_rate: trial inputs must have 6 columns");
        bool tie = false;
        const int pred = oddball_predict(forward(spec, params, x), &tie);
        const std::string name(quad::name_of(t.category));
        ++r.n_trials[name];
        ++r.predicted[static_cast<std::size_t>(pred)];
        r.ties += tie;
        if (pred != t.oddball_index) {
            ++wrong[name];
            ++total_wrong;
        }
    }
    for (const auto& [name, n] : r.n_trials) r.error_rate[name] = wrong[name] / static_cast<double>(n);
    r.total = static_cast<int>(trials.size());
    r.overall_error = total_wrong / static_cast<double>(r.total);
    return r;
}

/// Pearson chi-square goodness-of-fit p-value against equal cell probabilities.
inline double chi_square_uniform_p(std::span<const int> counts) {
    if (counts.size() < 2) throw std::invalid_argument("chi_square_uniform_p: need >= 2 cells");
    const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
    if (n <= 0) throw std::invalid_argument("chi_square_uniform_p: no observations");
    const double e = n / static_cast<double>(counts.size());
    double x2 = 0;
    for (int c : counts) x2 += (c - e) * (c - e) / e;
    return chi_square_sf(x2, static_cast<double>(counts.size() - 1));
}

// ---------------------------------------------------------------------------
// Spearman correlation

inline constexpr std::size_t kExactPermutationMax = 11;

struct Correlation {
    double rho = 0.0;
    double p_value = 1.0;
    bool exact = false;  // p from full permutation enumeration
};

/// Spearman's rho with average ranks for ties. Two-sided p from all
/// permutations when n <= kExactPermutationMax, else the t approximation.
inline Correlation spearman_rho(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("spearman_rho: length mismatch");
    const std::size_t n = xs.size();
    if (n < 3) throw std::invalid_argument("spearman_rho: need at least 3 points");
    const std::vector<double> rx = average_ranks(xs), ry = average_ranks(ys);
    auto centred_ss = [](const std::vector<double>& r) {
        const double m = mean(r);
        double s = 0;
        for (double v : r) s += (v - m) * (v - m);
        return s;
    };
    const double sx = centred_ss(rx), sy = centred_ss(ry);
    if (sx <= 0 || sy <= 0) throw std::domain_error("spearman_rho: constant input, correlation undefined");
    const double mx = mean(rx), my = mean(ry), scale = std::sqrt(sx * sy);
    auto rho_of = [&](const std::vector<double>& r) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += (rx[i] - mx) * (r[i] - my);
        return s / scale;
    };
    Correlation c;
    c.rho = std::clamp(rho_of(ry), -1.0, 1.0);
    if (n <= kExactPermutationMax) {
        // Distinct arrangements of the tied multiset are equally likely, so
        // enumerating them gives the same p as all n! permutations.
        std::vector<double> perm = ry;
        std::sort(perm.begin(), perm.end());
        const double cut = std::abs(c.rho) - 1e-12;
        std::uint64_t hit = 0, all = 0;
        do {
            ++all;
            hit += std::abs(rho_of(perm)) >= cut;
        } while (std::next_permutation(perm.begin(), perm.end()));
        c.p_value = static_cast<double>(hit) / static_cast<double>(all);
        c.exact = true;
    } else if (std::abs(c.rho) >= 1.0) {
        c.p_value = 0.0;
    } else {
        const double dof = static_cast<double>(n) - 2.0;
        c.p_value = student_t_two_sided_p(c.rho * std::sqrt(dof / (1.0 - c.rho * c.rho)), dof);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Linear probes

inline constexpr std::array<double, 7> kLambdaGrid = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};

struct SolverOptions {
    double tolerance = 1e-8;
    int max_iterations = 100000;
};

struct ProbeReport {
    std::string metric;  // "accuracy" or "r_squared"
    std::vector<double> folds;
    std::vector<double> lambdas;  // chosen per fold
    double mean = 0.0;
    Interval ci;
};

namespace detail {

inline ProbeReport summarize(std::string metric, std::vector<double> folds, std::vector<double> lambdas) {
    ProbeReport r{std::move(metric), std::move(folds), std::move(lambdas), 0.0, {}};
    r.mean = gensim::mean(r.folds);
    const double half = student_t_quantile_975(static_cast<double>(r.folds.size() - 1)) * sample_sd(r.folds) /
                        std::sqrt(static_cast<double>(r.folds.size()));
    r.ci = {r.mean - half, r.mean + half};
    return r;
}

/// Fold id per item; when `strata` is given, each stratum is dealt round-robin
/// so every fold sees every class.
inline std::vector<int> fold_ids(std::size_t n, int k, Rng& rng, const std::vector<int>* strata = nullptr) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    if (strata) std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return (*strata)[a] < (*strata)[b]; });
    std::vector<int> id(n);
    for (std::size_t i = 0; i < n; ++i) id[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return id;
}

inline MatrixXd rows_of(const MatrixXd& x, const std::vector<std::size_t>& idx) {
    MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

inline VectorXd entries_of(const VectorXd& v, const std::vector<std::size_t>& idx) {
    VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
    return out;
}

inline void split(const std::vector<int>& ids, int fold, std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
    train.clear();
    test.clear();
    for (std::size_t i = 0; i < ids.size(); ++i) (ids[i] == fold ? test : train).push_back(i);
}

/// Nested-CV choice of lambda, then a refit on the full training split.
/// `fit_score(train_x, train_y, test_x, test_y, lambda)` returns a score where
/// larger is better.
template <class FitScore>
std::pair<double, double> tuned_fold(const MatrixXd& xtr, const VectorXd& ytr, const MatrixXd& xte, const VectorXd& yte,
                                     Rng& rng, const std::vector<int>* strata, FitScore&& fit_score) {
    const std::vector<int> inner = fold_ids(static_cast<std::size_t>(xtr.rows()), 4, rng, strata);
    double best_lambda = kLambdaGrid.front(), best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> a, b;
    for (double lambda : kLambdaGrid) {
        double s = 0;
        for (int f = 0; f < 4; ++f) {
            split(inner, f, a, b);
            s += fit_score(rows_of(xtr, a), entries_of(ytr, a), rows_of(xtr, b), entries_of(ytr, b), lambda);
        }
        if (s > best) best = s, best_lambda = lambda;
    }
    return {best_lambda, fit_score(xtr, ytr, xte, yte, best_lambda)};
}

/// Per-column z-scoring fitted on training rows; constant columns are only centred.
struct Standardizer {
    Eigen::RowVectorXd centre, scale;

    explicit Standardizer(const MatrixXd& x) : centre(x.colwise().mean()) {
        scale = ((x.rowwise() - centre).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
        for (Eigen::Index j = 0; j < scale.size(); ++j)
            if (!(scale[j] > 0)) scale[j] = 1.0;
    }
    MatrixXd operator()(const MatrixXd& x) const { return (x.rowwise() - centre).array().rowwise() / scale.array(); }
};

}  // namespace detail

struct LogisticModel {
    VectorXd w;
    double b = 0.0;
    int iterations = 0;
};

/// L2-regularized logistic regression, minimizing
/// mean log-loss + (lambda/2)|w|^2 (intercept unpenalized), by Newton steps.
inline LogisticModel fit_logistic(const MatrixXd& x, const VectorXd& y, double lambda, const SolverOptions& opt = {}) {
    const Eigen::Index n = x.rows(), d = x.cols();
    MatrixXd xa(n, d + 1);
    xa << x, VectorXd::Ones(n);
    VectorXd beta = VectorXd::Zero(d + 1);
    VectorXd pen = VectorXd::Constant(d + 1, lambda);
    pen[d] = 0.0;
    LogisticModel m;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const VectorXd z = xa * beta;
        VectorXd p(n), wts(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = sigmoid(z[i]);
            wts[i] = std::max(p[i] * (1 - p[i]), 1e-12);
        }
        const VectorXd g = xa.transpose() * (p - y) / static_cast<double>(n) + pen.cwiseProduct(beta);
        m.iterations = it + 1;
        if (g.lpNorm<Eigen::Infinity>() < opt.tolerance) break;
        MatrixXd h = xa.transpose() * wts.asDiagonal() * xa / static_cast<double>(n);
        h.diagonal() += pen;
        h.diagonal().array() += 1e-12;
        const VectorXd step = h.ldlt().solve(g);
        // Backtracking keeps the full Newton step whenever it decreases the objective.
        auto objective = [&](const VectorXd& bt) {
            const VectorXd zz = xa * bt;
            double f = 0;
            for (Eigen::Index i = 0; i < n; ++i) f += softplus(zz[i]) - y[i] * zz[i];
            return f / static_cast<double>(n) + 0.5 * bt.cwiseProduct(pen).dot(bt);
        };
        const double f0 = objective(beta);
        double t = 1.0;
        double f1 = objective(beta - step);
        while (t > 1e-10 && f1 > f0 - 1e-4 * t * g.dot(step)) {
            t *= 0.5;
            f1 = objective(beta - t * step);
        }
        // No representable descent left: the gradient norm is as small as rounding allows.
        if (t <= 1e-10 || f0 - f1 <= 1e-15 * std::max(1.0, std::fabs(f0))) {
            if (f1 < f0) beta -= t * step;
            break;
        }
        beta -= t * step;
    }
    m.w = beta.head(d);
    m.b = beta[d];
    return m;
}

struct RidgeModel {
    VectorXd w;
    double b = 0.0;
    int iterations = 0;
};

/// Ridge regression minimizing mean squared error + lambda|w|^2 by conjugate
/// gradients on the normal equations of the centred problem.
inline RidgeModel fit_ridge(const MatrixXd& x, const VectorXd& y, double lambda, const SolverOptions& opt = {}) {
    const Eigen::RowVectorXd mx = x.colwise().mean();
    const double my = y.mean();
    const MatrixXd xc = x.rowwise() - mx;
    const VectorXd yc = y.array() - my;
    const double n = static_cast<double>(x.rows());
    Eigen::ConjugateGradient<MatrixXd, Eigen::Lower | Eigen::Upper> cg;
    MatrixXd a = xc.transpose() * xc / n;
    a.diagonal().array() += lambda;
    cg.setTolerance(opt.tolerance);
    cg.setMaxIterations(opt.max_iterations);
    cg.compute(a);
    RidgeModel m;
    m.w = cg.solve(xc.transpose() * yc / n);
    if (cg.info() != Eigen::Success) throw NumericFailure("fit_ridge: conjugate gradients did not converge");
    m.iterations = static_cast<int>(cg.iterations());
    m.b = my - mx.dot(m.w);
    return m;
}

inline double r_squared(const VectorXd& truth, const VectorXd& pred) {
    const double ss_tot = (truth.array() - truth.mean()).square().sum();
    const double ss_res = (truth - pred).squaredNorm();
    return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
}

/// 5-fold cross-validated logistic probe on rows of `x` with 0/1 labels.
/// Features are z-scored on each training split.
inline ProbeReport logistic_probe(const MatrixXd& x, const std::vector<int>& labels, std::uint64_t seed = 0,
                                  const SolverOptions& opt = {}) {
    if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw std::invalid_argument("logistic_probe: one label per row");
    std::array<int, 2> counts{};
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("logistic_probe: labels must be 0 or 1");
        ++counts[static_cast<std::size_t>(l)];
    }
    if (counts[0] < 10 || counts[1] < 10) throw std::invalid_argument("logistic_probe: need >= 10 examples per class");
    VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) y[i] = labels[static_cast<std::size_t>(i)];
    Rng rng = make_rng(seed, "probe-folds");
    const std::vector<int> outer = detail::fold_ids(labels.size(), 5, rng, &labels);
    auto accuracy = [&](const MatrixXd& xtr, const VectorXd& ytr, const MatrixXd& xte, const VectorXd& yte, double lambda) {
        if ((ytr.array() == 0).all() || (ytr.array() == 1).all())
            throw std::invalid_argument("logistic_probe: single-class training fold");
        const detail::Standardizer z_score(xtr);
        const LogisticModel m = fit_logistic(z_score(xtr), ytr, lambda, opt);
        const VectorXd z = (z_score(xte) * m.w).array() + m.b;
        int ok = 0;
        for (Eigen::Index i = 0; i < z.size(); ++i) ok += (z[i] > 0) == (yte[i] > 0.5);
        return ok / static_cast<double>(z.size());
    };
    std::vector<double> folds, lambdas;
    std::vector<std::size_t> tr, te;
    for (int f = 0; f < 5; ++f) {
        detail::split(outer, f, tr, te);
        std::vector<int> strata;
        for (std::size_t i : tr) strata.push_back(labels[i]);
        Rng inner = make_rng(seed, "probe-inner", static_cast<std::uint64_t>(f));
        const auto [lambda, acc] = detail::tuned_fold(detail::rows_of(x, tr), detail::entries_of(y, tr), detail::rows_of(x, te),
                                                      detail::entries_of(y, te), inner, &strata, accuracy);
        folds.push_back(acc);
        lambdas.push_back(lambda);
    }
    return detail::summarize("accuracy", std::move(folds), std::move(lambdas));
}

/// 5-fold cross-validated ridge probe. Per fold the confound is regressed out
/// of the targets by OLS fitted on the training split only, and features are
/// z-scored on the same split.
inline ProbeReport ridge_probe(const MatrixXd& x, const std::vector<double>& targets, const std::vector<double>& confound,
                               std::uint64_t seed = 0, const SolverOptions& opt = {}) {
    const std::size_t n = targets.size();
    if (static_cast<Eigen::Index>(n) != x.rows() || confound.size() != n)
        throw std::invalid_argument("ridge_probe: one target and confound per row");
    if (n < 20) throw std::invalid_argument("ridge_probe: need >= 20 items");
    if (*std::max_element(targets.begin(), targets.end()) == *std::min_element(targets.begin(), targets.end()))
        throw std::invalid_argument("ridge_probe: constant targets");
    const double raw_var = sample_sd(targets) * sample_sd(targets);
    VectorXd y = Eigen::Map<const VectorXd>(targets.data(), static_cast<Eigen::Index>(n));
    VectorXd c = Eigen::Map<const VectorXd>(confound.data(), static_cast<Eigen::Index>(n));
    // Residual variance below this is treated as nothing left to explain.
    const double floor = 1e-20 * raw_var;
    auto score = [&](const MatrixXd& xtr, const VectorXd& ytr, const MatrixXd& xte, const VectorXd& yte, double lambda) {
        const detail::Standardizer z_score(xtr);
        const RidgeModel m = fit_ridge(z_score(xtr), ytr, lambda, opt);
        const VectorXd pred = (z_score(xte) * m.w).array() + m.b;
        const double ss_tot = (yte.array() - yte.mean()).square().sum();
        if (ss_tot <= floor * static_cast<double>(yte.size())) return 0.0;
        return r_squared(yte, pred);
    };
    Rng rng = make_rng(seed, "probe-folds");
    const std::vector<int> outer = detail::fold_ids(n, 5, rng);
    std::vector<double> folds, lambdas;
    std::vector<std::size_t> tr, te;
    for (int f = 0; f < 5; ++f) {
        detail::split(outer, f, tr, te);
        // OLS of target on confound, training rows only.
        const VectorXd ctr = detail::entries_of(c, tr), ytr = detail::entries_of(y, tr);
        const double cm = ctr.mean(), ym = ytr.mean();
        const double cvar = (ctr.array() - cm).square().sum();
        const double slope = cvar > 0 ? ((ctr.array() - cm) * (ytr.array() - ym)).sum() / cvar : 0.0;
        auto residual = [&](const std::vector<std::size_t>& idx) {
            VectorXd r(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto k = static_cast<Eigen::Index>(idx[i]);
                r[static_cast<Eigen::Index>(i)] = y[k] - ym - slope * (c[k] - cm);
            }
            return r;
        };
        Rng inner = make_rng(seed, "probe-inner", static_cast<std::uint64_t>(f));
        const auto [lambda, r2] = detail::tuned_fold(detail::rows_of(x, tr), residual(tr), detail::rows_of(x, te), residual(te),
                                                     inner, nullptr, score);
        folds.push_back(r2);
        lambdas.push_back(lambda);
    }
    return detail::summarize("r_squared", std::move(folds), std::move(lambdas));
}

// ---------------------------------------------------------------------------
// PCA and bootstrap

struct PcaResult {
    MatrixXd components;  // d x k, orthonormal columns
    MatrixXd projected;   // n x k
    VectorXd explained_variance;
    VectorXd mean;
    double total_variance = 0.0;
    bool truncated = false;  // fewer than k components available
};

/// Principal components of the rows of `x`.
inline PcaResult pca_project(const MatrixXd& x, int k) {
    if (k < 1 || k > x.cols()) throw std::invalid_argument("pca_project: k must be in [1, dim]");
    if (x.rows() < 2) throw std::invalid_argument("pca_project: need at least 2 rows");
    PcaResult r;
    r.mean = x.colwise().mean().transpose();
    const MatrixXd xc = x.rowwise() - r.mean.transpose();
    const MatrixXd cov = xc.transpose() * xc / static_cast<double>(x.rows() - 1);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericFailure("pca_project: eigendecomposition failed");
    const VectorXd ev = es.eigenvalues().reverse();
    const MatrixXd vecs = es.eigenvectors().rowwise().reverse();
    r.total_variance = std::max(0.0, ev.sum());
    const double tol = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    int rank = 0;
    while (rank < ev.size() && ev[rank] > tol) ++rank;
    const int m = std::max(1, std::min(k, rank));
    r.truncated = m < k;
    r.components = vecs.leftCols(m);
    // Sign convention: largest-magnitude loading positive.
    for (int j = 0; j < m; ++j) {
        Eigen::Index i;
        r.components.col(j).cwiseAbs().maxCoeff(&i);
        if (r.components(i, j) < 0) r.components.col(j) *= -1;
    }
    r.explained_variance = ev.head(m).cwiseMax(0.0);
    r.projected = xc * r.components;
    return r;
}

/// Percentile bootstrap interval for the mean.
inline Interval bootstrap_ci(std::span<const double> values, int n_boot, double level, std::uint64_t seed) {
    if (values.empty()) throw std::invalid_argument("bootstrap_ci: no values");
    if (n_boot < 1 || !(level > 0 && level < 1)) throw std::invalid_argument("bootstrap_ci: bad n_boot or level");
    Rng rng = make_rng(seed, "bootstrap");
    std::vector<double> means(static_cast<std::size_t>(n_boot));
    for (double& m : means) {
        double s = 0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[uniform_index(rng, values.size())];
        m = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(means.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, means.size() - 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    return {quantile(0.5 * (1 - level)), quantile(0.5 * (1 + level))};
}

}  // namespace gensim
