#pragma once

// Contrastive and supervised losses on embeddings, each returning the loss
// and its exact gradient with respect to the embeddings.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gensim/error.hpp"
#include "gensim/stats.hpp"

namespace gensim {

enum class LossKind {
    linear_triplet,     // d(a,p) - d(a,n)
    softmax_triplet,    // log(1 + exp(d(a,p) - d(a,n)))
    quadratic_triplet,  // d(a,p)^2 - d(a,n)^2
    gensim_regression,  // (d(e1,e2) - target)^2
    info_nce,           // cosine-similarity InfoNCE over augmented pairs
    cross_entropy,      // linear head + softmax cross-entropy (supervised baseline)
};

inline std::string_view loss_name(LossKind k) {
    switch (k) {
        case LossKind::linear_triplet: return "linear_triplet";
        case LossKind::softmax_triplet: return "softmax_triplet";
        case LossKind::quadratic_triplet: return "quadratic_triplet";
        case LossKind::gensim_regression: return "gensim_regression";
        case LossKind::info_nce: return "info_nce";
        case LossKind::cross_entropy: return "cross_entropy";
    }
    return "?";
}

inline LossKind loss_from_name(std::string_view n) {
    for (LossKind k : {LossKind::linear_triplet, LossKind::softmax_triplet, LossKind::quadratic_triplet,
                       LossKind::gensim_regression, LossKind::info_nce, LossKind::cross_entropy})
        if (loss_name(k) == n) return k;
    throw std::invalid_argument("unknown loss: " + std::string(n));
}

inline bool is_triplet_loss(LossKind k) {
    return k == LossKind::linear_triplet || k == LossKind::softmax_triplet || k == LossKind::quadratic_triplet;
}

struct TripletLoss {
    double loss = 0.0;
    Eigen::VectorXd grad_anchor, grad_positive, grad_negative;
};

struct PairLoss {
    double loss = 0.0;
    Eigen::VectorXd grad_first, grad_second;
};

struct BatchLoss {
    double loss = 0.0;
    std::vector<Eigen::MatrixXd> grads;
};

namespace detail {
inline void check_dims(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() == 0) throw std::invalid_argument("embedding dimension mismatch");
}

/// Unit vector (x - y) / |x - y|, zero when x == y.
inline Eigen::VectorXd unit_diff(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double& dist) {
    Eigen::VectorXd d = x - y;
    dist = d.norm();
    if (dist > 0) d /= dist;
    else d.setZero();
    return d;
}
}  // namespace detail

inline TripletLoss triplet_loss(LossKind kind, const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                                const Eigen::VectorXd& n) {
    detail::check_dims(a, p);
    detail::check_dims(a, n);
    TripletLoss r;
    if (kind == LossKind::quadratic_triplet) {
        const Eigen::VectorXd ap = a - p, an = a - n;
        r.loss = ap.squaredNorm() - an.squaredNorm();
        r.grad_anchor = 2.0 * (ap - an);
        r.grad_positive = -2.0 * ap;
        r.grad_negative = 2.0 * an;
        return r;
    }
    if (kind != LossKind::linear_triplet && kind != LossKind::softmax_triplet)
        throw std::invalid_argument("triplet_loss: not a triplet loss kind");
    double dp = 0, dn = 0;
    const Eigen::VectorXd up = detail::unit_diff(a, p, dp), un = detail::unit_diff(a, n, dn);
    const double delta = dp - dn;
    double slope = 1.0;
    if (kind == LossKind::linear_triplet) r.loss = delta;
    else {
        r.loss = softplus(delta);
        slope = sigmoid(delta);
    }
    r.grad_anchor = slope * (up - un);
    r.grad_positive = -slope * up;
    r.grad_negative = slope * un;
    return r;
}

/// (|e1 - e2| - target)^2.
inline PairLoss gensim_regression_loss(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, double target) {
    detail::check_dims(e1, e2);
    if (!(target >= 0.0)) throw std::invalid_argument("gensim_regression_loss: target distance must be >= 0");
    double d = 0;
    const Eigen::VectorXd u = detail::unit_diff(e1, e2, d);
    PairLoss r;
    r.loss = (d - target) * (d - target);
    r.grad_first = 2.0 * (d - target) * u;
    r.grad_second = -r.grad_first;
    return r;
}

/// -(1/N) sum_i log softmax_j(cos(v_i, w_j) / tau)[i] over the columns of
/// `views` (v) and `partners` (w). grads[0] and grads[1] match the inputs.
/// Columns are normalized as u / max(|u|, 1e-12), so a zero embedding has
/// cosine 0 with everything.
inline BatchLoss infonce_loss(const Eigen::MatrixXd& views, const Eigen::MatrixXd& partners, double temperature) {
    if (!(temperature > 0)) throw std::invalid_argument("infonce_loss: temperature must be positive");
    if (views.rows() != partners.rows() || views.cols() != partners.cols())
        throw std::invalid_argument("infonce_loss: shape mismatch");
    const Eigen::Index N = views.cols();
    if (N < 2) throw std::invalid_argument("infonce_loss: need at least 2 pairs");
    static constexpr double kMinNorm = 1e-12;
    const Eigen::VectorXd nv = views.colwise().norm().transpose(), nw = partners.colwise().norm().transpose();
    if (!nv.allFinite() || !nw.allFinite()) throw NumericFailure("infonce_loss: non-finite embedding");
    const Eigen::VectorXd cv = nv.cwiseMax(kMinNorm), cw = nw.cwiseMax(kMinNorm);
    const Eigen::MatrixXd V = views * cv.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd W = partners * cw.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd logits = (V.transpose() * W) / temperature;  // N x N, row i = anchor i
    Eigen::MatrixXd prob(N, N);
    double loss = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        const double z = e.sum();
        prob.row(i) = e / z;
        loss += m + std::log(z) - logits(i, i);
    }
    loss /= static_cast<double>(N);
    // dL/dlogits, then through the cosine normalization.
    Eigen::MatrixXd G = prob;
    G.diagonal().array() -= 1.0;
    G /= static_cast<double>(N) * temperature;  // gradient wrt cosine matrix
    const Eigen::MatrixXd dV = W * G.transpose();
    const Eigen::MatrixXd dW = V * G;
    BatchLoss r;
    r.loss = loss;
    auto through_norm = [](const Eigen::MatrixXd& U, const Eigen::MatrixXd& dU, const Eigen::VectorXd& norms) {
        Eigen::MatrixXd out(U.rows(), U.cols());
        for (Eigen::Index j = 0; j < U.cols(); ++j)
            out.col(j) = norms[j] > kMinNorm ? Eigen::VectorXd((dU.col(j) - U.col(j) * U.col(j).dot(dU.col(j))) / norms[j])
                                             : Eigen::VectorXd(dU.col(j) / kMinNorm);
        return out;
    };
    r.grads.push_back(through_norm(V, dV, nv));
    r.grads.push_back(through_norm(W, dW, nw));
    return r;
}

/// Mean softmax cross-entropy of logit columns against labels; grads[0] is
/// the gradient wrt the logits.
inline BatchLoss cross_entropy_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.cols()) != labels.size() || labels.empty())
        throw std::invalid_argument("cross_entropy_loss: one label per column required");
    BatchLoss r;
    Eigen::MatrixXd g(logits.rows(), logits.cols());
    const double n = static_cast<double>(labels.size());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const int y = labels[static_cast<std::size_t>(j)];
        if (y < 0 || y >= logits.rows()) throw std::invalid_argument("cross_entropy_loss: label out of range");
        const double m = logits.col(j).maxCoeff();
        const Eigen::VectorXd e = (logits.col(j).array() - m).exp();
        const double z = e.sum();
        r.loss += (m + std::log(z) - logits(y, j)) / n;
        g.col(j) = e / z / n;
        g(y, j) -= 1.0 / n;
    }
    r.grads.push_back(std::move(g));
    return r;
}

}  // namespace gensim
