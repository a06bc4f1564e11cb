#pragma once

// Finite-difference sweep over every loss, at the loss level and through
// both network architectures.

#include <string>
#include <vector>

#include "gensim/embed_net.hpp"
#include "gensim/losses.hpp"

namespace gensim {

inline constexpr std::array<LossKind, 6> kAllLosses = {LossKind::linear_triplet,    LossKind::softmax_triplet,
                                                       LossKind::quadratic_triplet, LossKind::gensim_regression,
                                                       LossKind::info_nce,          LossKind::cross_entropy};

struct GradCheckRow {
    std::string loss;
    std::string level;  // "loss", "mlp" or "conv"
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool ok() const noexcept { return max_rel_err <= tolerance; }
};

namespace detail {

inline constexpr int kGradCheckClasses = 3;

/// The loss as a function of a matrix of embeddings (one column per item).
/// Columns are grouped per kind: triplets of three, pairs of two, InfoNCE
/// halves, labelled items with a fixed linear head.
inline OutputLoss output_loss(LossKind kind, Eigen::Index cols, Eigen::Index rows, Rng& rng) {
    switch (kind) {
        case LossKind::linear_triplet:
        case LossKind::softmax_triplet:
        case LossKind::quadratic_triplet:
            return [kind](const MatrixXd& out, MatrixXd* grad) {
                double loss = 0;
                for (Eigen::Index k = 0; k + 2 < out.cols(); k += 3) {
                    const auto t = triplet_loss(kind, out.col(k), out.col(k + 1), out.col(k + 2));
                    loss += t.loss;
                    if (grad) {
                        grad->col(k) = t.grad_anchor;
                        grad->col(k + 1) = t.grad_positive;
                        grad->col(k + 2) = t.grad_negative;
                    }
                }
                return loss;
            };
        case LossKind::gensim_regression: {
            std::vector<double> targets;
            for (Eigen::Index k = 0; k + 1 < cols; k += 2) targets.push_back(uniform(rng, 0.5, 3.0));
            return [targets](const MatrixXd& out, MatrixXd* grad) {
                double loss = 0;
                for (Eigen::Index k = 0; k + 1 < out.cols(); k += 2) {
                    const auto r = gensim_regression_loss(out.col(k), out.col(k + 1), targets[static_cast<std::size_t>(k / 2)]);
                    loss += r.loss;
                    if (grad) {
                        grad->col(k) = r.grad_first;
                        grad->col(k + 1) = r.grad_second;
                    }
                }
                return loss;
            };
        }
        case LossKind::info_nce:
            return [](const MatrixXd& out, MatrixXd* grad) {
                const Eigen::Index h = out.cols() / 2;
                const auto r = infonce_loss(out.leftCols(h), out.middleCols(h, h), 0.5);
                if (grad) {
                    grad->leftCols(h) = r.grads[0];
                    grad->middleCols(h, h) = r.grads[1];
                }
                return r.loss;
            };
        case LossKind::cross_entropy: {
            const MatrixXd w = MatrixXd::NullaryExpr(kGradCheckClasses, rows, [&] { return normal(rng); });
            std::vector<int> labels;
            for (Eigen::Index k = 0; k < cols; ++k) labels.push_back(static_cast<int>(uniform_index(rng, kGradCheckClasses)));
            return [w, labels](const MatrixXd& out, MatrixXd* grad) {
                const auto r = cross_entropy_loss(w * out, labels);
                if (grad) *grad = w.transpose() * r.grads[0];
                return r.loss;
            };
        }
    }
    throw std::invalid_argument("output_loss: unknown loss");
}

/// Central differences on every entry of `x`, with the same rounding
/// allowance as finite_diff_check.
inline double loss_level_error(const OutputLoss& f, MatrixXd x, double eps) {
    MatrixXd grad = MatrixXd::Zero(x.rows(), x.cols());
    f(x, &grad);
    double worst = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x(i);
        x(i) = keep + eps;
        const double up = f(x, nullptr);
        x(i) = keep - eps;
        const double down = f(x, nullptr);
        x(i) = keep;
        const double fd = (up - down) / (2 * eps), an = grad(i);
        const double rounding = 64 * std::numeric_limits<double>::epsilon() * std::max(std::fabs(up), std::fabs(down)) / eps;
        const double diff = std::max(0.0, std::fabs(fd - an) - rounding);
        worst = std::max(worst, diff / std::max({std::fabs(fd), std::fabs(an), 1e-8}));
    }
    return worst;
}

}  // namespace detail

/// Every loss at the loss level (tolerance 1e-6) and through an mlp and a
/// conv net (tolerance 1e-4).
inline std::vector<GradCheckRow> gradient_suite(std::uint64_t seed) {
    std::vector<GradCheckRow> rows;
    constexpr Eigen::Index kCols = 6;
    for (LossKind kind : kAllLosses) {
        const std::string name(loss_name(kind));
        {
            Rng rng = make_rng(seed, "gradcheck-loss", static_cast<std::uint64_t>(kind));
            const MatrixXd x = MatrixXd::NullaryExpr(4, kCols, [&] { return normal(rng); });
            rows.push_back({name, "loss", detail::loss_level_error(detail::output_loss(kind, kCols, 4, rng), x, 1e-5), 1e-6});
        }
        const NetSpec nets[2] = {NetSpec::mlp({5, 7, 4}), NetSpec::conv(8, 2, 3, 4)};
        for (const NetSpec& spec : nets) {
            Rng rng = make_rng(seed, "gradcheck-net", static_cast<std::uint64_t>(kind) * 2 + (spec.kind == NetKind::conv));
            const ParamVector p = init_params(spec, rng);
            const MatrixXd x = MatrixXd::NullaryExpr(spec.input_dim(), kCols, [&] { return normal(rng); });
            const OutputLoss f = detail::output_loss(kind, kCols, spec.output_dim(), rng);
            rows.push_back({name, spec.kind == NetKind::mlp ? "mlp" : "conv", finite_diff_check(spec, p, x, f, 1e-5, rng, 150), 1e-4});
        }
    }
    return rows;
}

}  // namespace gensim
