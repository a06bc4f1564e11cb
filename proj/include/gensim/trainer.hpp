#pragma once

// Optimizers and the deterministic training loop.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gensim/augment.hpp"
#include "gensim/core.hpp"
#include "gensim/embed_net.hpp"
#include "gensim/error.hpp"
#include "gensim/losses.hpp"
#include "gensim/raster.hpp"
#include "gensim/rng.hpp"

namespace gensim {

enum class OptimizerKind { sgd, adam };

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    VectorXd m, v;
    long step = 0;
};

namespace detail {
inline void require_finite(const VectorXd& g, const char* where) {
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i]))
            throw NumericFailure(std::string(where) + ": non-finite gradient at coordinate " + std::to_string(i) +
                                 " (value " + std::to_string(g[i]) + ")");
}
}  // namespace detail

/// Bias-corrected Adam update in place.
inline void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state, double learning_rate,
                      const AdamConfig& cfg = {}) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
    detail::require_finite(grads, "adam_step");
    if (state.m.size() == 0) {
        state.m = VectorXd::Zero(params.size());
        state.v = VectorXd::Zero(params.size());
    }
    ++state.step;
    state.m = cfg.beta1 * state.m + (1 - cfg.beta1) * grads;
    state.v = cfg.beta2 * state.v + (1 - cfg.beta2) * grads.cwiseProduct(grads);
    const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
    params.array() -= learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.epsilon);
}

inline void sgd_step(VectorXd& params, const VectorXd& grads, double learning_rate) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: size mismatch");
    detail::require_finite(grads, "sgd_step");
    params -= learning_rate * grads;
}

struct TrainConfig {
    LossKind loss = LossKind::softmax_triplet;
    double temperature = 0.1;  // InfoNCE only
    double learning_rate = 1e-3;
    int batch_size = 128;
    int epochs = 10;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamConfig adam;
    /// Written after every completed epoch when set.
    std::optional<std::filesystem::path> checkpoint_dir;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
        if (!(temperature > 0)) throw std::invalid_argument("TrainConfig: temperature must be positive");
    }
};

// ---------------------------------------------------------------------------
// Data sources. Inputs are columns in the network's input layout.

/// Index triples (anchor, positive, negative) into `inputs`.
struct TripletSource {
    MatrixXd inputs;
    std::vector<std::array<int, 3>> triplets;
};

/// Items with a target distance for every pair; each minibatch of items
/// contributes all of its pairs.
struct PairTargetSource {
    MatrixXd inputs;
    std::function<double(int, int)> target;
};

/// Images; each minibatch item yields two independently augmented views.
struct AugmentedPairSource {
    std::vector<Raster> images;
    AugmentSpec augment;
};

struct LabeledSource {
    MatrixXd inputs;
    std::vector<int> labels;
    int classes = 0;
};

using DataSource = std::variant<TripletSource, PairTargetSource, AugmentedPairSource, LabeledSource>;

inline MatrixXd raster_columns(const std::vector<Raster>& rs) {
    if (rs.empty()) return {};
    const int n = rs.front().size();
    MatrixXd m(static_cast<Eigen::Index>(n) * n, static_cast<Eigen::Index>(rs.size()));
    for (std::size_t j = 0; j < rs.size(); ++j) {
        if (rs[j].size() != n) throw std::invalid_argument("raster_columns: mixed raster sizes");
        m.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const VectorXd>(rs[j].data().data(), m.rows());
    }
    return m;
}

/// Stacks vector-valued triplets into a TripletSource (three columns each).
inline TripletSource triplet_source(const std::vector<Triplet<std::vector<double>>>& ts) {
    if (ts.empty()) throw std::invalid_argument("triplet_source: no triplets");
    const Eigen::Index dim = static_cast<Eigen::Index>(ts.front().anchor.size());
    TripletSource s;
    s.inputs.resize(dim, static_cast<Eigen::Index>(3 * ts.size()));
    s.triplets.reserve(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::vector<double>* parts[3] = {&ts[i].anchor, &ts[i].positive, &ts[i].negative};
        for (int r = 0; r < 3; ++r) {
            if (static_cast<Eigen::Index>(parts[r]->size()) != dim) throw std::invalid_argument("triplet_source: ragged data");
            const int col = static_cast<int>(3 * i) + r;
            s.inputs.col(col) = Eigen::Map<const VectorXd>(parts[r]->data(), dim);
        }
        s.triplets.push_back({static_cast<int>(3 * i), static_cast<int>(3 * i + 1), static_cast<int>(3 * i + 2)});
    }
    return s;
}

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    ParamVector params;
    std::optional<ParamVector> head;  // classification head (cross_entropy only)
    std::vector<EpochRecord> log;
};

inline NetSpec head_spec(const NetSpec& spec, int classes) { return NetSpec::mlp({spec.output_dim(), classes}); }

inline void write_epoch_csv(const std::vector<EpochRecord>& log, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << "epoch,mean_loss,wall_ms\n";
    char buf[128];
    for (const EpochRecord& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.3f\n", r.epoch, r.mean_loss, r.wall_ms);
        f << buf;
    }
    if (!f) throw IoError("write failed: " + path.string());
}

/// Embeds every column of `inputs` in chunks.
inline MatrixXd embed_all(const NetSpec& spec, const ParamVector& params, const MatrixXd& inputs, int chunk = 128) {
    MatrixXd out(spec.output_dim(), inputs.cols());
    for (Eigen::Index c = 0; c < inputs.cols(); c += chunk) {
        const Eigen::Index n = std::min<Eigen::Index>(chunk, inputs.cols() - c);
        out.middleCols(c, n) = forward(spec, params, inputs.middleCols(c, n));
    }
    return out;
}

namespace detail {

struct BatchEval {
    MatrixXd inputs;
    double loss = 0.0;
    MatrixXd out_grad;
    VectorXd head_grad;
};

inline std::size_t unit_count(const DataSource& src) {
    return std::visit(
        [](const auto& s) -> std::size_t {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, TripletSource>) return s.triplets.size();
            else if constexpr (std::is_same_v<T, AugmentedPairSource>) return s.images.size();
            else return static_cast<std::size_t>(s.inputs.cols());
        },
        src);
}

inline void check_source(const NetSpec& spec, const TrainConfig& cfg, const DataSource& src) {
    const bool ok = std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, TripletSource>) return is_triplet_loss(cfg.loss);
            else if constexpr (std::is_same_v<T, PairTargetSource>) return cfg.loss == LossKind::gensim_regression;
            else if constexpr (std::is_same_v<T, AugmentedPairSource>) return cfg.loss == LossKind::info_nce;
            else return cfg.loss == LossKind::cross_entropy;
        },
        src);
    if (!ok) throw std::invalid_argument("train_run: data source does not match loss " + std::string(loss_name(cfg.loss)));
    if (const auto* t = std::get_if<TripletSource>(&src)) {
        for (const auto& tr : t->triplets)
            for (int i : tr)
                if (i < 0 || i >= t->inputs.cols()) throw std::invalid_argument("train_run: triplet index out of range");
    }
    if (const auto* l = std::get_if<LabeledSource>(&src)) {
        if (l->classes < 2 || static_cast<Eigen::Index>(l->labels.size()) != l->inputs.cols())
            throw std::invalid_argument("train_run: labeled source needs one label per input and >= 2 classes");
    }
    if (const auto* a = std::get_if<AugmentedPairSource>(&src)) {
        a->augment.validate();
        for (const Raster& r : a->images)
            if (r.size() * r.size() != spec.input_dim()) throw std::invalid_argument("train_run: raster size mismatch");
    }
    if (unit_count(src) == 0) throw std::invalid_argument("train_run: empty data source");
}

/// Assembles network inputs for a minibatch and scores the resulting outputs.
class BatchBuilder {
public:
    BatchBuilder(const DataSource& src, const TrainConfig& cfg) : src_(src), cfg_(cfg) {}

    MatrixXd gather(std::span<const std::size_t> units, int epoch) const {
        return std::visit(
            [&](const auto& s) -> MatrixXd {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, TripletSource>) {
                    MatrixXd x(s.inputs.rows(), static_cast<Eigen::Index>(3 * units.size()));
                    for (std::size_t k = 0; k < units.size(); ++k)
                        for (int r = 0; r < 3; ++r)
                            x.col(static_cast<Eigen::Index>(3 * k + r)) = s.inputs.col(s.triplets[units[k]][static_cast<std::size_t>(r)]);
                    return x;
                } else if constexpr (std::is_same_v<T, AugmentedPairSource>) {
                    std::vector<Raster> views;
                    views.reserve(2 * units.size());
                    for (int v = 0; v < 2; ++v)
                        for (std::size_t u : units) {
                            Rng rng = make_rng(cfg_.seed, v == 0 ? "augment-a" : "augment-b",
                                               static_cast<std::uint64_t>(epoch) * s.images.size() + u);
                            views.push_back(augment(s.images[u], s.augment, rng));
                        }
                    return raster_columns(views);
                } else {
                    MatrixXd x(s.inputs.rows(), static_cast<Eigen::Index>(units.size()));
                    for (std::size_t k = 0; k < units.size(); ++k) x.col(static_cast<Eigen::Index>(k)) = s.inputs.col(static_cast<Eigen::Index>(units[k]));
                    return x;
                }
            },
            src_);
    }

    /// Mean loss over the batch and its gradient wrt the outputs (and head).
    double score(std::span<const std::size_t> units, const MatrixXd& out, MatrixXd& grad, const ParamVector* head,
                 VectorXd* head_grad) const {
        grad.setZero(out.rows(), out.cols());
        return std::visit(
            [&](const auto& s) -> double {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, TripletSource>) {
                    const double n = static_cast<double>(units.size());
                    double loss = 0;
                    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(units.size()); ++k) {
                        const auto t = triplet_loss(cfg_.loss, out.col(3 * k), out.col(3 * k + 1), out.col(3 * k + 2));
                        loss += t.loss / n;
                        grad.col(3 * k) += t.grad_anchor / n;
                        grad.col(3 * k + 1) += t.grad_positive / n;
                        grad.col(3 * k + 2) += t.grad_negative / n;
                    }
                    return loss;
                } else if constexpr (std::is_same_v<T, PairTargetSource>) {
                    const Eigen::Index B = out.cols();
                    if (B < 2) return 0.0;
                    const double n = 0.5 * static_cast<double>(B) * static_cast<double>(B - 1);
                    double loss = 0;
                    for (Eigen::Index i = 0; i < B; ++i)
                        for (Eigen::Index j = i + 1; j < B; ++j) {
                            const double t = s.target(static_cast<int>(units[static_cast<std::size_t>(i)]),
                                                      static_cast<int>(units[static_cast<std::size_t>(j)]));
                            const auto r = gensim_regression_loss(out.col(i), out.col(j), t);
                            loss += r.loss / n;
                            grad.col(i) += r.grad_first / n;
                            grad.col(j) += r.grad_second / n;
                        }
                    return loss;
                } else if constexpr (std::is_same_v<T, AugmentedPairSource>) {
                    const Eigen::Index B = static_cast<Eigen::Index>(units.size());
                    if (B < 2) return 0.0;
                    const auto r = infonce_loss(out.leftCols(B), out.rightCols(B), cfg_.temperature);
                    grad.leftCols(B) = r.grads[0];
                    grad.rightCols(B) = r.grads[1];
                    return r.loss;
                } else {
                    std::vector<int> labels;
                    for (std::size_t u : units) labels.push_back(s.labels[u]);
                    const NetSpec hs = NetSpec::mlp({static_cast<int>(out.rows()), s.classes});
                    ForwardCache hc;
                    const MatrixXd logits = forward(hs, *head, out, &hc);
                    const auto r = cross_entropy_loss(logits, labels);
                    *head_grad = backward(hs, *head, hc, r.grads[0]);
                    grad = head->weight(0).transpose() * r.grads[0];
                    return r.loss;
                }
            },
            src_);
    }

private:
    const DataSource& src_;
    const TrainConfig& cfg_;
};

}  // namespace detail

/// Minimizes the configured loss over the data source. Everything random
/// (initialization, order, augmentation) derives from cfg.seed. `init`, when
/// given, replaces the seeded initialization.
inline TrainResult train_run(const NetSpec& spec, const TrainConfig& cfg, const DataSource& src,
                             const ParamVector* init = nullptr) {
    spec.validate();
    cfg.validate();
    detail::check_source(spec, cfg, src);
    TrainResult res;
    if (init) {
        if (static_cast<std::size_t>(init->values.size()) != param_count(spec))
            throw std::invalid_argument("train_run: initial parameters do not match spec");
        res.params = *init;
    } else {
        Rng rng = make_rng(cfg.seed, "init");
        res.params = init_params(spec, rng);
    }
    std::optional<NetSpec> hs;
    if (const auto* l = std::get_if<LabeledSource>(&src)) {
        hs = head_spec(spec, l->classes);
        Rng rng = make_rng(cfg.seed, "head-init");
        res.head = init_params(*hs, rng);
    }
    if (cfg.checkpoint_dir) std::filesystem::create_directories(*cfg.checkpoint_dir);

    const std::size_t units = detail::unit_count(src);
    const detail::BatchBuilder builder(src, cfg);
    AdamState net_state, head_state;
    std::vector<std::size_t> order(units);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle = make_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle);
        double total = 0;
        std::size_t counted = 0;
        for (std::size_t b = 0; b < units; b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::span<const std::size_t> batch(order.data() + b, std::min<std::size_t>(cfg.batch_size, units - b));
            const MatrixXd x = builder.gather(batch, epoch);
            ForwardCache cache;
            const MatrixXd out = forward(spec, res.params, x, &cache);
            MatrixXd grad;
            VectorXd head_grad;
            const double loss = builder.score(batch, out, grad, res.head ? &*res.head : nullptr, &head_grad);
            if (!std::isfinite(loss))
                throw NumericFailure("train_run: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b / static_cast<std::size_t>(cfg.batch_size)));
            const VectorXd g = backward(spec, res.params, cache, grad);
            if (cfg.optimizer == OptimizerKind::adam) {
                adam_step(res.params.values, g, net_state, cfg.learning_rate, cfg.adam);
                if (res.head) adam_step(res.head->values, head_grad, head_state, cfg.learning_rate, cfg.adam);
            } else {
                sgd_step(res.params.values, g, cfg.learning_rate);
                if (res.head) sgd_step(res.head->values, head_grad, cfg.learning_rate);
            }
            total += loss * static_cast<double>(batch.size());
            counted += batch.size();
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back({epoch, total / static_cast<double>(counted), ms});
        if (cfg.checkpoint_dir) {
            char name[64];
            std::snprintf(name, sizeof name, "net_epoch%03d.ckpt", epoch);
            save_checkpoint(*cfg.checkpoint_dir / name, spec, res.params);
            if (res.head) {
                std::snprintf(name, sizeof name, "head_epoch%03d.ckpt", epoch);
                save_checkpoint(*cfg.checkpoint_dir / name, *hs, *res.head);
            }
        }
    }
    return res;
}

}  // namespace gensim
