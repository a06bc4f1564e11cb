#pragma once

// Experiment pipeline: dataset generation, training, evaluation, reports.

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gensim/config.hpp"
#include "gensim/core.hpp"
#include "gensim/dataset.hpp"
#include "gensim/draw.hpp"
#include "gensim/eval.hpp"
#include "gensim/gaussian_mixture.hpp"
#include "gensim/quad.hpp"
#include "gensim/report.hpp"
#include "gensim/trainer.hpp"

namespace gensim {

inline constexpr const char* kCodeVersion = "0.1.0";

enum class Stage { gen_data, train, eval, probe };

inline std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::gen_data: return "gen-data";
        case Stage::train: return "train";
        case Stage::eval: return "eval";
        case Stage::probe: return "probe";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Data

/// Quadrilaterals as they appear in training: an exemplar at a random scale
/// and orientation.
inline HierarchicalProcess<quad::QuadCategory, quad::Quadrilateral> quad_training_process() {
    auto p = quad::category_process();
    p.sample_datum = [](const quad::QuadCategory& c, Rng& rng) {
        const quad::Quadrilateral q = quad::generate_exemplar(c, rng);
        const double s = uniform(rng, 0.6, 1.0);
        return quad::apply_transform(q, s, uniform(rng, 0, 2 * std::numbers::pi));
    };
    return p;
}

/// Fixed world frame so relative size survives rasterization.
inline Raster quad_raster(const quad::Quadrilateral& q, int size) { return quad::rasterize_quad(q, size, 1.0); }

inline GaussianMixture mixture_of(const ExperimentConfig& c) { return GaussianMixture(c.process.means, c.process.variance); }

/// What the dataset depends on; its hash is the cache key.
inline Json generator_of(const ExperimentConfig& c) {
    Json g{{"experiment", experiment_name(c.experiment)}, {"seed", c.seed}, {"format", 1}};
    switch (c.experiment) {
        case ExperimentKind::gauss:
            g["means"] = c.process.means;
            g["variance"] = c.process.variance;
            g["triplets"] = c.data.triplets;
            break;
        case ExperimentKind::quad: g["per_category"] = c.data.per_category; break;
        case ExperimentKind::draw:
            g["train_per_grammar"] = c.data.train_per_grammar;
            g["test_per_grammar"] = c.data.test_per_grammar;
            break;
    }
    return g;
}

/// gauss: "points" (d x 3n, triplet-major). quad: "vertices" (8 x n) and
/// "category". draw: programs in the header, "style" and "split" arrays.
inline Dataset generate_dataset(const ExperimentConfig& c) {
    Dataset ds;
    switch (c.experiment) {
        case ExperimentKind::gauss: {
            const GaussianMixture mix = mixture_of(c);
            Rng rng = make_rng(c.seed, "gauss-triplets");
            const auto ts = sample_triplet_batch(as_process(mix), rng, static_cast<std::size_t>(c.data.triplets));
            ds.arrays["points"] = triplet_source(ts).inputs;
            break;
        }
        case ExperimentKind::quad: {
            const auto proc = quad_training_process();
            const int per = c.data.per_category, n = quad::kNumCategories * per;
            Eigen::MatrixXd v(8, n), cat(1, n);
            for (int k = 0; k < quad::kNumCategories; ++k)
                for (int i = 0; i < per; ++i) {
                    Rng rng = make_rng(c.seed, "quad-train", static_cast<std::uint64_t>(k) * 1000000 + static_cast<std::uint64_t>(i));
                    const quad::Quadrilateral q = proc.sample_datum(quad::kAllCategories[static_cast<std::size_t>(k)], rng);
                    const int col = k * per + i;
                    for (int j = 0; j < 4; ++j) {
                        v(2 * j, col) = q[j].x;
                        v(2 * j + 1, col) = q[j].y;
                    }
                    cat(0, col) = k;
                }
            ds.arrays["vertices"] = std::move(v);
            ds.arrays["category"] = std::move(cat);
            break;
        }
        case ExperimentKind::draw: {
            const int tr = c.data.train_per_grammar, te = c.data.test_per_grammar, n = 2 * (tr + te);
            Json programs = Json::array();
            Eigen::MatrixXd style(1, n), split(1, n);
            int col = 0;
            for (int test = 0; test < 2; ++test)
                for (int s = 0; s < 2; ++s) {
                    const int count = test ? te : tr;
                    const auto g = draw::builtin_grammar(static_cast<draw::Style>(s));
                    for (int i = 0; i < count; ++i, ++col) {
                        Rng rng = make_rng(c.seed, test ? "draw-test" : "draw-train",
                                           static_cast<std::uint64_t>(s) * 1000000 + static_cast<std::uint64_t>(i));
                        programs.push_back(draw::to_sexpr(draw::sample_drawable_program(g, rng)));
                        style(0, col) = s;
                        split(0, col) = test;
                    }
                }
            ds.header["programs"] = std::move(programs);
            ds.arrays["style"] = std::move(style);
            ds.arrays["split"] = std::move(split);
            break;
        }
    }
    return ds;
}

/// Decoded view of a dataset for one config.
struct Prepared {
    // Network inputs, one column per item; for gauss the triplet-major points.
    Eigen::MatrixXd train_inputs, test_inputs;
    std::vector<Raster> train_rasters;
    std::vector<int> train_labels, test_labels;
    int classes = 0;
    std::vector<quad::GeometricFeatureVector> train_features;  // quad
    std::vector<double> test_counts, test_grey;                 // draw
    std::vector<quad::Quadrilateral> train_quads;                // quad
};

inline Eigen::VectorXd quad_vector(const quad::Quadrilateral& q) {
    Eigen::VectorXd v(8);
    for (int j = 0; j < 4; ++j) {
        v[2 * j] = q[j].x;
        v[2 * j + 1] = q[j].y;
    }
    return v;
}

inline Prepared prepare(const ExperimentConfig& c, const Dataset& ds) {
    Prepared p;
    const int size = c.data.raster_size;
    switch (c.experiment) {
        case ExperimentKind::gauss:
            p.train_inputs = ds.array("points");
            break;
        case ExperimentKind::quad: {
            const Eigen::MatrixXd& v = ds.array("vertices");
            const Eigen::MatrixXd& cat = ds.array("category");
            for (Eigen::Index i = 0; i < v.cols(); ++i) {
                std::array<quad::Vec2, 4> pts;
                for (int j = 0; j < 4; ++j) pts[static_cast<std::size_t>(j)] = {v(2 * j, i), v(2 * j + 1, i)};
                p.train_quads.emplace_back(pts);
                p.train_features.push_back(quad::extract_features(p.train_quads.back()));
                p.train_labels.push_back(static_cast<int>(cat(0, i)));
            }
            p.classes = quad::kNumCategories;
            if (c.data.vector_input) {
                p.train_inputs = v;
            } else {
                for (const auto& q : p.train_quads) p.train_rasters.push_back(quad_raster(q, size));
                p.train_inputs = raster_columns(p.train_rasters);
            }
            break;
        }
        case ExperimentKind::draw: {
            const Json& programs = ds.header.at("programs");
            const Eigen::MatrixXd& style = ds.array("style");
            const Eigen::MatrixXd& split = ds.array("split");
            std::vector<Raster> test;
            for (Eigen::Index i = 0; i < style.cols(); ++i) {
                const draw::Program prog = draw::parse_sexpr(programs.at(static_cast<std::size_t>(i)).get<std::string>());
                Raster r = draw::rasterize_path(draw::interpret(prog), size);
                const int label = static_cast<int>(style(0, i));
                if (split(0, i) == 0) {
                    p.train_rasters.push_back(std::move(r));
                    p.train_labels.push_back(label);
                } else {
                    const auto counts = draw::count_primitives(prog);
                    p.test_counts.push_back(counts.motor + counts.control);
                    p.test_grey.push_back(mean_grey(r));
                    test.push_back(std::move(r));
                    p.test_labels.push_back(label);
                }
            }
            p.classes = 2;
            p.train_inputs = raster_columns(p.train_rasters);
            p.test_inputs = raster_columns(test);
            break;
        }
    }
    return p;
}

/// Anchor uniform over items, positive uniform within the anchor's class,
/// negative uniform over all items (an independent class draw weighted by
/// class frequency).
inline std::vector<std::array<int, 3>> class_triplets(const std::vector<int>& labels, int classes, std::uint64_t seed) {
    std::vector<std::vector<int>> members(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    Rng rng = make_rng(seed, "class-triplets");
    std::vector<std::array<int, 3>> out(labels.size());
    for (auto& t : out) {
        const int a = static_cast<int>(uniform_index(rng, labels.size()));
        const auto& same = members[static_cast<std::size_t>(labels[static_cast<std::size_t>(a)])];
        t = {a, same[uniform_index(rng, same.size())], static_cast<int>(uniform_index(rng, labels.size()))};
    }
    return out;
}

/// The training data source for the configured objective and loss.
inline DataSource make_source(const ExperimentConfig& c, const Prepared& p) {
    if (c.experiment == ExperimentKind::gauss) {
        TripletSource s{p.train_inputs, {}};
        for (int k = 0; k < static_cast<int>(p.train_inputs.cols() / 3); ++k) s.triplets.push_back({3 * k, 3 * k + 1, 3 * k + 2});
        return s;
    }
    switch (c.objective) {
        case Objective::supervised: return LabeledSource{p.train_inputs, p.train_labels, p.classes};
        case Objective::simclr: return AugmentedPairSource{p.train_rasters, c.augment};
        case Objective::gensim:
            if (c.train.loss == LossKind::gensim_regression) {
                const auto* feats = &p.train_features;
                return PairTargetSource{p.train_inputs, [feats](int i, int j) {
                                            return std::sqrt(static_cast<double>(quad::feature_sq_distance(
                                                (*feats)[static_cast<std::size_t>(i)], (*feats)[static_cast<std::size_t>(j)])));
                                        }};
            }
            return TripletSource{p.train_inputs, class_triplets(p.train_labels, p.classes, c.seed)};
    }
    throw std::invalid_argument("make_source: unknown objective");
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

inline Json separation_json(const PairDistanceSummary& s) {
    return {{"mean_same", s.mean_same},
            {"mean_diff", s.mean_diff},
            {"ci_same", interval_json(s.ci_same)},
            {"ci_diff", interval_json(s.ci_diff)},
            {"separated", s.separated()}};
}

inline Json probe_json(const ProbeReport& r) {
    return {{"metric", r.metric}, {"mean", r.mean}, {"ci", interval_json(r.ci)}, {"folds", r.folds}, {"lambdas", r.lambdas}};
}

inline std::vector<double> embed_one(const NetSpec& spec, const ParamVector& params, const Eigen::VectorXd& x) {
    const Eigen::VectorXd e = forward(spec, params, x);
    return {e.data(), e.data() + e.size()};
}

/// Mixture samples with their component labels.
inline void sample_labelled(const GaussianMixture& mix, Rng& rng, int n, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(mix.dim()), n);
    y.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const std::size_t k = mix.sample_component(rng);
        const Vec v = mix.sample_from(k, rng);
        for (std::size_t d = 0; d < v.size(); ++d) x(static_cast<Eigen::Index>(d), i) = v[d];
        y[static_cast<std::size_t>(i)] = static_cast<int>(k);
    }
}

/// Embeddings projected on the difference of the first two class means, then
/// the best single threshold on a fitting sample, scored on a fresh one.
inline double threshold_accuracy(const Eigen::MatrixXd& e_fit, const std::vector<int>& y_fit, const Eigen::MatrixXd& e_test,
                                 const std::vector<int>& y_test) {
    Eigen::VectorXd m0 = Eigen::VectorXd::Zero(e_fit.rows()), m1 = m0;
    double n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < e_fit.cols(); ++i) {
        if (y_fit[static_cast<std::size_t>(i)] == 0) m0 += e_fit.col(i), ++n0;
        else m1 += e_fit.col(i), ++n1;
    }
    if (n0 == 0 || n1 == 0) throw NumericFailure("threshold_accuracy: a class is missing from the fitting sample");
    const Eigen::VectorXd dir = m1 / n1 - m0 / n0;
    const Eigen::VectorXd s_fit = e_fit.transpose() * dir, s_test = e_test.transpose() * dir;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(s_fit.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return s_fit[a] < s_fit[b]; });
    // Sweep thresholds between consecutive sorted scores: predict 1 above.
    double ones_above = n1, zeros_below = 0, best = -1, thr = -1e300;
    const double n = n0 + n1;
    for (std::size_t k = 0; k <= order.size(); ++k) {
        const double acc = (ones_above + zeros_below) / n;
        if (acc > best) {
            best = acc;
            thr = k == 0 ? -1e300 : (k == order.size() ? 1e300 : 0.5 * (s_fit[order[k - 1]] + s_fit[order[k]]));
        }
        if (k < order.size()) {
            if (y_fit[static_cast<std::size_t>(order[k])] == 1) --ones_above;
            else ++zeros_below;
        }
    }
    int ok = 0;
    for (Eigen::Index i = 0; i < s_test.size(); ++i) ok += (s_test[i] > thr) == (y_test[static_cast<std::size_t>(i)] == 1);
    return ok / static_cast<double>(s_test.size());
}

}  // namespace detail

struct EvalOutput {
    Json metrics;
    std::vector<std::pair<std::string, CsvTable>> tables;  // file name, contents
};

inline EvalOutput evaluate_gauss(const ExperimentConfig& c, const ParamVector& params) {
    const GaussianMixture mix = mixture_of(c);
    const NetSpec& spec = c.net;
    EvalOutput out;
    {
        Rng fit = make_rng(c.seed, "gauss-fit"), score = make_rng(c.seed, "gauss-score");
        Eigen::MatrixXd xf, xs;
        std::vector<int> yf, ys;
        detail::sample_labelled(mix, fit, 2000, xf, yf);
        detail::sample_labelled(mix, score, 2000, xs, ys);
        out.metrics["threshold_accuracy"] =
            detail::threshold_accuracy(embed_all(spec, params, xf), yf, embed_all(spec, params, xs), ys);
    }
    // Equal-count distance bins over random pairs, closed-form similarity per bin.
    const int n = c.data.test_pairs, bins = c.data.bins;
    Rng rng = make_rng(c.seed, "gauss-pairs");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(mix.dim()), n), b(a.rows(), n);
    std::vector<double> sim(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Vec x1 = mix.sample(rng), x2 = mix.sample(rng);
        for (std::size_t d = 0; d < x1.size(); ++d) {
            a(static_cast<Eigen::Index>(d), i) = x1[d];
            b(static_cast<Eigen::Index>(d), i) = x2[d];
        }
        sim[static_cast<std::size_t>(i)] = closed_form_log_gen_sim(mix, x1, x2);
    }
    const Eigen::VectorXd dist = (embed_all(spec, params, a) - embed_all(spec, params, b)).colwise().norm().transpose();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return dist[i] < dist[j]; });
    CsvTable table{{"bin", "n", "mean_distance", "mean_log_gen_sim"}, {}};
    std::vector<double> bin_dist, bin_sim;
    for (int k = 0; k < bins; ++k) {
        const int lo = static_cast<int>(static_cast<long long>(k) * n / bins), hi = static_cast<int>(static_cast<long long>(k + 1) * n / bins);
        double sd = 0, ss = 0;
        for (int i = lo; i < hi; ++i) {
            sd += dist[order[static_cast<std::size_t>(i)]];
            ss += sim[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        }
        bin_dist.push_back(sd / (hi - lo));
        bin_sim.push_back(ss / (hi - lo));
        table.add({std::to_string(k), std::to_string(hi - lo), format_sig9(bin_dist.back()), format_sig9(bin_sim.back())});
    }
    const Correlation rho = spearman_rho(bin_dist, bin_sim);
    out.metrics["binned"] = {{"bins", bins}, {"pairs", n}, {"spearman_rho", rho.rho}, {"p_value", rho.p_value}};
    out.tables.emplace_back("gensim_vs_distance.csv", std::move(table));

    Rng sep = make_rng(c.seed, "separation");
    const auto embed = [&](const Vec& x) {
        return detail::embed_one(spec, params, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    };
    out.metrics["separation"] = detail::separation_json(
        expected_pair_distances(embed, as_process(mix), sep, static_cast<std::size_t>(c.data.separation_triplets)));
    return out;
}

inline std::vector<quad::OddballTrial> quad_trials(const ExperimentConfig& c) {
    // Separate seed stream from training, so trial exemplars never appear in training.
    Rng rng = make_rng(c.seed, "quad-trials");
    std::vector<quad::OddballTrial> trials;
    for (quad::QuadCategory cat : quad::kAllCategories)
        for (int i = 0; i < c.data.trials_per_category; ++i) trials.push_back(quad::make_oddball_trial(cat, rng));
    return trials;
}

inline EvalOutput evaluate_quad(const ExperimentConfig& c, const ParamVector& params) {
    const NetSpec& spec = c.net;
    const int size = c.data.raster_size;
    const bool vec = c.data.vector_input;
    const auto input_of = [&](const quad::Quadrilateral& q) -> Eigen::VectorXd {
        if (vec) return quad_vector(q);
        const Raster r = quad_raster(q, size);
        return Eigen::Map<const Eigen::VectorXd>(r.pixels().data(), static_cast<Eigen::Index>(r.pixels().size()));
    };
    const TrialInputs inputs = [&](const quad::OddballTrial& t) {
        Eigen::MatrixXd x(spec.input_dim(), 6);
        for (int i = 0; i < 6; ++i) x.col(i) = input_of(t.items[static_cast<std::size_t>(i)]);
        return x;
    };
    const OddballResult od = oddball_error_rate(spec, params, quad_trials(c), inputs);
    EvalOutput out;
    CsvTable table{{"category", "regularity_rank", "regularity_total", "n_trials", "error_rate"}, {}};
    std::vector<double> err, rank, total;
    Json per = Json::object();
    for (quad::QuadCategory cat : quad::kAllCategories) {
        const std::string name(quad::name_of(cat));
        err.push_back(od.error_rate.at(name));
        rank.push_back(quad::regularity_rank(cat));
        total.push_back(quad::regularity_row(cat).total());
        per[name] = err.back();
        table.add({name, std::to_string(quad::regularity_rank(cat)), std::to_string(quad::regularity_row(cat).total()),
                   std::to_string(od.n_trials.at(name)), format_sig9(err.back())});
    }
    const Correlation by_rank = spearman_rho(rank, err);
    // Higher totals mean more regular, so a regularity effect shows as a negative rho here.
    const Correlation by_total = spearman_rho(total, err);
    out.metrics["oddball"] = {{"error_rate", per},
                              {"overall_error", od.overall_error},
                              {"trials", od.total},
                              {"ties", od.ties},
                              {"predicted_positions", od.predicted},
                              {"position_uniform_p", chi_square_uniform_p(od.predicted)}};
    out.metrics["regularity"] = {
        {"spearman_rho_rank", by_rank.rho},  {"p_value_rank", by_rank.p_value},   {"exact_rank", by_rank.exact},
        {"spearman_rho_total", by_total.rho}, {"p_value_total", by_total.p_value}, {"exact_total", by_total.exact}};
    out.tables.emplace_back("oddball_errors.csv", std::move(table));

    Rng sep = make_rng(c.seed, "separation");
    const auto embed = [&](const quad::Quadrilateral& q) { return detail::embed_one(spec, params, input_of(q)); };
    out.metrics["separation"] = detail::separation_json(
        expected_pair_distances(embed, quad_training_process(), sep, static_cast<std::size_t>(c.data.separation_triplets)));
    return out;
}

/// Style (logistic) and primitive-count (ridge, mean grey as confound) probes
/// on held-out drawings.
inline Json draw_probes(const ExperimentConfig& c, const ParamVector& params, const Prepared& p, Eigen::MatrixXd* emb = nullptr) {
    const Eigen::MatrixXd e = embed_all(c.net, params, p.test_inputs).transpose();
    if (emb) *emb = e;
    return {{"style", detail::probe_json(logistic_probe(e, p.test_labels, c.seed))},
            {"primitive_count", detail::probe_json(ridge_probe(e, p.test_counts, p.test_grey, c.seed))}};
}

inline EvalOutput evaluate_draw(const ExperimentConfig& c, const ParamVector& params, const Prepared& p) {
    EvalOutput out;
    Eigen::MatrixXd e;
    out.metrics["probes"] = draw_probes(c, params, p, &e);
    const PcaResult pca = pca_project(e, std::min<int>(2, static_cast<int>(e.cols())));
    CsvTable table{{"item", "style", "pc1", "pc2"}, {}};
    for (Eigen::Index i = 0; i < pca.projected.rows(); ++i)
        table.add({std::to_string(i), std::string(draw::style_name(static_cast<draw::Style>(p.test_labels[static_cast<std::size_t>(i)]))),
                   format_sig9(pca.projected(i, 0)), pca.projected.cols() > 1 ? format_sig9(pca.projected(i, 1)) : "0"});
    std::vector<double> ratio;
    for (Eigen::Index k = 0; k < pca.explained_variance.size(); ++k)
        ratio.push_back(pca.total_variance > 0 ? pca.explained_variance[k] / pca.total_variance : 0.0);
    out.metrics["pca"] = {{"explained_variance_ratio", ratio}};
    out.tables.emplace_back("pca.csv", std::move(table));

    Rng sep = make_rng(c.seed, "separation");
    const auto embed = [&](const draw::Drawing& d) {
        return detail::embed_one(c.net, params, Eigen::Map<const Eigen::VectorXd>(d.raster.pixels().data(), c.net.input_dim()));
    };
    out.metrics["separation"] = detail::separation_json(expected_pair_distances(
        embed, draw::style_process(c.data.raster_size), sep, static_cast<std::size_t>(c.data.separation_triplets)));
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Output directory layout.
struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path metrics() const { return root / "metrics.json"; }
    std::filesystem::path probes() const { return root / "probe.json"; }
    std::filesystem::path model() const { return root / "model.ckpt"; }
    std::filesystem::path head() const { return root / "head.ckpt"; }
    std::filesystem::path epoch_log() const { return root / "epoch_log.csv"; }
    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    std::filesystem::path data_dir() const { return dataset_cache_dir(root / "data"); }
};

class Experiment {
public:
    Experiment(ExperimentConfig cfg, std::filesystem::path out) : cfg_(std::move(cfg)), paths_{std::move(out)} {
        validate(cfg_);
        hash_ = config_hash(cfg_);
        manifest_ = {{"config_hash", hash_},
                     {"code_version", kCodeVersion},
                     {"config", config_to_json(cfg_)},
                     {"stages", Json::object()},
                     {"partial", false},
                     {"failed_stage", nullptr},
                     {"error", nullptr}};
        if (std::filesystem::exists(paths_.manifest())) {
            // Keep the stage record of earlier invocations on the same config.
            const Json old = read_json(paths_.manifest());
            if (old.value("config_hash", "") == hash_ && old.contains("stages")) manifest_["stages"] = old["stages"];
        }
    }

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const RunPaths& paths() const noexcept { return paths_; }
    const std::string& hash() const noexcept { return hash_; }

    void gen_data() {
        stage(Stage::gen_data, [&] { data(); });
    }

    void train() {
        stage(Stage::train, [&] {
            const Prepared& p = prepared();
            TrainConfig tc = cfg_.train;
            tc.seed = cfg_.seed;
            tc.checkpoint_dir = paths_.checkpoints();
            const TrainResult r = train_run(cfg_.net, tc, make_source(cfg_, p));
            std::filesystem::create_directories(paths_.root);
            save_checkpoint(paths_.model(), cfg_.net, r.params);
            if (r.head) save_checkpoint(paths_.head(), head_spec(cfg_.net, p.classes), *r.head);
            write_epoch_csv(r.log, paths_.epoch_log());
            params_ = r.params;
            final_loss_ = r.log.empty() ? std::nullopt : std::optional<double>(r.log.back().mean_loss);
        });
    }

    Json eval() {
        Json metrics;
        stage(Stage::eval, [&] {
            const ParamVector& params = model();
            EvalOutput ev;
            switch (cfg_.experiment) {
                case ExperimentKind::gauss: ev = evaluate_gauss(cfg_, params); break;
                case ExperimentKind::quad: ev = evaluate_quad(cfg_, params); break;
                case ExperimentKind::draw: ev = evaluate_draw(cfg_, params, prepared()); break;
            }
            metrics = ev.metrics;
            metrics["config_hash"] = hash_;
            metrics["experiment"] = experiment_name(cfg_.experiment);
            metrics["objective"] = objective_name(cfg_.objective);
            metrics["seed"] = cfg_.seed;
            metrics["epochs"] = cfg_.train.epochs;
            if (final_loss_) metrics["final_train_loss"] = *final_loss_;
            else if (const auto l = last_logged_loss()) metrics["final_train_loss"] = *l;
            write_json(paths_.metrics(), metrics);
            for (const auto& [name, table] : ev.tables) write_csv(paths_.root / name, table);
        });
        return metrics;
    }

    /// Linear probes on held-out items: style and primitive count for draw,
    /// component label for gauss, a right-angle indicator and feature count
    /// for quad.
    Json probe() {
        Json report;
        stage(Stage::probe, [&] {
            const ParamVector& params = model();
            switch (cfg_.experiment) {
                case ExperimentKind::draw: report = draw_probes(cfg_, params, prepared()); break;
                case ExperimentKind::gauss: {
                    Rng rng = make_rng(cfg_.seed, "probe-items");
                    Eigen::MatrixXd x;
                    std::vector<int> y;
                    detail::sample_labelled(mixture_of(cfg_), rng, 1000, x, y);
                    report["component"] = detail::probe_json(logistic_probe(embed_all(cfg_.net, params, x).transpose(), y, cfg_.seed));
                    break;
                }
                case ExperimentKind::quad: {
                    Rng rng = make_rng(cfg_.seed, "probe-items");
                    const auto proc = quad_training_process();
                    Eigen::MatrixXd x(cfg_.net.input_dim(), 440);
                    std::vector<int> right;
                    std::vector<double> count, grey;
                    for (int i = 0; i < 440; ++i) {
                        const auto q = proc.sample_datum(quad::kAllCategories[static_cast<std::size_t>(i % quad::kNumCategories)], rng);
                        const auto f = quad::extract_features(q);
                        const Raster r = quad_raster(q, cfg_.data.raster_size);
                        x.col(i) = cfg_.data.vector_input
                                       ? quad_vector(q)
                                       : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(r.pixels().data(), x.rows()));
                        right.push_back(f.right_angles() > 0);
                        count.push_back(f.count());
                        grey.push_back(mean_grey(r));
                    }
                    const Eigen::MatrixXd e = embed_all(cfg_.net, params, x).transpose();
                    report["has_right_angle"] = detail::probe_json(logistic_probe(e, right, cfg_.seed));
                    report["feature_count"] = detail::probe_json(ridge_probe(e, count, grey, cfg_.seed));
                    break;
                }
            }
            report["config_hash"] = hash_;
            write_json(paths_.probes(), report);
        });
        return report;
    }

    Json run() {
        gen_data();
        train();
        return eval();
    }

    const Json& manifest() const noexcept { return manifest_; }

private:
    template <class F>
    void stage(Stage s, F&& f) {
        const std::string name(stage_name(s));
        try {
            f();
        } catch (const Error& e) {
            fail(name, e.what());
            rethrow_with_stage(name, e);
        } catch (const std::exception& e) {
            fail(name, e.what());
            throw Error("stage '" + name + "': " + e.what());
        }
        manifest_["stages"][name] = "done";
        write_json(paths_.manifest(), manifest_);
    }

    void fail(const std::string& name, const std::string& what) {
        manifest_["stages"][name] = "failed";
        manifest_["partial"] = true;
        manifest_["failed_stage"] = name;
        manifest_["error"] = what;
        try {
            write_json(paths_.manifest(), manifest_);
        } catch (const IoError&) {
            // The original error is the one worth reporting.
        }
    }

    [[noreturn]] static void rethrow_with_stage(const std::string& name, const Error& e) {
        const std::string msg = "stage '" + name + "': " + e.what();
        if (dynamic_cast<const ConfigError*>(&e)) throw ConfigError(msg);
        if (dynamic_cast<const NumericFailure*>(&e)) throw NumericFailure(msg);
        if (dynamic_cast<const IoError*>(&e)) throw IoError(msg);
        throw Error(msg);
    }

    const Dataset& data() {
        if (!data_) {
            bool reused = false;
            data_ = cached_dataset(paths_.data_dir(), generator_of(cfg_), [&] { return generate_dataset(cfg_); }, &reused);
            manifest_["dataset"] = {{"key", json_hash(generator_of(cfg_))}, {"path", paths_.data_dir().string()}};
        }
        return *data_;
    }

    const Prepared& prepared() {
        if (!prepared_) prepared_ = prepare(cfg_, data());
        return *prepared_;
    }

    const ParamVector& model() {
        if (!params_) {
            if (!std::filesystem::exists(paths_.model()))
                throw IoError("no trained model at " + paths_.model().string() + "; run the train stage first");
            params_ = load_checkpoint(paths_.model(), cfg_.net);
        }
        return *params_;
    }

    std::optional<double> last_logged_loss() const {
        if (!std::filesystem::exists(paths_.epoch_log())) return std::nullopt;
        const std::string text = read_text(paths_.epoch_log());
        std::size_t end = text.find_last_not_of('\n');
        const std::size_t start = text.rfind('\n', end);
        const std::string line = text.substr(start + 1, end - start);
        const std::size_t a = line.find(','), b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw IoError("malformed epoch log: " + paths_.epoch_log().string());
        const std::string field = line.substr(a + 1, b - a - 1);
        if (field == "mean_loss") return std::nullopt;
        return std::stod(field);
    }

    ExperimentConfig cfg_;
    RunPaths paths_;
    std::string hash_;
    Json manifest_;
    std::optional<Dataset> data_;
    std::optional<Prepared> prepared_;
    std::optional<ParamVector> params_;
    std::optional<double> final_loss_;
};

inline Json run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    Experiment e(cfg, out);
    return e.run();
}

}  // namespace gensim
