#pragma once

// Experiment configuration: JSON schema, per-experiment defaults, validation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gensim/augment.hpp"
#include "gensim/embed_net.hpp"
#include "gensim/error.hpp"
#include "gensim/report.hpp"
#include "gensim/trainer.hpp"

namespace gensim {

enum class ExperimentKind { gauss, quad, draw };
enum class Objective { gensim, supervised, simclr };

inline std::string_view experiment_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::gauss: return "gauss";
        case ExperimentKind::quad: return "quad";
        case ExperimentKind::draw: return "draw";
    }
    return "?";
}

inline std::string_view objective_name(Objective o) {
    switch (o) {
        case Objective::gensim: return "gensim";
        case Objective::supervised: return "supervised";
        case Objective::simclr: return "simclr";
    }
    return "?";
}

struct GaussProcessConfig {
    std::vector<std::vector<double>> means{{5.0, 5.0}, {1.0, 1.0}};
    double variance = 1.0;
};

struct DataConfig {
    // gauss
    int triplets = 10000;
    int test_pairs = 10000;
    int bins = 100;
    // quad
    int per_category = 1000;
    int trials_per_category = 60;
    bool vector_input = false;
    // draw
    int train_per_grammar = 2000;
    int test_per_grammar = 400;
    // quad, draw
    int raster_size = 64;
    // all
    int separation_triplets = 1000;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::gauss;
    Objective objective = Objective::gensim;
    std::uint64_t seed = 0;
    bool paper_scale = false;
    std::optional<std::string> output_dir;
    GaussProcessConfig process;
    DataConfig data;
    NetSpec net;
    TrainConfig train;
    AugmentSpec augment;
};

namespace detail {

inline std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

/// Field reader that rejects keys it was never asked about.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + "must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const Json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError("expected an integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError("expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("expected a string");
            }
            out = v.get<T>();
        } catch (const ConfigError& e) {
            throw ConfigError(where(key) + e.what());
        } catch (const Json::exception& e) {
            throw ConfigError(where(key) + e.what());
        }
    }

    const Json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string where(const std::string& key) const {
        const std::string full = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
        return "config field '" + full + "': ";
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown config key '" + path(k) + "'");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline Interval read_interval(const Json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError("config field '" + field + "': expected [lo, hi]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("config field '" + field + "': " + what);
}

}  // namespace detail

/// Defaults for an experiment/objective pair before user overrides.
inline ExperimentConfig default_config(ExperimentKind e, Objective o, bool paper_scale = false) {
    ExperimentConfig c;
    c.experiment = e;
    c.objective = o;
    c.paper_scale = paper_scale;
    c.train.optimizer = OptimizerKind::adam;
    switch (e) {
        case ExperimentKind::gauss:
            c.net = NetSpec::mlp({2, 32, 1});
            c.train.loss = LossKind::quadratic_triplet;
            c.train.learning_rate = 1e-5;
            c.train.batch_size = 256;
            c.train.epochs = 300;
            break;
        case ExperimentKind::quad:
            c.data.raster_size = 64;
            c.net = NetSpec::conv(64, 4, 16, 64);
            c.train.learning_rate = 5e-4;
            c.train.batch_size = 16;
            c.train.epochs = 13;
            break;
        case ExperimentKind::draw:
            c.data.raster_size = 128;
            c.net = NetSpec::conv(128, 5, 16, 256);
            c.train.learning_rate = 1e-3;
            c.train.batch_size = 128;
            c.train.epochs = 10;
            if (paper_scale) {
                c.data.train_per_grammar = 20000;
                c.data.test_per_grammar = 800;
                c.net = NetSpec::conv(128, 6, 64, 256);
            }
            break;
    }
    switch (o) {
        case Objective::gensim:
            if (e == ExperimentKind::quad) c.train.loss = LossKind::gensim_regression;
            if (e == ExperimentKind::draw) c.train.loss = LossKind::linear_triplet;
            break;
        case Objective::supervised: c.train.loss = LossKind::cross_entropy; break;
        case Objective::simclr:
            c.train.loss = LossKind::info_nce;
            c.train.temperature = 0.5;
            break;
    }
    return c;
}

/// Cross-field checks; throws ConfigError naming the field.
inline void validate(const ExperimentConfig& c) {
    using detail::require;
    const DataConfig& d = c.data;
    require(c.train.learning_rate > 0, "train.learning_rate", "must be positive");
    require(c.train.batch_size >= 1, "train.batch_size", "must be positive");
    require(c.train.epochs >= 0, "train.epochs", "must be >= 0");
    require(c.train.temperature > 0, "train.temperature", "must be positive");
    require(c.train.adam.beta1 >= 0 && c.train.adam.beta1 < 1, "train.adam.beta1", "must be in [0, 1)");
    require(c.train.adam.beta2 >= 0 && c.train.adam.beta2 < 1, "train.adam.beta2", "must be in [0, 1)");
    require(c.train.adam.epsilon > 0, "train.adam.epsilon", "must be positive");
    try {
        c.augment.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config field 'augment': ") + e.what());
    }
    try {
        c.net.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config field 'net': ") + e.what());
    }
    require(d.separation_triplets >= 2, "data.separation_triplets", "must be >= 2");
    const LossKind loss = c.train.loss;
    switch (c.experiment) {
        case ExperimentKind::gauss: {
            require(c.objective == Objective::gensim, "objective", "gauss supports only 'gensim'");
            require(is_triplet_loss(loss), "train.loss", "gauss trains on triplets; use a triplet loss");
            require(c.process.means.size() >= 2, "process.means", "need at least two components");
            const std::size_t dim = c.process.means.front().size();
            require(dim >= 1, "process.means", "empty mean vector");
            for (const auto& m : c.process.means) require(m.size() == dim, "process.means", "ragged mean vectors");
            require(c.process.variance > 0, "process.variance", "must be positive");
            require(c.net.kind == NetKind::mlp && c.net.input_dim() == static_cast<int>(dim), "net",
                    "gauss needs an mlp whose input width equals the mixture dimension");
            require(d.triplets >= 1, "data.triplets", "must be positive");
            require(d.test_pairs >= 2 * d.bins, "data.test_pairs", "need at least two points per bin");
            require(d.bins >= 3, "data.bins", "must be >= 3");
            break;
        }
        case ExperimentKind::quad:
        case ExperimentKind::draw: {
            const bool quad = c.experiment == ExperimentKind::quad;
            require(d.raster_size >= 32, "data.raster_size", "must be >= 32");
            if (quad) {
                require(d.per_category >= 2, "data.per_category", "must be >= 2");
                require(d.trials_per_category >= 1, "data.trials_per_category", "must be positive");
            } else {
                require(!d.vector_input, "data.vector_input", "only quad supports vector input");
                require(d.train_per_grammar >= 2, "data.train_per_grammar", "must be >= 2");
                require(d.test_per_grammar >= 25, "data.test_per_grammar", "probes need >= 25 items per grammar");
            }
            if (d.vector_input) {
                require(c.net.kind == NetKind::mlp && c.net.input_dim() == 8, "net", "vector input needs an mlp with input width 8");
                require(c.objective != Objective::simclr, "objective", "simclr needs raster input");
            } else {
                require(c.net.kind == NetKind::conv && c.net.input_size == d.raster_size, "net.input_size",
                        "conv input must match data.raster_size");
            }
            switch (c.objective) {
                case Objective::gensim:
                    require(is_triplet_loss(loss) || (quad && loss == LossKind::gensim_regression), "train.loss",
                            quad ? "gensim objective needs a triplet or gensim_regression loss"
                                 : "gensim objective needs a triplet loss");
                    break;
                case Objective::supervised:
                    require(loss == LossKind::cross_entropy, "train.loss", "supervised objective uses cross_entropy");
                    break;
                case Objective::simclr:
                    require(loss == LossKind::info_nce, "train.loss", "simclr objective uses info_nce");
                    break;
            }
            break;
        }
    }
}

/// Parses a config document: experiment and seed are mandatory, unknown keys
/// rejected, defaults filled per experiment/objective.
inline ExperimentConfig parse_config(const Json& j) {
    detail::ObjectReader top(j, "");
    std::string exp, obj = "gensim";
    top.read("experiment", exp);
    if (!top.has("experiment")) throw ConfigError("config field 'experiment': required");
    if (!top.has("seed")) throw ConfigError("config field 'seed': required");
    top.read("objective", obj);
    bool paper_scale = false;
    top.read("paper_scale", paper_scale);
    ExperimentKind kind;
    if (exp == "gauss") kind = ExperimentKind::gauss;
    else if (exp == "quad") kind = ExperimentKind::quad;
    else if (exp == "draw") kind = ExperimentKind::draw;
    else throw ConfigError("config field 'experiment': expected gauss, quad or draw, got '" + exp + "'");
    Objective o;
    if (obj == "gensim") o = Objective::gensim;
    else if (obj == "supervised") o = Objective::supervised;
    else if (obj == "simclr") o = Objective::simclr;
    else throw ConfigError("config field 'objective': expected gensim, supervised or simclr, got '" + obj + "'");

    ExperimentConfig c = default_config(kind, o, paper_scale);
    std::int64_t seed = 0;
    top.read("seed", seed);
    if (seed < 0) throw ConfigError("config field 'seed': must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
    std::string out;
    top.read("output_dir", out);
    if (top.has("output_dir")) c.output_dir = out;

    if (const Json* p = top.child("process")) {
        detail::ObjectReader r(*p, "process");
        if (kind != ExperimentKind::gauss) throw ConfigError("config field 'process': only gauss has process parameters");
        r.read("means", c.process.means);
        r.read("variance", c.process.variance);
        r.finish();
    }
    if (const Json* p = top.child("data")) {
        detail::ObjectReader r(*p, "data");
        r.read("triplets", c.data.triplets);
        r.read("test_pairs", c.data.test_pairs);
        r.read("bins", c.data.bins);
        r.read("per_category", c.data.per_category);
        r.read("trials_per_category", c.data.trials_per_category);
        r.read("vector_input", c.data.vector_input);
        r.read("train_per_grammar", c.data.train_per_grammar);
        r.read("test_per_grammar", c.data.test_per_grammar);
        r.read("raster_size", c.data.raster_size);
        r.read("separation_triplets", c.data.separation_triplets);
        r.finish();
    }
    // Network defaults follow the data shape unless overridden.
    if (c.experiment != ExperimentKind::gauss) {
        if (c.data.vector_input) c.net = NetSpec::mlp({8, 64, 64, 64});
        else c.net.input_size = c.data.raster_size;
    } else {
        c.net.widths.front() = static_cast<int>(c.process.means.front().size());
    }
    if (const Json* p = top.child("net")) {
        detail::ObjectReader r(*p, "net");
        std::string k = c.net.kind == NetKind::mlp ? "mlp" : "conv";
        r.read("kind", k);
        if (k == "mlp") c.net.kind = NetKind::mlp;
        else if (k == "conv") c.net.kind = NetKind::conv;
        else throw ConfigError("config field 'net.kind': expected mlp or conv");
        r.read("widths", c.net.widths);
        r.read("input_size", c.net.input_size);
        r.read("blocks", c.net.blocks);
        r.read("filters", c.net.filters);
        r.read("embed_dim", c.net.embed_dim);
        r.finish();
    }
    if (const Json* p = top.child("train")) {
        detail::ObjectReader r(*p, "train");
        std::string loss(loss_name(c.train.loss)), opt(detail::optimizer_name(c.train.optimizer));
        r.read("loss", loss);
        try {
            c.train.loss = loss_from_name(loss);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config field 'train.loss': ") + e.what());
        }
        r.read("optimizer", opt);
        if (opt == "adam") c.train.optimizer = OptimizerKind::adam;
        else if (opt == "sgd") c.train.optimizer = OptimizerKind::sgd;
        else throw ConfigError("config field 'train.optimizer': expected adam or sgd");
        r.read("learning_rate", c.train.learning_rate);
        r.read("batch_size", c.train.batch_size);
        r.read("epochs", c.train.epochs);
        r.read("temperature", c.train.temperature);
        if (const Json* a = r.child("adam")) {
            detail::ObjectReader ar(*a, "train.adam");
            ar.read("beta1", c.train.adam.beta1);
            ar.read("beta2", c.train.adam.beta2);
            ar.read("epsilon", c.train.adam.epsilon);
            ar.finish();
        }
        r.finish();
    }
    if (const Json* p = top.child("augment")) {
        detail::ObjectReader r(*p, "augment");
        if (const Json* v = r.child("crop_scale")) c.augment.crop_scale = detail::read_interval(*v, "augment.crop_scale");
        r.read("flip_prob", c.augment.flip_prob);
        if (const Json* v = r.child("blur_sigma")) c.augment.blur_sigma = detail::read_interval(*v, "augment.blur_sigma");
        r.finish();
    }
    top.finish();
    c.train.seed = c.seed;
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

/// Fully resolved config; output_dir is left out so the hash names the
/// experiment, not where it was written.
inline Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["experiment"] = experiment_name(c.experiment);
    j["objective"] = objective_name(c.objective);
    j["seed"] = c.seed;
    j["paper_scale"] = c.paper_scale;
    if (c.experiment == ExperimentKind::gauss) j["process"] = {{"means", c.process.means}, {"variance", c.process.variance}};
    const DataConfig& d = c.data;
    switch (c.experiment) {
        case ExperimentKind::gauss:
            j["data"] = {{"triplets", d.triplets}, {"test_pairs", d.test_pairs}, {"bins", d.bins},
                         {"separation_triplets", d.separation_triplets}};
            break;
        case ExperimentKind::quad:
            j["data"] = {{"per_category", d.per_category}, {"trials_per_category", d.trials_per_category},
                         {"vector_input", d.vector_input}, {"raster_size", d.raster_size},
                         {"separation_triplets", d.separation_triplets}};
            break;
        case ExperimentKind::draw:
            j["data"] = {{"train_per_grammar", d.train_per_grammar}, {"test_per_grammar", d.test_per_grammar},
                         {"raster_size", d.raster_size}, {"separation_triplets", d.separation_triplets}};
            break;
    }
    if (c.net.kind == NetKind::mlp) j["net"] = {{"kind", "mlp"}, {"widths", c.net.widths}};
    else
        j["net"] = {{"kind", "conv"},           {"input_size", c.net.input_size}, {"blocks", c.net.blocks},
                    {"filters", c.net.filters}, {"embed_dim", c.net.embed_dim}};
    j["train"] = {{"loss", loss_name(c.train.loss)},
                  {"optimizer", detail::optimizer_name(c.train.optimizer)},
                  {"learning_rate", c.train.learning_rate},
                  {"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"temperature", c.train.temperature},
                  {"adam", {{"beta1", c.train.adam.beta1}, {"beta2", c.train.adam.beta2}, {"epsilon", c.train.adam.epsilon}}}};
    j["augment"] = {{"crop_scale", {c.augment.crop_scale.lo, c.augment.crop_scale.hi}},
                    {"flip_prob", c.augment.flip_prob},
                    {"blur_sigma", {c.augment.blur_sigma.lo, c.augment.blur_sigma.hi}}};
    return j;
}

inline std::string config_hash(const ExperimentConfig& c) { return json_hash(config_to_json(c)); }

}  // namespace gensim
