#pragma once

// Command-line front end: gen-data, train, eval, run, probe, gradcheck.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gensim/experiment.hpp"
#include "gensim/gradcheck.hpp"

namespace gensim {

enum ExitCode : int { kExitOk = 0, kExitOther = 1, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4 };

struct CliOptions {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::string out;
    bool paper_scale = false;
    bool vector_input = false;
};

/// Reads the config file and applies command-line overrides before parsing,
/// so overrides go through the same validation.
inline ExperimentConfig resolve_config(const CliOptions& o, std::filesystem::path* out_dir) {
    Json j;
    {
        std::string text;
        try {
            text = read_text(o.config_path);
        } catch (const IoError& e) {
            throw ConfigError(e.what());
        }
        try {
            j = Json::parse(text);
        } catch (const Json::parse_error& e) {
            throw ConfigError(o.config_path + ": " + e.what());
        }
    }
    if (!j.is_object()) throw ConfigError(o.config_path + ": top level must be an object");
    if (o.seed) j["seed"] = *o.seed;
    if (o.paper_scale) j["paper_scale"] = true;
    if (o.vector_input) {
        j["data"]["vector_input"] = true;
        // A raster network spec in the file no longer fits; let defaults pick the mlp.
        if (j.contains("net") && j["net"].value("kind", "") != "mlp") j.erase("net");
    }
    if (!o.out.empty()) j["output_dir"] = o.out;
    ExperimentConfig c = parse_config(j);
    if (!c.output_dir) throw ConfigError("config field 'output_dir': required (or pass --out)");
    if (out_dir) *out_dir = *c.output_dir;
    return c;
}

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const NumericFailure*>(&e)) return kExitNumeric;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kExitIo;
    return kExitOther;
}

inline int run_gradcheck(std::uint64_t seed, std::ostream& out) {
    bool ok = true;
    out << "loss,level,max_rel_err,tolerance,ok\n";
    for (const GradCheckRow& r : gradient_suite(seed)) {
        out << r.loss << ',' << r.level << ',' << format_sig9(r.max_rel_err) << ',' << format_sig9(r.tolerance) << ','
            << (r.ok() ? "yes" : "NO") << '\n';
        ok = ok && r.ok();
    }
    return ok ? kExitOk : kExitNumeric;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Generative-similarity experiments"};
    app.require_subcommand(1);
    CliOptions o;
    std::int64_t seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "master seed, overrides the config");
        sub->add_option("--out", o.out, "output directory, overrides the config");
        sub->add_flag("--paper-scale", o.paper_scale, "dataset and network sizes used in the paper");
        sub->add_flag("--vector-input", o.vector_input, "quad: feed vertex coordinates instead of rasters");
    };
    std::vector<std::pair<std::string, CLI::App*>> subs;
    for (const char* name : {"gen-data", "train", "eval", "run", "probe"}) {
        static const std::map<std::string, std::string> help = {
            {"gen-data", "generate (or reuse) the dataset"},
            {"train", "train the embedding network"},
            {"eval", "evaluate a trained model and write metrics"},
            {"run", "gen-data, train and eval"},
            {"probe", "linear probes on frozen embeddings"}};
        CLI::App* sub = app.add_subcommand(name, help.at(name));
        add_common(sub);
        subs.emplace_back(name, sub);
    }
    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss and architecture");
    std::int64_t grad_seed = 0;
    grad->add_option("--seed", grad_seed, "seed for the random test points");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (grad->parsed()) return run_gradcheck(static_cast<std::uint64_t>(grad_seed), out);
        std::string command;
        for (const auto& [name, sub] : subs)
            if (sub->parsed()) {
                command = name;
                if (sub->count("--seed")) o.seed = seed;
            }
        std::filesystem::path dir;
        const ExperimentConfig cfg = resolve_config(o, &dir);
        Experiment ex(cfg, dir);
        if (command == "gen-data") {
            ex.gen_data();
        } else if (command == "train") {
            ex.train();
        } else if (command == "eval") {
            ex.eval();
        } else if (command == "run") {
            ex.run();
        } else {
            ex.probe();
        }
        out << command << ": ok (" << dir.string() << ", config " << ex.hash() << ")\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

}  // namespace gensim
