#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "gensim/cli.hpp"

using namespace gensim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("gensim_experiment_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "<no ConfigError>";
}

ExperimentConfig small_gauss(std::uint64_t seed = 5) {
    return parse_config(Json::parse(R"({"experiment": "gauss", "seed": )" + std::to_string(seed) +
                                    R"(, "data": {"triplets": 1500, "test_pairs": 2000, "bins": 50, "separation_triplets": 300},
                                          "train": {"epochs": 4, "learning_rate": 1e-3}})"));
}

ExperimentConfig small_quad(const std::string& objective) {
    return parse_config(Json::parse(R"({"experiment": "quad", "seed": 4, "objective": ")" + objective + R"(",
        "data": {"per_category": 30, "trials_per_category": 6, "raster_size": 32, "separation_triplets": 50},
        "net": {"input_size": 32, "blocks": 2, "filters": 4, "embed_dim": 16},
        "train": {"epochs": 1, "batch_size": 32}})"));
}

ExperimentConfig small_draw() {
    return parse_config(Json::parse(R"({"experiment": "draw", "seed": 6,
        "data": {"train_per_grammar": 40, "test_per_grammar": 30, "raster_size": 32, "separation_triplets": 40},
        "net": {"input_size": 32, "blocks": 3, "filters": 4, "embed_dim": 16},
        "train": {"epochs": 1, "batch_size": 32}})"));
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "gensim");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return rc;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    write_text(p, text);
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, MinimalGaussGetsDefaults) {
    const ExperimentConfig c = parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1})"));
    EXPECT_EQ(c.train.learning_rate, 1e-5);
    EXPECT_EQ(c.net.widths, (std::vector<int>{2, 32, 1}));
    EXPECT_EQ(c.train.batch_size, 256);
    EXPECT_EQ(c.train.epochs, 300);
    EXPECT_EQ(c.data.triplets, 10000);
    EXPECT_EQ(c.process.means, (std::vector<std::vector<double>>{{5, 5}, {1, 1}}));
    EXPECT_EQ(c.process.variance, 1.0);
    EXPECT_EQ(c.train.seed, 1u);
}

TEST(Config, DrawDefaults) {
    const ExperimentConfig c = parse_config(Json::parse(R"({"experiment": "draw", "seed": 1})"));
    EXPECT_EQ(c.train.batch_size, 128);
    EXPECT_EQ(c.train.learning_rate, 1e-3);
    EXPECT_EQ(c.data.raster_size, 128);
    EXPECT_EQ(c.net.input_size, 128);
    EXPECT_EQ(c.data.train_per_grammar, 2000);
    EXPECT_EQ(c.data.test_per_grammar, 400);
    const ExperimentConfig big = parse_config(Json::parse(R"({"experiment": "draw", "seed": 1, "paper_scale": true})"));
    EXPECT_EQ(big.data.train_per_grammar, 20000);
    EXPECT_EQ(big.data.test_per_grammar, 800);
}

TEST(Config, QuadObjectivesShareDataAndNetwork) {
    std::optional<NetSpec> net;
    std::optional<Json> gen;
    for (const char* o : {"gensim", "supervised", "simclr"}) {
        const ExperimentConfig c = parse_config(Json::parse(std::string(R"({"experiment": "quad", "seed": 1, "objective": ")") + o + "\"}"));
        EXPECT_EQ(c.train.epochs, 13);
        if (net) {
            EXPECT_EQ(net->hash(), c.net.hash());
            EXPECT_EQ(*gen, generator_of(c));
        }
        net = c.net;
        gen = generator_of(c);
    }
    auto loss_for = [](const char* o) {
        return parse_config(Json::parse(std::string(R"({"experiment": "quad", "seed": 1, "objective": ")") + o + "\"}")).train.loss;
    };
    EXPECT_EQ(loss_for("gensim"), LossKind::gensim_regression);
    EXPECT_EQ(loss_for("supervised"), LossKind::cross_entropy);
    EXPECT_EQ(loss_for("simclr"), LossKind::info_nce);
}

TEST(Config, VectorInputSwitchesToMlp) {
    const ExperimentConfig c = parse_config(Json::parse(R"({"experiment": "quad", "seed": 1, "data": {"vector_input": true}})"));
    EXPECT_EQ(c.net.kind, NetKind::mlp);
    EXPECT_EQ(c.net.input_dim(), 8);
}

TEST(Config, UnknownKeysAreNamed) {
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "learningrate": 0.1})")); })
                  .find("'learningrate'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "train": {"lr": 0.1}})")); })
                  .find("'train.lr'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "train": {"adam": {"b1": 0.1}}})")); })
                  .find("'train.adam.b1'"),
              std::string::npos);
}

TEST(Config, RequiredAndTypedFields) {
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss"})")); }).find("'seed'"), std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"seed": 1})")); }).find("'experiment'"), std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": -1})")); }).find("'seed'"), std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "train": {"epochs": "ten"}})")); })
                  .find("'train.epochs'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "cube", "seed": 1})")); }).find("'experiment'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "train": {"loss": "hinge"}})")); })
                  .find("'train.loss'"),
              std::string::npos);
}

TEST(Config, CrossFieldValidationNamesTheField) {
    EXPECT_NE(message_of([] {
                  parse_config(Json::parse(R"({"experiment": "quad", "seed": 1, "objective": "supervised", "train": {"loss": "softmax_triplet"}})"));
              }).find("'train.loss'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "objective": "simclr"})")); })
                  .find("'objective'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "draw", "seed": 1, "net": {"input_size": 64}})")); })
                  .find("'net.input_size'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "gauss", "seed": 1, "train": {"learning_rate": 0}})")); })
                  .find("'train.learning_rate'"),
              std::string::npos);
    EXPECT_NE(message_of([] { parse_config(Json::parse(R"({"experiment": "draw", "seed": 1, "augment": {"flip_prob": 2}})")); })
                  .find("'augment'"),
              std::string::npos);
}

TEST(Config, ParseErrorsCarryLineNumbers) {
    const fs::path dir = scratch("parse");
    const fs::path p = write_config(dir, "bad.json", "{\n  \"experiment\": \"gauss\",\n  \"seed\": 1,,\n}\n");
    const std::string msg = message_of([&] { load_config(p); });
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(message_of([&] { load_config(dir / "missing.json"); }).find("missing.json"), std::string::npos);
}

TEST(Config, HashIgnoresOutputDirAndTracksEverythingElse) {
    ExperimentConfig a = small_gauss(), b = small_gauss();
    b.output_dir = "/somewhere/else";
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_NE(config_hash(a), config_hash(small_gauss(6)));
    b.train.learning_rate *= 2;
    EXPECT_NE(config_hash(a), config_hash(b));
    // The resolved form parses back to the same config.
    EXPECT_EQ(config_hash(parse_config(config_to_json(a))), config_hash(a));
    EXPECT_EQ(config_hash(parse_config(config_to_json(small_draw()))), config_hash(small_draw()));
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, NineSignificantDigits) {
    EXPECT_EQ(round_sig9(0.1 + 0.2), 0.3);
    EXPECT_EQ(round_sig9(1.0 / 3.0), 0.333333333);
    EXPECT_EQ(round_sig9(-123456789012.0), -123456789000.0);
    EXPECT_EQ(dump_canonical(Json{{"b", 2.0 / 3.0}, {"a", 1}}), "{\n  \"a\": 1,\n  \"b\": 0.666666667\n}\n");
    EXPECT_THROW(round_sig9(std::nan("")), NumericFailure);
    EXPECT_THROW(dump_canonical(Json{{"x", {1.0, std::numeric_limits<double>::infinity()}}}), NumericFailure);
}

TEST(Report, ReserializingALoadedReportIsByteIdentical) {
    const fs::path dir = scratch("reserialize");
    Rng rng = make_rng(1, "report");
    Json j;
    for (int i = 0; i < 50; ++i) j["k" + std::to_string(i)] = {normal(rng) * std::pow(10.0, i % 20 - 10), i, "s", i % 2 == 0};
    write_json(dir / "r.json", j);
    const std::string first = read_text(dir / "r.json");
    write_json(dir / "r2.json", read_json(dir / "r.json"));
    EXPECT_EQ(read_text(dir / "r2.json"), first);
}

TEST(Report, EmptyResultsGiveValidFiles) {
    const fs::path dir = scratch("empty");
    write_json(dir / "e.json", Json::object());
    EXPECT_EQ(read_json(dir / "e.json"), Json::object());
    write_csv(dir / "e.csv", CsvTable{{"a", "b"}, {}});
    EXPECT_EQ(read_text(dir / "e.csv"), "a,b\n");
    CsvTable t{{"a"}, {}};
    EXPECT_THROW(t.add({"1", "2"}), std::invalid_argument);
}

TEST(Report, IoErrorsNameThePath) {
    const fs::path dir = scratch("ioerr");
    write_text(dir / "file", "x");
    try {
        write_text(dir / "file" / "sub.json", "{}");
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("file"), std::string::npos);
    }
    write_text(dir / "broken.json", "{\"a\": ");
    EXPECT_THROW(read_json(dir / "broken.json"), IoError);
}

// ---------------------------------------------------------------------------
// Datasets

TEST(Dataset, RoundTripsExactly) {
    const fs::path dir = scratch("dataset");
    Rng rng = make_rng(2, "ds");
    Dataset ds;
    ds.header["programs"] = {"(line 1)", "(turn 90)"};
    ds.arrays["a"] = Eigen::MatrixXd::NullaryExpr(3, 7, [&] { return normal(rng); });
    ds.arrays["b"] = Eigen::MatrixXd::Zero(1, 0);
    save_dataset(dir / "x.gsd", ds);
    const Dataset back = load_dataset(dir / "x.gsd");
    EXPECT_EQ(back.header, ds.header);
    ASSERT_EQ(back.arrays.size(), 2u);
    EXPECT_EQ(back.array("a"), ds.array("a"));
    EXPECT_EQ(back.array("b").cols(), 0);
    EXPECT_THROW(back.array("c"), IoError);
}

TEST(Dataset, RejectsCorruptFiles) {
    const fs::path dir = scratch("corrupt");
    Dataset ds;
    ds.arrays["a"] = Eigen::MatrixXd::Ones(4, 4);
    save_dataset(dir / "x.gsd", ds);
    std::string bytes = read_text(dir / "x.gsd");
    write_text(dir / "short.gsd", bytes.substr(0, bytes.size() - 8));
    EXPECT_THROW(load_dataset(dir / "short.gsd"), IoError);
    write_text(dir / "long.gsd", bytes + "x");
    EXPECT_THROW(load_dataset(dir / "long.gsd"), IoError);
    bytes[0] = 'X';
    write_text(dir / "magic.gsd", bytes);
    EXPECT_THROW(load_dataset(dir / "magic.gsd"), IoError);
}

TEST(Dataset, CacheReusesMatchingGeneratorOnly) {
    const fs::path dir = scratch("cache");
    int calls = 0;
    auto gen = [&] {
        ++calls;
        Dataset d;
        d.arrays["v"] = Eigen::MatrixXd::Constant(1, 1, calls);
        return d;
    };
    bool reused = true;
    const Dataset a = cached_dataset(dir, Json{{"seed", 1}}, gen, &reused);
    EXPECT_FALSE(reused);
    const Dataset b = cached_dataset(dir, Json{{"seed", 1}}, gen, &reused);
    EXPECT_TRUE(reused);
    EXPECT_EQ(b.array("v")(0, 0), 1.0);
    cached_dataset(dir, Json{{"seed", 2}}, gen, &reused);
    EXPECT_FALSE(reused);
    EXPECT_EQ(calls, 2);
}

TEST(Dataset, CacheDirFollowsEnvironment) {
    ::unsetenv("GENSIM_CACHE_DIR");
    EXPECT_EQ(dataset_cache_dir("/fallback"), fs::path("/fallback"));
    ::setenv("GENSIM_CACHE_DIR", "/tmp/gensim-cache-test", 1);
    EXPECT_EQ(dataset_cache_dir("/fallback"), fs::path("/tmp/gensim-cache-test"));
    ::unsetenv("GENSIM_CACHE_DIR");
}

TEST(Dataset, DrawingsSurviveTheProgramRoundTrip) {
    const ExperimentConfig c = small_draw();
    const Prepared p = prepare(c, generate_dataset(c));
    ASSERT_EQ(p.train_rasters.size(), 80u);
    ASSERT_EQ(p.test_labels.size(), 60u);
    // Rendering straight from the sampler matches rendering the stored text.
    for (int s = 0; s < 2; ++s)
        for (int i : {0, 17, 39}) {
            Rng rng = make_rng(c.seed, "draw-train", static_cast<std::uint64_t>(s) * 1000000 + static_cast<std::uint64_t>(i));
            const draw::Program prog = draw::sample_drawable_program(draw::builtin_grammar(static_cast<draw::Style>(s)), rng);
            const Raster direct = draw::rasterize_path(draw::interpret(prog), c.data.raster_size);
            const Raster& stored = p.train_rasters[static_cast<std::size_t>(s * 40 + i)];
            EXPECT_TRUE(std::equal(direct.pixels().begin(), direct.pixels().end(), stored.pixels().begin()));
            EXPECT_EQ(p.train_labels[static_cast<std::size_t>(s * 40 + i)], s);
        }
}

TEST(Dataset, QuadTrialShapesAreNotTrainingShapes) {
    ExperimentConfig c = small_quad("gensim");
    const Prepared p = prepare(c, generate_dataset(c));
    ASSERT_EQ(p.train_quads.size(), 330u);
    for (std::size_t i = 0; i < p.train_quads.size(); ++i)
        EXPECT_EQ(quad::kAllCategories[static_cast<std::size_t>(p.train_labels[i])], quad::kAllCategories[i / 30]);
    // Similarity-invariant shape signature: sorted pairwise vertex distances over the largest.
    auto signature = [](const quad::Quadrilateral& q) {
        std::array<double, 6> s;
        for (std::size_t k = 0; k < quad::kPairs.size(); ++k) s[k] = quad::length(q[quad::kPairs[k][0]] - q[quad::kPairs[k][1]]);
        std::sort(s.begin(), s.end());
        for (double& x : s) x /= s.back();
        return s;
    };
    for (const auto& t : quad_trials(c)) {
        if (t.category == quad::QuadCategory::square) continue;  // all squares share one shape
        for (const auto& item : t.items)
            for (const auto& q : p.train_quads) {
                const auto a = signature(item), b = signature(q);
                double d = 0;
                for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::fabs(a[j] - b[j]));
                EXPECT_GT(d, 1e-9);
            }
    }
}

TEST(Dataset, ClassTripletsRespectLabels) {
    std::vector<int> labels;
    for (int i = 0; i < 300; ++i) labels.push_back(i % 3);
    const auto ts = class_triplets(labels, 3, 9);
    ASSERT_EQ(ts.size(), labels.size());
    int neg_same = 0;
    for (const auto& t : ts) {
        EXPECT_EQ(labels[static_cast<std::size_t>(t[0])], labels[static_cast<std::size_t>(t[1])]);
        neg_same += labels[static_cast<std::size_t>(t[0])] == labels[static_cast<std::size_t>(t[2])];
    }
    // Negatives ignore the anchor's class: about a third share it.
    EXPECT_GT(neg_same, 60);
    EXPECT_LT(neg_same, 140);
}

// ---------------------------------------------------------------------------
// Pipeline

TEST(Pipeline, GaussRunWritesArtifactsAndSeparates) {
    const fs::path dir = scratch("gauss");
    const Json m = run_experiment(small_gauss(), dir);
    for (const char* f : {"manifest.json", "metrics.json", "epoch_log.csv", "model.ckpt", "gensim_vs_distance.csv",
                          "checkpoints/net_epoch004.ckpt"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(m["binned"]["bins"], 50);
    EXPECT_LE(m["binned"]["spearman_rho"].get<double>(), -0.9);
    EXPECT_TRUE(m["separation"]["separated"].get<bool>());
    EXPECT_GE(m["threshold_accuracy"].get<double>(), 0.95);
    // 50 bins plus header.
    const std::string csv = read_text(dir / "gensim_vs_distance.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);

    const Json manifest = read_json(dir / "manifest.json");
    EXPECT_EQ(manifest["code_version"], kCodeVersion);
    EXPECT_FALSE(manifest["partial"].get<bool>());
    EXPECT_EQ(manifest["stages"]["train"], "done");
    // Metrics name the config they came from; recompute the hash from the manifest.
    EXPECT_EQ(read_json(dir / "metrics.json")["config_hash"], manifest["config_hash"]);
    EXPECT_EQ(json_hash(manifest["config"]), manifest["config_hash"].get<std::string>());
}

TEST(Pipeline, RerunIsByteIdenticalAndReusesData) {
    const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
    run_experiment(small_gauss(), a);
    run_experiment(small_gauss(), b);
    EXPECT_EQ(read_text(a / "metrics.json"), read_text(b / "metrics.json"));
    EXPECT_EQ(read_text(a / "gensim_vs_distance.csv"), read_text(b / "gensim_vs_distance.csv"));
    EXPECT_EQ(read_text(a / "model.ckpt"), read_text(b / "model.ckpt"));
    const std::string before = read_text(a / "metrics.json");
    run_experiment(small_gauss(), a);
    EXPECT_EQ(read_text(a / "metrics.json"), before);
    EXPECT_EQ(std::distance(fs::directory_iterator(a / "data"), fs::directory_iterator()), 1);
}

TEST(Pipeline, StagesCanRunSeparately) {
    const fs::path dir = scratch("stages");
    const fs::path whole = scratch("stages_whole");
    Experiment e1(small_gauss(), dir);
    e1.gen_data();
    Experiment e2(small_gauss(), dir);
    e2.train();
    Experiment e3(small_gauss(), dir);
    e3.eval();
    run_experiment(small_gauss(), whole);
    EXPECT_EQ(read_text(dir / "metrics.json"), read_text(whole / "metrics.json"));
    const Json manifest = read_json(dir / "manifest.json");
    for (const char* s : {"gen-data", "train", "eval"}) EXPECT_EQ(manifest["stages"][s], "done") << s;
}

TEST(Pipeline, FailedStageIsFlagged) {
    const fs::path dir = scratch("failed");
    Experiment e(small_gauss(), dir);
    try {
        e.eval();
        FAIL();
    } catch (const IoError& err) {
        EXPECT_NE(std::string(err.what()).find("stage 'eval'"), std::string::npos);
    }
    const Json manifest = read_json(dir / "manifest.json");
    EXPECT_TRUE(manifest["partial"].get<bool>());
    EXPECT_EQ(manifest["failed_stage"], "eval");

    ExperimentConfig hot = small_gauss();
    hot.train.learning_rate = 1e300;
    hot.train.optimizer = OptimizerKind::sgd;
    Experiment h(hot, scratch("failed_numeric"));
    EXPECT_THROW(h.run(), NumericFailure);
    EXPECT_EQ(h.manifest()["failed_stage"], "train");
}

TEST(Pipeline, QuadObjectivesRunOnSharedData) {
    const fs::path root = scratch("quad");
    ::setenv("GENSIM_CACHE_DIR", (root / "cache").c_str(), 1);
    for (const char* o : {"gensim", "supervised", "simclr"}) {
        const Json m = run_experiment(small_quad(o), root / o);
        EXPECT_EQ(m["oddball"]["trials"], 66);
        EXPECT_EQ(m["oddball"]["error_rate"].size(), 11u);
        const std::string csv = read_text(root / o / "oddball_errors.csv");
        EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
    }
    ::unsetenv("GENSIM_CACHE_DIR");
    // One dataset serves all three objectives.
    EXPECT_EQ(std::distance(fs::directory_iterator(root / "cache"), fs::directory_iterator()), 1);
    EXPECT_TRUE(fs::exists(root / "supervised" / "head.ckpt"));
    EXPECT_FALSE(fs::exists(root / "gensim" / "head.ckpt"));
}

TEST(Pipeline, DrawRunReportsProbesAndPca) {
    const fs::path dir = scratch("draw");
    Experiment e(small_draw(), dir);
    const Json m = e.run();
    EXPECT_EQ(m["probes"]["style"]["metric"], "accuracy");
    EXPECT_EQ(m["probes"]["primitive_count"]["metric"], "r_squared");
    EXPECT_EQ(m["probes"]["style"]["folds"].size(), 5u);
    const std::string csv = read_text(dir / "pca.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 61);
    const Json p = e.probe();
    EXPECT_EQ(p["style"], m["probes"]["style"]);
    EXPECT_TRUE(fs::exists(dir / "probe.json"));
}

// ---------------------------------------------------------------------------
// Gradient suite

TEST(GradCheck, EveryLossAndArchitecturePasses) {
    const auto rows = gradient_suite(1);
    EXPECT_EQ(rows.size(), 18u);
    for (const auto& r : rows) EXPECT_TRUE(r.ok()) << r.loss << " " << r.level << " " << r.max_rel_err;
}

TEST(GradCheck, CatchesAWrongGradient) {
    Rng rng = make_rng(2, "bad-grad");
    const OutputLoss wrong = [](const MatrixXd& out, MatrixXd* grad) {
        if (grad) *grad = 3.0 * out;  // true gradient is 2 * out
        return out.squaredNorm();
    };
    EXPECT_GT(detail::loss_level_error(wrong, MatrixXd::NullaryExpr(3, 4, [&] { return normal(rng); }), 1e-5), 0.1);
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    const fs::path good = write_config(dir, "g.json", config_to_json(small_gauss()).dump());
    const fs::path unknown = write_config(dir, "u.json", R"({"experiment": "gauss", "seed": 1, "learningrate": 3})");
    const fs::path hot = write_config(dir, "h.json",
                                      R"({"experiment": "gauss", "seed": 1, "data": {"triplets": 100},
                                          "train": {"optimizer": "sgd", "learning_rate": 1e300, "epochs": 2}})");
    std::string out, err;
    EXPECT_EQ(cli({"run", "--config", good.string(), "--out", (dir / "ok").string()}, &out), kExitOk);
    EXPECT_NE(out.find("run: ok"), std::string::npos);
    EXPECT_EQ(cli({"run", "--config", unknown.string(), "--out", (dir / "u").string()}, nullptr, &err), kExitConfig);
    EXPECT_NE(err.find("learningrate"), std::string::npos);
    EXPECT_EQ(cli({"run", "--config", (dir / "none.json").string(), "--out", (dir / "n").string()}), kExitConfig);
    EXPECT_EQ(cli({"run", "--config", good.string()}, nullptr, &err), kExitConfig);
    EXPECT_NE(err.find("output_dir"), std::string::npos);
    EXPECT_EQ(cli({"eval", "--config", good.string(), "--out", (dir / "empty").string()}), kExitIo);
    EXPECT_EQ(cli({"run", "--config", hot.string(), "--out", (dir / "hot").string()}, nullptr, &err), kExitNumeric);
    EXPECT_NE(err.find("stage 'train'"), std::string::npos);
    EXPECT_EQ(cli({"frobnicate"}), kExitConfig);
    EXPECT_EQ(cli({"run", "--config", good.string(), "--seed", "x"}), kExitConfig);
}

TEST(Cli, SeedAndFlagsOverrideTheConfig) {
    const fs::path dir = scratch("cli_flags");
    const fs::path good = write_config(dir, "g.json", config_to_json(small_gauss()).dump());
    ASSERT_EQ(cli({"gen-data", "--config", good.string(), "--out", (dir / "a").string(), "--seed", "77"}), kExitOk);
    const Json manifest = read_json(dir / "a" / "manifest.json");
    EXPECT_EQ(manifest["config"]["seed"], 77);
    ExperimentConfig c77 = small_gauss(77);
    EXPECT_EQ(manifest["config_hash"], config_hash(c77));

    CliOptions o;
    o.config_path = write_config(dir, "d.json", R"({"experiment": "draw", "seed": 1, "output_dir": "x"})").string();
    o.paper_scale = true;
    EXPECT_EQ(resolve_config(o, nullptr).data.train_per_grammar, 20000);
    o.config_path = write_config(dir, "q.json", R"({"experiment": "quad", "seed": 1, "net": {"kind": "conv", "filters": 4}})").string();
    o.paper_scale = false;
    o.vector_input = true;
    o.out = (dir / "q").string();
    std::filesystem::path out;
    const ExperimentConfig q = resolve_config(o, &out);
    EXPECT_TRUE(q.data.vector_input);
    EXPECT_EQ(q.net.kind, NetKind::mlp);
    EXPECT_EQ(out, dir / "q");
}

TEST(Cli, StagewiseCommandsMatchRun) {
    const fs::path dir = scratch("cli_stages");
    const fs::path good = write_config(dir, "g.json", config_to_json(small_gauss()).dump());
    for (const char* cmd : {"gen-data", "train", "eval", "probe"})
        ASSERT_EQ(cli({cmd, "--config", good.string(), "--out", (dir / "s").string()}), kExitOk) << cmd;
    ASSERT_EQ(cli({"run", "--config", good.string(), "--out", (dir / "r").string()}), kExitOk);
    EXPECT_EQ(read_text(dir / "s" / "metrics.json"), read_text(dir / "r" / "metrics.json"));
    EXPECT_TRUE(read_json(dir / "s" / "probe.json").contains("component"));
}

TEST(Cli, GradcheckPrintsOneRowPerCase) {
    std::string out;
    EXPECT_EQ(cli({"gradcheck", "--seed", "3"}, &out), kExitOk);
    EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 19);
    EXPECT_EQ(out.find("NO"), std::string::npos);
}
