// Acceptance checks: one PASS/FAIL line per criterion.
//
// The default (fast) mode runs criteria 1-5 and 8-10. --long also runs the
// quad and draw seed sweeps (6, 7); each run is kept under --work and reused
// when its config hash matches, so an interrupted sweep resumes.

#include <malloc.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "gensim/experiment.hpp"
#include "gensim/gradcheck.hpp"

#ifndef GENSIM_CLI_PATH
#define GENSIM_CLI_PATH "gensim"
#endif

namespace fs = std::filesystem;
using namespace gensim;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
    Status status = Status::fail;
    std::string detail;
};

struct Options {
    fs::path work = "acceptance_work";
    int seeds = 10;
    bool long_mode = false;
    std::string cli = GENSIM_CLI_PATH;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 3) {
    std::ostringstream s;
    s.precision(prec);
    s << x;
    return s.str();
}

struct RunRecord {
    Json metrics;
    double seconds = 0;
    bool reused = false;
};

// Runs (or reuses) one experiment; wall time goes to timing.json next to the metrics.
RunRecord run_cached(const Json& cfg_json, const fs::path& dir) {
    const ExperimentConfig cfg = parse_config(cfg_json);
    const std::string hash = config_hash(cfg);
    const fs::path metrics = dir / "metrics.json", timing = dir / "timing.json";
    if (fs::exists(metrics) && fs::exists(timing)) {
        Json m = read_json(metrics), t = read_json(timing);
        if (m.value("config_hash", "") == hash && t.value("config_hash", "") == hash)
            return {m, t.at("seconds").get<double>(), true};
    }
    const auto t0 = std::chrono::steady_clock::now();
    Json m = run_experiment(cfg, dir);
    const double s = seconds_since(t0);
    write_json(timing, {{"config_hash", hash}, {"seconds", s}});
    return {m, s, false};
}

bool separated(const Json& m) { return m.at("separation").at("separated").get<bool>(); }

std::string separation_text(const Json& m) {
    const Json& s = m.at("separation");
    return fmt(s.at("mean_same").get<double>()) + " vs " + fmt(s.at("mean_diff").get<double>());
}

// ---------------------------------------------------------------------------

Outcome c1_closed_form_vs_mc() {
    const auto mix = GaussianMixture::standard_2d();
    const auto process = as_process(mix);
    Rng rng = make_rng(1, "acceptance-mc");
    int within = 0;
    for (int i = 0; i < 100; ++i) {
        const Vec x1 = mix.sample(rng), x2 = mix.sample(rng);
        const SimilarityValue mc = mc_log_gen_sim(process, x1, x2, 100000, rng);
        within += std::fabs(mc.log_odds - closed_form_log_gen_sim(mix, x1, x2)) <= 3 * mc.std_error.value();
    }
    return {within >= 97 ? Status::pass : Status::fail, std::to_string(within) + "/100 pairs within 3 SE"};
}

Outcome c2_gauss_experiment(const Options& o) {
    const RunRecord r = run_cached({{"experiment", "gauss"}, {"seed", 1}}, o.work / "gauss" / "gensim");
    const Json& m = r.metrics;
    const double acc = m.at("threshold_accuracy").get<double>();
    const double rho = m.at("binned").at("spearman_rho").get<double>();
    const int bins = m.at("binned").at("bins").get<int>();
    const bool ok = acc >= 0.95 && rho <= -0.9 && bins == 100 && separated(m) && r.seconds < 600;
    return {ok ? Status::pass : Status::fail, "accuracy " + fmt(acc, 4) + ", rho " + fmt(rho, 4) + " over " +
                                                  std::to_string(bins) + " bins, distances " + separation_text(m) +
                                                  ", " + fmt(r.seconds) + " s"};
}

Outcome c3_linear_projection() {
    const auto mix = GaussianMixture::standard_2d();
    const Vec target = optimal_projection(mix.means()[0], mix.means()[1]);
    int hits = 0;
    double worst = 1;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        Rng rng = make_rng(s, "acceptance-projection");
        const double c = std::fabs(dot(fit_linear_projection(mix, rng), target));
        worst = std::min(worst, c);
        hits += c >= 0.99;
    }
    return {hits == 10 ? Status::pass : Status::fail, std::to_string(hits) + "/10 seeds, min |cos| " + fmt(worst, 6)};
}

// Beta integral of x^(a-1) (1-x)^(b-1) by double-exponential quadrature.
double beta_quadrature(double a, double b) {
    static boost::math::quadrature::tanh_sinh<double> q;
    return q.integrate([&](double x, double xc) {
        // Above the midpoint xc = 1 - x, exact where 1 - x would cancel.
        return std::pow(x, a - 1) * std::pow(x <= 0.5 ? 1 - x : xc, b - 1);
    }, 0.0, 1.0);
}

double quadrature_log_gen_sim(const std::vector<int>& f1, const std::vector<int>& f2, double a, double b) {
    const double i0 = beta_quadrature(a, b);
    double s = 0;
    for (std::size_t i = 0; i < f1.size(); ++i) {
        const int x = f1[i], y = f2[i];
        s += std::log(beta_quadrature(a + x + y, b + 2 - x - y) * i0 /
                      (beta_quadrature(a + x, b + 1 - x) * beta_quadrature(a + y, b + 1 - y)));
    }
    return s;
}

Outcome c4_beta_bernoulli() {
    Rng rng = make_rng(1, "acceptance-beta");
    auto bits = [&] {
        std::vector<int> v(quad::kNumFeatures);
        for (int& x : v) x = static_cast<int>(uniform_index(rng, 2));
        return v;
    };
    double worst_quad = 0, worst_limit = 0;
    for (int i = 0; i < 20; ++i) {
        const auto f1 = bits(), f2 = bits();
        const double a = uniform(rng, 0.3, 5.0), b = uniform(rng, 0.3, 5.0);
        const double want = quadrature_log_gen_sim(f1, f2, a, b);
        worst_quad = std::max(worst_quad, std::fabs(quad::shape_log_gen_sim_general(f1, f2, {a, b}) - want) / std::fabs(want));
        const double lim = quad::shape_log_gen_sim_limit(f1, f2, 1e-6);
        const double gen = quad::shape_log_gen_sim_general(f1, f2, {1e-6, 1e-6});
        worst_limit = std::max(worst_limit, std::fabs(gen - lim) / std::fabs(gen));
    }
    const bool ok = worst_quad <= 1e-6 && worst_limit <= 1e-3;
    return {ok ? Status::pass : Status::fail,
            "max rel err vs quadrature " + fmt(worst_quad) + ", limit gap at beta=1e-6 " + fmt(worst_limit)};
}

Outcome c5_regularity_table() {
    using namespace quad;
    // rightAngles, parallels, symmetry, equalSides, equalAngles, entered independently of quad.hpp.
    const int reference[kNumCategories][5] = {
        {4, 2, 4, 4, 4}, {4, 2, 2, 2, 4}, {0, 0, 2, 4, 2}, {0, 2, 1, 2, 2}, {2, 0, 1, 2, 2}, {0, 0, 1, 2, 2},
        {0, 1, 1, 1, 2}, {1, 0, 0, 1, 0}, {0, 0, 0, 1, 0}, {0, 1, 0, 0, 0}, {0, 0, 0, 0, 0}};
    // Pair counts from the geometry of each shape: equal sides, equal angles,
    // parallel sides, right angles.
    const int geometry[kNumCategories][4] = {
        {6, 6, 2, 4}, {2, 6, 2, 4}, {6, 2, 2, 0}, {2, 2, 2, 0}, {2, 1, 0, 2}, {2, 1, 0, 0},
        {1, 2, 1, 0}, {1, 0, 0, 1}, {1, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 0}};
    int integers = 0, patterns = 0;
    std::set<GeometricFeatureVector> distinct;
    for (QuadCategory c : kAllCategories) {
        const auto i = static_cast<std::size_t>(index_of(c));
        const RegularityRow& row = regularity_row(c);
        const int got[5] = {row.right_angles, row.parallels, row.symmetry, row.equal_sides, row.equal_angles};
        for (int k = 0; k < 5; ++k) integers += got[k] == reference[i][k];

        const GeometricFeatureVector p = category_pattern(c);
        bool ok = p.equal_sides() == geometry[i][0] && p.equal_angles() == geometry[i][1] &&
                  p.parallel_pairs() == geometry[i][2] && p.right_angles() == geometry[i][3] &&
                  p.right_angles() == reference[i][0];
        Rng rng = make_rng(1, "acceptance-exemplars", i);
        for (int n = 0; n < 100 && ok; ++n) ok = canonical_bits(extract_features(generate_exemplar(c, rng))) == p;
        patterns += ok;
        distinct.insert(p);
    }
    const bool ok = integers == 55 && patterns == 11 && distinct.size() == 11;
    return {ok ? Status::pass : Status::fail, std::to_string(integers) + "/55 table entries, " + std::to_string(patterns) +
                                                  "/11 exemplar patterns, " + std::to_string(distinct.size()) +
                                                  " distinct"};
}

Json quad_config(const std::string& objective, int seed) {
    return {{"experiment", "quad"}, {"objective", objective}, {"seed", seed}};
}

Json draw_config(const std::string& objective, int seed) {
    return {{"experiment", "draw"},
            {"objective", objective},
            {"seed", seed},
            {"data", {{"raster_size", 64}}},
            {"net", {{"kind", "conv"}, {"input_size", 64}, {"blocks", 4}, {"filters", 16}, {"embed_dim", 256}}}};
}

Outcome c6_regularity_effect(const Options& o) {
    const std::vector<std::string> objectives = {"gensim", "supervised", "simclr"};
    std::map<std::string, std::vector<double>> rho;
    std::map<std::string, double> seconds;
    std::vector<double> pooled(quad::kNumCategories, 0.0);
    for (const auto& obj : objectives)
        for (int s = 1; s <= o.seeds; ++s) {
            const RunRecord r = run_cached(quad_config(obj, s), o.work / "quad" / obj / ("seed" + std::to_string(s)));
            rho[obj].push_back(r.metrics.at("regularity").at("spearman_rho_rank").get<double>());
            seconds[obj] += r.seconds;
            std::cout << "    quad " << obj << " seed " << s << ": rho " << fmt(rho[obj].back()) << " ("
                      << fmt(r.seconds) << " s" << (r.reused ? ", reused" : "") << ")\n"
                      << std::flush;
            if (obj == "gensim")
                for (quad::QuadCategory c : quad::kAllCategories)
                    pooled[static_cast<std::size_t>(quad::index_of(c))] +=
                        r.metrics.at("oddball").at("error_rate").at(std::string(quad::name_of(c))).get<double>() / o.seeds;
        }
    std::vector<double> rank;
    for (quad::QuadCategory c : quad::kAllCategories) rank.push_back(quad::regularity_rank(c));
    const Correlation g = spearman_rho(rank, pooled);
    int sup_lower = 0, sim_lower = 0, g_single = 0;
    for (int k = 0; k < o.seeds; ++k) {
        sup_lower += rho["supervised"][static_cast<std::size_t>(k)] < rho["gensim"][static_cast<std::size_t>(k)];
        sim_lower += rho["simclr"][static_cast<std::size_t>(k)] < rho["gensim"][static_cast<std::size_t>(k)];
        g_single += rho["gensim"][static_cast<std::size_t>(k)] >= 0.5;
    }
    const int need = (8 * o.seeds + 9) / 10;
    double slowest = 0;
    for (const auto& [obj, s] : seconds) slowest = std::max(slowest, s);
    const bool ok = g.rho >= 0.5 && g.p_value <= 0.05 && sup_lower >= need && sim_lower >= need && slowest < 3600;
    std::string d = "gensim pooled rho " + fmt(g.rho) + " p " + fmt(g.p_value) + " (" + std::to_string(g_single) + "/" +
                    std::to_string(o.seeds) + " seeds >= 0.5 alone); lower than gensim: supervised " +
                    std::to_string(sup_lower) + "/" + std::to_string(o.seeds) + ", simclr " + std::to_string(sim_lower) +
                    "/" + std::to_string(o.seeds) + "; 10-seed set minutes:";
    for (const auto& obj : objectives) d += " " + obj + " " + fmt(seconds[obj] / 60 * 10 / o.seeds);
    return {ok ? Status::pass : Status::fail, d};
}

Outcome c7_drawing(const Options& o) {
    int wins = 0;
    double slowest = 0;
    std::string per_seed;
    for (int s = 1; s <= o.seeds; ++s) {
        const RunRecord g = run_cached(draw_config("gensim", s), o.work / "draw" / "gensim" / ("seed" + std::to_string(s)));
        const RunRecord b = run_cached(draw_config("simclr", s), o.work / "draw" / "simclr" / ("seed" + std::to_string(s)));
        auto score = [](const Json& m, const char* probe) { return m.at("probes").at(probe).at("mean").get<double>(); };
        const double gs = score(g.metrics, "style"), bs = score(b.metrics, "style");
        const double gr = score(g.metrics, "primitive_count"), br = score(b.metrics, "primitive_count");
        const bool win = gs - bs >= 0.05 && gs > 0.6 && bs > 0.6 && gr - br >= 0.1;
        wins += win;
        slowest = std::max(slowest, g.seconds + b.seconds);
        std::cout << "    draw seed " << s << ": style " << fmt(gs) << " vs " << fmt(bs) << ", R2 " << fmt(gr) << " vs "
                  << fmt(br) << (win ? " (win)" : "") << ", pair " << fmt((g.seconds + b.seconds) / 60) << " min\n"
                  << std::flush;
    }
    const int need = (8 * o.seeds + 9) / 10;
    const bool ok = wins >= need && slowest < 3600;
    return {ok ? Status::pass : Status::fail, std::to_string(wins) + "/" + std::to_string(o.seeds) +
                                                  " seeds meet every margin; slowest seed pair " + fmt(slowest / 60) +
                                                  " min"};
}

Outcome c8_separation(const Options& o) {
    const Json gauss = {{"experiment", "gauss"}, {"seed", 2}, {"train", {{"loss", "softmax_triplet"}}}};
    const Json small_net = {{"kind", "conv"}, {"input_size", 32}, {"blocks", 3}, {"filters", 8}, {"embed_dim", 32}};
    const Json quad = {{"experiment", "quad"},
                       {"seed", 2},
                       {"data", {{"raster_size", 32}, {"per_category", 200}, {"trials_per_category", 20}}},
                       {"net", small_net},
                       {"train", {{"loss", "softmax_triplet"}, {"epochs", 5}, {"learning_rate", 1e-3}}}};
    const Json draw = {{"experiment", "draw"},
                       {"seed", 2},
                       {"data", {{"raster_size", 32}, {"train_per_grammar", 300}, {"test_per_grammar", 100}}},
                       {"net", small_net},
                       {"train", {{"loss", "softmax_triplet"}, {"epochs", 5}, {"batch_size", 32}}}};
    std::string d;
    bool ok = true;
    for (const auto& [name, cfg] : std::vector<std::pair<std::string, Json>>{{"gauss", gauss}, {"quad", quad}, {"draw", draw}}) {
        const RunRecord r = run_cached(cfg, o.work / "softmax" / name);
        ok = ok && separated(r.metrics);
        d += (d.empty() ? "" : "; ") + name + " " + separation_text(r.metrics) + (separated(r.metrics) ? "" : " (overlap)");
    }
    return {ok ? Status::pass : Status::fail, "same vs diff distance: " + d};
}

Outcome c9_gradients() {
    double worst_loss = 0, worst_net = 0;
    int bad = 0;
    const auto rows = gradient_suite(1);
    for (const GradCheckRow& r : rows) {
        (r.level == "loss" ? worst_loss : worst_net) = std::max(r.level == "loss" ? worst_loss : worst_net, r.max_rel_err);
        bad += !r.ok();
    }
    return {bad == 0 ? Status::pass : Status::fail, std::to_string(rows.size() - static_cast<std::size_t>(bad)) + "/" +
                                                        std::to_string(rows.size()) + " checks, worst loss-level " +
                                                        fmt(worst_loss) + ", worst network " + fmt(worst_net)};
}

Outcome c10_determinism(const Options& o) {
    const fs::path root = o.work / "determinism";
    const std::vector<std::pair<std::string, Json>> configs = {
        {"gauss", {{"experiment", "gauss"}, {"seed", 3}}},
        {"quad", {{"experiment", "quad"},
                  {"seed", 3},
                  {"data", {{"raster_size", 32}, {"per_category", 40}, {"trials_per_category", 10}}},
                  {"net", {{"kind", "conv"}, {"input_size", 32}, {"blocks", 3}, {"filters", 8}, {"embed_dim", 16}}},
                  {"train", {{"epochs", 2}}}}}};
    std::string d;
    bool ok = true;
    for (const auto& [name, cfg] : configs) {
        const fs::path cfg_path = root / (name + ".json");
        fs::create_directories(root);
        write_json(cfg_path, cfg);
        std::vector<std::string> outputs;
        for (int k = 0; k < 3; ++k) {
            const fs::path out = root / (name + "_" + std::to_string(k));
            fs::remove_all(out);
            const std::string cmd = "\"" + o.cli + "\" run --config \"" + cfg_path.string() + "\" --out \"" +
                                    out.string() + "\" > /dev/null";
            if (std::system(cmd.c_str()) != 0) {
                ok = false;
                outputs.push_back("<failed>");
                continue;
            }
            outputs.push_back(read_text(out / "metrics.json"));
        }
        const bool same = outputs[0] != "<failed>" && outputs[0] == outputs[1] && outputs[1] == outputs[2];
        ok = ok && same;
        d += (d.empty() ? "" : ", ") + name + (same ? " identical" : " differs");
    }
    return {ok ? Status::pass : Status::fail, "3 invocations each: " + d};
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    CLI::App app{"Acceptance checks"};
    Options o;
    std::string work = o.work.string();
    app.add_option("--work", work, "directory for experiment runs (reused across invocations)");
    app.add_option("--seeds", o.seeds, "seeds per sweep in the long criteria")->check(CLI::PositiveNumber);
    app.add_flag("--long", o.long_mode, "also run the quad and draw seed sweeps");
    app.add_option("--cli", o.cli, "path to the gensim binary");
    CLI11_PARSE(app, argc, argv);
    o.work = work;

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gaussian closed form vs Monte Carlo", c1_closed_form_vs_mc},
        {"gaussian experiment", [&] { return c2_gauss_experiment(o); }},
        {"linear projection recovery", c3_linear_projection},
        {"beta-bernoulli kernel", c4_beta_bernoulli},
        {"regularity table and exemplar patterns", c5_regularity_table},
        {"quad regularity effect", [&] { return o.long_mode ? c6_regularity_effect(o) : Outcome{Status::skip, "needs --long"}; }},
        {"drawing probes, gensim vs simclr", [&] { return o.long_mode ? c7_drawing(o) : Outcome{Status::skip, "needs --long"}; }},
        {"separation after softmax training", [&] { return c8_separation(o); }},
        {"gradient suite", c9_gradients},
        {"determinism of repeated runs", [&] { return c10_determinism(o); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {Status::fail, std::string("error: ") + e.what()};
        }
        const char* tag = r.status == Status::pass ? "PASS" : r.status == Status::skip ? "SKIP" : "FAIL";
        failed += r.status == Status::fail;
        std::cout << '[' << tag << "] " << (i + 1) << ". " << criteria[i].first << ": " << r.detail << " ["
                  << fmt(seconds_since(t0), 3) << " s]\n"
                  << std::flush;
    }
    return failed == 0 ? 0 : 1;
}
