#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "gensim/draw.hpp"
#include "gensim/stats.hpp"

using namespace gensim;
using namespace gensim::draw;

namespace {

Program square_program() {
    return Program::repeat(4, Program::concat(Program::line(1), Program::turn(90)));
}

// Tree size by explicit stack walk.
std::size_t oracle_tree_size(const Program& root) {
    std::size_t n = 0;
    std::vector<const Program*> stack{&root};
    while (!stack.empty()) {
        const Program* p = stack.back();
        stack.pop_back();
        ++n;
        for (const Program& c : p->children) stack.push_back(&c);
    }
    return n;
}

Raster rotate90(const Raster& r) {
    const int n = r.size();
    Raster out(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out.at(j, n - 1 - i) = r.at(i, j);
    return out;
}

}  // namespace

TEST(Grammar, GreekHasNoArcs) {
    const Grammar g = builtin_grammar(Style::greek);
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const Program p = sample_program(g, rng);
        ASSERT_EQ(count_kind(p, NodeKind::arc), 0);
        std::function<void(const Program&)> check = [&](const Program& q) {
            if (q.kind == NodeKind::turn) {
                EXPECT_EQ(std::fmod(std::fabs(q.a), 90.0), 0.0);
            }
            for (const Program& c : q.children) check(c);
        };
        check(p);
    }
}

TEST(Grammar, CelticMostlyHasArcs) {
    const Grammar g = builtin_grammar(Style::celtic);
    Rng rng(2);
    int with_arc = 0;
    for (int i = 0; i < 1000; ++i) with_arc += count_kind(sample_program(g, rng), NodeKind::arc) > 0;
    EXPECT_GE(with_arc, 950);
}

TEST(Grammar, SharedInventory) {
    const Grammar a = builtin_grammar(Style::greek), b = builtin_grammar(Style::celtic);
    EXPECT_EQ(a.lengths.values, b.lengths.values);
    EXPECT_EQ(a.radii.values, b.radii.values);
    EXPECT_EQ(a.sweeps.values, b.sweeps.values);
    EXPECT_EQ(a.turns.values, b.turns.values);
    EXPECT_EQ(a.depth_cap, b.depth_cap);
    EXPECT_EQ(a.production.size(), b.production.size());
}

TEST(Grammar, ArcCountsSeparateStyles) {
    Rng rng(3);
    std::vector<double> greek, celtic;
    for (int i = 0; i < 1000; ++i) {
        greek.push_back(count_kind(sample_program(builtin_grammar(Style::greek), rng), NodeKind::arc));
        celtic.push_back(count_kind(sample_program(builtin_grammar(Style::celtic), rng), NodeKind::arc));
    }
    EXPECT_GE(mean(celtic) - mean(greek), 1.0);
    const double se = std::sqrt(std::pow(sample_sd(greek), 2) / 1000 + std::pow(sample_sd(celtic), 2) / 1000);
    const double t = (mean(celtic) - mean(greek)) / se;
    EXPECT_LT(student_t_two_sided_p(t, 1998), 0.001);
}

TEST(Grammar, Validation) {
    Grammar g = builtin_grammar(Style::greek);
    g.production = {0, 0, 0, 1, 1};
    EXPECT_THROW(g.validate(), std::invalid_argument);
    g = builtin_grammar(Style::greek);
    g.lengths.values.clear();
    EXPECT_THROW(g.validate(), std::invalid_argument);
    g = builtin_grammar(Style::greek);
    g.depth_cap = 0;
    EXPECT_THROW(g.validate(), std::invalid_argument);
    g = builtin_grammar(Style::celtic);
    g.production[0] = -1;
    EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Sampling, DepthCapOneGivesSingleMotor) {
    Grammar g = builtin_grammar(Style::celtic);
    g.depth_cap = 1;
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        const Program p = sample_program(g, rng);
        EXPECT_TRUE(is_motor(p.kind));
        EXPECT_TRUE(p.children.empty());
    }
}

TEST(Sampling, DepthCapRespected) {
    for (Style s : {Style::greek, Style::celtic}) {
        Rng rng(5);
        for (int i = 0; i < 500; ++i) {
            const Program p = sample_program(builtin_grammar(s), rng);
            EXPECT_LE(depth(p), 6);
        }
    }
}

TEST(Sampling, Deterministic) {
    const Grammar g = builtin_grammar(Style::celtic);
    for (int i = 0; i < 20; ++i) {
        Rng a = make_rng(9, "prog", i), b = make_rng(9, "prog", i);
        EXPECT_EQ(sample_program(g, a), sample_program(g, b));
    }
}

TEST(Sampling, ToyGrammarMatchesEnumeration) {
    // Lines, concats and repeats only; distribution of the Line count.
    Grammar g = builtin_grammar(Style::greek);
    g.production = {2.0, 0.0, 0.0, 1.0, 1.0};
    g.depth_cap = 3;
    const double pl = 0.5, pc = 0.25, pr = 0.25;
    std::vector<double> dist{0.0, 1.0};  // at the cap: exactly one line
    for (int level = g.depth_cap - 1; level >= 1; --level) {
        std::vector<double> next(2 * dist.size(), 0.0);
        next[1] += pl;
        for (std::size_t i = 0; i < dist.size(); ++i) {
            next[i] += pr * dist[i];
            for (std::size_t j = 0; j < dist.size(); ++j) next[i + j] += pc * dist[i] * dist[j];
        }
        dist = next;
    }
    const int n = 10000;
    std::map<int, int> seen;
    Rng rng(6);
    for (int i = 0; i < n; ++i) ++seen[count_kind(sample_program(g, rng), NodeKind::line)];
    double total = 0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        total += dist[k];
        const double p = dist[k];
        const double tol = 2.576 * std::sqrt(p * (1 - p) / n) + 1e-12;
        EXPECT_NEAR(static_cast<double>(seen[static_cast<int>(k)]) / n, p, tol) << "k=" << k;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Interpret, SquareClosesAndReturnsToStart) {
    const StrokePath path = interpret(square_program());
    ASSERT_EQ(path.strokes.size(), 4u);
    const Point corners[5] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0, 0}};
    for (int i = 0; i < 4; ++i) {
        const auto& l = std::get<LineStroke>(path.strokes[i]);
        EXPECT_EQ(l.from, corners[i]);
        EXPECT_EQ(l.to, corners[i + 1]);
    }
    EXPECT_EQ(path.end.position, (Point{0, 0}));
    EXPECT_EQ(path.end.heading_deg, 0.0);
}

TEST(Interpret, ConcatIsComposition) {
    Rng rng(7);
    const Grammar g = builtin_grammar(Style::celtic);
    for (int i = 0; i < 50; ++i) {
        const Program a = sample_program(g, rng), b = sample_program(g, rng);
        const StrokePath pa = interpret(a);
        const StrokePath pb = interpret(b, pa.end);
        const StrokePath pab = interpret(Program::concat(a, b));
        ASSERT_EQ(pab.strokes.size(), pa.strokes.size() + pb.strokes.size());
        const auto fa = flatten(pa), fb = flatten(pb), fab = flatten(pab);
        ASSERT_EQ(fab.size(), fa.size() + fb.size());
        for (std::size_t k = 0; k < fab.size(); ++k) {
            const auto& want = k < fa.size() ? fa[k] : fb[k - fa.size()];
            EXPECT_EQ(fab[k].first, want.first);
            EXPECT_EQ(fab[k].second, want.second);
        }
        EXPECT_EQ(pab.end.position, pb.end.position);
        EXPECT_EQ(pab.end.heading_deg, pb.end.heading_deg);
    }
}

TEST(Interpret, TurnOnlyIsEmpty) {
    const StrokePath p = interpret(Program::repeat(3, Program::concat(Program::turn(45), Program::turn(-90))));
    EXPECT_TRUE(p.empty());
    EXPECT_EQ(p.end.heading_deg, 225.0);
}

TEST(Interpret, ArcTurnsLeftAndChains) {
    // Full circle of radius 1 starting at the origin heading +x.
    const StrokePath p = interpret(Program::arc(1.0, 360));
    const auto& a = std::get<ArcStroke>(p.strokes[0]);
    EXPECT_EQ(a.center, (Point{0, 1}));
    EXPECT_NEAR(p.end.position.x, 0.0, 1e-15);
    EXPECT_NEAR(p.end.position.y, 0.0, 1e-15);
    const StrokePath q = interpret(Program::concat(Program::arc(0.5, 90), Program::line(1)));
    EXPECT_NEAR(q.end.position.x, 0.5, 1e-15);
    EXPECT_NEAR(q.end.position.y, 1.5, 1e-15);
    EXPECT_EQ(q.end.heading_deg, 90.0);
    for (const auto& [s, e] : flatten(p)) {
        EXPECT_NEAR(std::hypot(s.x - 0, s.y - 1), 1.0, 1e-12);
        EXPECT_NEAR(std::hypot(e.x - 0, e.y - 1), 1.0, 1e-12);
    }
}

TEST(Rasterize, EmptyPathIsBlank) {
    const Raster r = rasterize_path(StrokePath{}, 64);
    EXPECT_EQ(r.count_nonzero(), 0u);
    EXPECT_THROW(rasterize_path(StrokePath{}, 16), std::invalid_argument);
}

TEST(Rasterize, HorizontalLineIsOneRow) {
    const Raster r = rasterize_path(interpret(Program::line(2)), 64);
    int rows = 0;
    for (int i = 0; i < 64; ++i) {
        bool any = false;
        for (int j = 0; j < 64; ++j) any |= r.at(i, j) != 0.0;
        rows += any;
    }
    EXPECT_EQ(rows, 1);
    EXPECT_GE(r.count_nonzero(), 51u);
}

TEST(Rasterize, SquareHasFourFoldSymmetry) {
    for (int size : {32, 64, 128}) {
        const Raster r = rasterize_path(interpret(square_program()), size);
        const Raster rot = rotate90(r);
        double worst = 0;
        for (std::size_t k = 0; k < r.pixels().size(); ++k)
            worst = std::max(worst, std::fabs(r.pixels()[k] - rot.pixels()[k]));
        EXPECT_EQ(worst, 0.0) << size;
        EXPECT_GT(r.count_nonzero(), 0u);
    }
}

TEST(Rasterize, ValuesInUnitIntervalAndDeterministic) {
    for (Style s : {Style::greek, Style::celtic}) {
        for (int i = 0; i < 20; ++i) {
            Rng a = make_rng(10, "draw", i), b = make_rng(10, "draw", i);
            const Drawing da = sample_drawing(s, 64, a), db = sample_drawing(s, 64, b);
            EXPECT_EQ(da.raster, db.raster);
            EXPECT_GT(da.raster.count_nonzero(), 0u);
            for (double p : da.raster.pixels()) EXPECT_TRUE(p >= 0.0 && p <= 1.0);
            EXPECT_EQ(count_primitives(da.program), count_primitives(db.program));
        }
    }
}

TEST(Counts, Examples) {
    EXPECT_EQ(count_primitives(Program::line(1)), (PrimitiveCounts{1, 0}));
    EXPECT_EQ(count_primitives(square_program()), (PrimitiveCounts{2, 2}));
}

TEST(Counts, TotalEqualsTreeSize) {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Program p = sample_program(builtin_grammar(i % 2 ? Style::greek : Style::celtic), rng);
        const auto c = count_primitives(p);
        EXPECT_EQ(static_cast<std::size_t>(c.motor + c.control), oracle_tree_size(p));
        EXPECT_EQ(node_count(p), oracle_tree_size(p));
    }
}

TEST(SExpr, RoundTrip) {
    EXPECT_EQ(to_sexpr(square_program()), "(repeat 4 (concat (line 1) (turn 90)))");
    EXPECT_EQ(parse_sexpr("(repeat 4 (concat (line 1) (turn 90)))"), square_program());
    Rng rng(12);
    for (int i = 0; i < 300; ++i) {
        const Program p = sample_program(builtin_grammar(i % 2 ? Style::greek : Style::celtic), rng);
        EXPECT_EQ(parse_sexpr(to_sexpr(p)), p);
    }
    EXPECT_THROW(parse_sexpr("(line)"), std::invalid_argument);
    EXPECT_THROW(parse_sexpr("(repeat 12 (line 1))"), std::invalid_argument);
    EXPECT_THROW(parse_sexpr("(spiral 1)"), std::invalid_argument);
    EXPECT_THROW(parse_sexpr("(line 1) x"), std::invalid_argument);
}

TEST(MeanGrey, Examples) {
    EXPECT_EQ(mean_grey(Raster(32, 0.0)), 0.0);
    EXPECT_EQ(mean_grey(Raster(32, 1.0)), 1.0);
    Raster half(32);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 32; ++j) half.at(i, j) = 1.0;
    EXPECT_NEAR(mean_grey(half), 0.5, 1e-12);
}

TEST(Process, StyleLabels) {
    const auto p = style_process(32);
    Rng rng(13);
    const auto t = sample_triplet(p, rng);
    EXPECT_EQ(t.anchor.style, t.positive.style);
    ASSERT_TRUE(t.theta_plus_label.has_value());
    EXPECT_EQ(*t.theta_plus_label, static_cast<int>(t.anchor.style));
}
