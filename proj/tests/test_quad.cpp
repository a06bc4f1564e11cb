#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "gensim/quad.hpp"

using namespace gensim;
using namespace gensim::quad;

namespace {

// Independent predicate evaluation: squared lengths, law-of-cosines angles,
// normalized cross products. Vertices in the given order.
std::array<bool, 22> oracle_raw(const std::array<Vec2, 4>& v, double tol) {
    std::array<double, 4> l2{}, ang{};
    std::array<Vec2, 4> e{};
    for (int i = 0; i < 4; ++i) {
        e[i] = v[(i + 1) % 4] - v[i];
        l2[i] = e[i].x * e[i].x + e[i].y * e[i].y;
    }
    double area2 = 0;
    for (int i = 0; i < 4; ++i) area2 += v[i].x * v[(i + 1) % 4].y - v[(i + 1) % 4].x * v[i].y;
    for (int i = 0; i < 4; ++i) {
        const Vec2 p = v[(i + 3) % 4], c = v[i], n = v[(i + 1) % 4];
        const double a2 = (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
        const double b2 = (n.x - c.x) * (n.x - c.x) + (n.y - c.y) * (n.y - c.y);
        const double c2 = (p.x - n.x) * (p.x - n.x) + (p.y - n.y) * (p.y - n.y);
        double t = std::acos(std::clamp((a2 + b2 - c2) / (2 * std::sqrt(a2 * b2)), -1.0, 1.0));
        const double turn = (c.x - p.x) * (n.y - c.y) - (c.y - p.y) * (n.x - c.x);
        if (turn * area2 < 0) t = 2 * std::numbers::pi - t;
        ang[i] = t;
    }
    const int pr[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    std::array<bool, 22> b{};
    for (int k = 0; k < 6; ++k) {
        const int i = pr[k][0], j = pr[k][1];
        b[k] = std::fabs(std::sqrt(l2[i]) - std::sqrt(l2[j])) <= tol * std::sqrt(std::max(l2[i], l2[j]));
        b[6 + k] = std::fabs(ang[i] - ang[j]) <= tol;
        const double s = std::fabs(e[i].x * e[j].y - e[i].y * e[j].x) / std::sqrt(l2[i] * l2[j]);
        b[12 + k] = std::asin(std::min(1.0, s)) <= tol;
    }
    for (int i = 0; i < 4; ++i) b[18 + i] = std::fabs(ang[i] - std::numbers::pi / 2) <= tol;
    return b;
}

// Max over all eight vertex relabelings, each evaluated from scratch.
std::array<bool, 22> oracle_canonical(const Quadrilateral& q, double tol) {
    std::array<bool, 22> best{};
    bool first = true;
    for (int r = 0; r < 4; ++r)
        for (int refl = 0; refl < 2; ++refl) {
            std::array<Vec2, 4> w{};
            for (int k = 0; k < 4; ++k) w[k] = q[refl ? ((r - k) % 4 + 4) % 4 : (k + r) % 4];
            const auto b = oracle_raw(w, tol);
            if (first || b > best) best = b;
            first = false;
        }
    return best;
}

Quadrilateral unit_square() { return Quadrilateral({{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}); }
Quadrilateral rect_2x1() { return Quadrilateral({{{0, 0}, {2, 0}, {2, 1}, {0, 1}}}); }

struct Counts {
    int sides, angles, parallels, rights;
};

Counts counts_of(const GeometricFeatureVector& f) {
    return {f.equal_sides(), f.equal_angles(), f.parallel_pairs(), f.right_angles()};
}

// Hand-tallied predicate counts per category for the chosen constructions.
Counts expected_counts(QuadCategory c) {
    switch (c) {
        case QuadCategory::square: return {6, 6, 2, 4};
        case QuadCategory::rectangle: return {2, 6, 2, 4};
        case QuadCategory::losange: return {6, 2, 2, 0};
        case QuadCategory::parallelogram: return {2, 2, 2, 0};
        case QuadCategory::rightKite: return {2, 1, 0, 2};
        case QuadCategory::kite: return {2, 1, 0, 0};
        case QuadCategory::isoTrapezoid: return {1, 2, 1, 0};
        case QuadCategory::hinge: return {1, 0, 0, 1};
        case QuadCategory::rustedHinge: return {1, 0, 0, 0};
        case QuadCategory::trapezoid: return {0, 0, 1, 0};
        case QuadCategory::random: return {0, 0, 0, 0};
    }
    return {};
}

// Tanh-sinh rule on t in [-6, 6], 2000 nodes, for
//   int_0^1 x^(a-1) (1-x)^(b-1) dx
// written so both endpoint factors are computed without cancellation.
double beta_integral(double a, double b) {
    const int n = 2000;
    const double h = 12.0 / (n - 1);
    double s = 0;
    for (int i = 0; i < n; ++i) {
        const double t = -6.0 + i * h;
        const double u = 0.5 * std::numbers::pi * std::sinh(t);
        const double log_x = -std::log1p(std::exp(-2 * u));
        const double log_1mx = -std::log1p(std::exp(2 * u));
        s += std::numbers::pi * std::cosh(t) * std::exp(a * log_x + b * log_1mx);
    }
    return s * h;
}

// Per feature: p(f1, f2) / (p(f1) p(f2)) with the Beta normalizer cancelling.
double quadrature_log_gen_sim(const std::vector<int>& f1, const std::vector<int>& f2, double a, double b) {
    double s = 0;
    const double i0 = beta_integral(a, b);
    for (std::size_t i = 0; i < f1.size(); ++i) {
        const int x = f1[i], y = f2[i];
        const double i12 = beta_integral(a + x + y, b + 2 - x - y);
        const double i1 = beta_integral(a + x, b + 1 - x);
        const double i2 = beta_integral(a + y, b + 1 - y);
        s += std::log(i12 * i0 / (i1 * i2));
    }
    return s;
}

std::vector<int> random_bits(Rng& rng, int n) {
    std::vector<int> v(n);
    for (int& x : v) x = static_cast<int>(uniform_index(rng, 2));
    return v;
}

}  // namespace

TEST(RegularityTable, MatchesReferenceValues) {
    const int ref[11][5] = {{4, 2, 4, 4, 4}, {4, 2, 2, 2, 4}, {0, 0, 2, 4, 2}, {0, 2, 1, 2, 2},
                            {2, 0, 1, 2, 2}, {0, 0, 1, 2, 2}, {0, 1, 1, 1, 2}, {1, 0, 0, 1, 0},
                            {0, 0, 0, 1, 0}, {0, 1, 0, 0, 0}, {0, 0, 0, 0, 0}};
    const char* names[11] = {"square",       "rectangle", "losange",     "parallelogram", "rightKite", "kite",
                             "isoTrapezoid", "hinge",     "rustedHinge", "trapezoid",     "random"};
    for (int i = 0; i < 11; ++i) {
        const QuadCategory c = category_from_name(names[i]);
        EXPECT_EQ(name_of(c), names[i]);
        const auto& row = regularity_row(c);
        EXPECT_EQ(row, (RegularityRow{ref[i][0], ref[i][1], ref[i][2], ref[i][3], ref[i][4]})) << names[i];
        EXPECT_EQ(regularity_rank(c), i + 1);
    }
    EXPECT_THROW(category_from_name("circle"), std::invalid_argument);
}

TEST(Quadrilateral, ValidationAndOrientation) {
    EXPECT_THROW(Quadrilateral({{{0, 0}, {1, 0}, {2, 0}, {0, 1}}}), std::invalid_argument);
    EXPECT_THROW(Quadrilateral({{{0, 0}, {1, 1}, {1, 0}, {0, 1}}}), std::invalid_argument);
    const Quadrilateral cw({{{0, 0}, {0, 1}, {1, 1}, {1, 0}}});
    EXPECT_GT(cw.area(), 0.0);
    EXPECT_NEAR(cw.area(), 1.0, 1e-15);
    // Concave (dart) shapes are simple and allowed.
    EXPECT_NO_THROW(Quadrilateral({{{0, 0}, {2, 1}, {0, 2}, {0.5, 1}}}));
}

TEST(Features, UnitSquare) {
    const auto f = extract_features(unit_square());
    EXPECT_EQ(f.equal_sides(), 6);
    EXPECT_EQ(f.equal_angles(), 6);
    EXPECT_EQ(f.parallel_pairs(), 2);
    EXPECT_EQ(f.right_angles(), 4);
    EXPECT_EQ(f.bits, oracle_canonical(unit_square(), 1e-9));
}

TEST(Features, TwoByOneRectangle) {
    const auto raw = raw_features(rect_2x1().vertices(), {});
    // Opposite edges (0,2) and (1,3) only.
    for (int p = 0; p < 6; ++p) EXPECT_EQ(raw.bits[p], p == 1 || p == 4) << p;
    EXPECT_EQ(raw.equal_angles(), 6);
    EXPECT_EQ(raw.parallel_pairs(), 2);
    EXPECT_EQ(raw.right_angles(), 4);
    EXPECT_EQ(raw.bits, oracle_raw(rect_2x1().vertices(), 1e-9));
    EXPECT_EQ(extract_features(rect_2x1()).bits, oracle_canonical(rect_2x1(), 1e-9));
}

TEST(Features, ConcaveAngleIsReflex) {
    const Quadrilateral dart({{{0, 0}, {2, 1}, {0, 2}, {0.5, 1}}});
    const auto raw = raw_features(dart.vertices(), {});
    EXPECT_EQ(raw.bits, oracle_raw(dart.vertices(), 1e-9));
    EXPECT_TRUE(raw.bits[kSideBase + pair_index(0, 1)]);
    EXPECT_TRUE(raw.bits[kAngleBase + pair_index(0, 2)]);
    EXPECT_FALSE(raw.bits[kAngleBase + pair_index(1, 3)]);
}

TEST(Features, RelabelBitsMatchesRecomputation) {
    Rng rng(11);
    for (QuadCategory c : kAllCategories) {
        const Quadrilateral q = generate_exemplar(c, rng);
        const auto raw = raw_features(q.vertices(), {});
        for (const VertexPerm& p : dihedral_relabelings()) {
            std::array<Vec2, 4> w{};
            for (int k = 0; k < 4; ++k) w[k] = q[p[k]];
            EXPECT_EQ(relabel_bits(raw, p), raw_features(w, {})) << name_of(c);
        }
    }
}

TEST(Features, InvariantUnderRelabelingAndSimilarity) {
    Rng rng(12);
    for (QuadCategory c : kAllCategories) {
        for (int rep = 0; rep < 5; ++rep) {
            const Quadrilateral q = generate_exemplar(c, rng);
            const auto f = extract_features(q);
            EXPECT_EQ(f.bits, oracle_canonical(q, 1e-6)) << name_of(c);
            const auto moved = apply_transform(q, uniform(rng, 0.2, 5.0), uniform(rng, -7, 7));
            EXPECT_EQ(extract_features(moved), f) << name_of(c);
            for (int r = 1; r < 4; ++r) {
                const Quadrilateral cyc(std::array<Vec2, 4>{q[r], q[(r + 1) % 4], q[(r + 2) % 4], q[(r + 3) % 4]});
                EXPECT_EQ(extract_features(cyc), f);
            }
            // Mirror image.
            const Quadrilateral mir({{{-q[0].x, q[0].y}, {-q[1].x, q[1].y}, {-q[2].x, q[2].y}, {-q[3].x, q[3].y}}});
            EXPECT_EQ(extract_features(mir), f);
        }
    }
}

TEST(Exemplars, ReproduceCategoryPattern) {
    for (QuadCategory c : kAllCategories) {
        const auto pattern = category_pattern(c);
        const Counts want = expected_counts(c);
        const Counts got = counts_of(pattern);
        EXPECT_EQ(got.sides, want.sides) << name_of(c);
        EXPECT_EQ(got.angles, want.angles) << name_of(c);
        EXPECT_EQ(got.parallels, want.parallels) << name_of(c);
        EXPECT_EQ(got.rights, want.rights) << name_of(c);
        // Table-1 columns that do count like the bits.
        EXPECT_EQ(got.rights, regularity_row(c).right_angles) << name_of(c);
        for (int seed = 0; seed < 100; ++seed) {
            Rng rng = make_rng(2024, "exemplar", static_cast<std::uint64_t>(seed) * 16 + index_of(c));
            const Quadrilateral q = generate_exemplar(c, rng);
            ASSERT_EQ(extract_features(q), pattern) << name_of(c) << " seed " << seed;
            ASSERT_EQ(oracle_canonical(q, 1e-6), pattern.bits) << name_of(c) << " seed " << seed;
            double r = 0;
            const auto [lo, hi] = q.bbox();
            for (const Vec2& v : q.vertices()) r = std::max(r, length(v - 0.5 * (lo + hi)));
            ASSERT_LE(r, 1.0 + 1e-9);
        }
    }
}

TEST(Exemplars, RandomHasNoFeaturesAndTrapezoidOneParallel) {
    Rng rng(5);
    EXPECT_EQ(extract_features(generate_exemplar(QuadCategory::random, rng)).count(), 0);
    const auto t = extract_features(generate_exemplar(QuadCategory::trapezoid, rng));
    EXPECT_EQ(t.parallel_pairs(), 1);
    EXPECT_EQ(t.right_angles(), 0);
    EXPECT_EQ(t.equal_sides() + t.equal_angles(), 0);
}

TEST(Exemplars, PatternsAreDistinct) {
    std::set<GeometricFeatureVector> seen;
    for (QuadCategory c : kAllCategories) seen.insert(category_pattern(c));
    EXPECT_EQ(seen.size(), 11u);
}

TEST(Transform, IdentityAndHalfTurn) {
    const Quadrilateral q = unit_square();
    const auto same = apply_transform(q, 1.0, 0.0);
    for (int i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(same[i].x, q[i].x);
        EXPECT_DOUBLE_EQ(same[i].y, q[i].y);
    }
    const auto turned = apply_transform(q, 1.0, std::numbers::pi);
    for (int i = 0; i < 4; ++i) {
        bool found = false;
        for (int j = 0; j < 4; ++j) found |= length(turned[i] - q[j]) <= 1e-9;
        EXPECT_TRUE(found);
    }
    EXPECT_THROW(apply_transform(q, 0.0, 0.0), std::invalid_argument);
}

TEST(BetaBernoulli, SingleFeatureExample) {
    const std::vector<int> one{1};
    EXPECT_NEAR(shape_log_gen_sim_general(one, one, {1, 1}), std::log(4.0 / 3.0), 1e-14);
}

TEST(BetaBernoulli, SymmetricInArguments) {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        const auto a = random_bits(rng, 22), b = random_bits(rng, 22);
        const BetaBernoulliParams p(uniform(rng, 0.1, 4), uniform(rng, 0.1, 4));
        EXPECT_EQ(shape_log_gen_sim_general(a, b, p), shape_log_gen_sim_general(b, a, p));
    }
}

TEST(BetaBernoulli, MatchesQuadrature) {
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        const int n = 1 + static_cast<int>(uniform_index(rng, 22));
        const auto a = random_bits(rng, n), b = random_bits(rng, n);
        const double al = uniform(rng, 0.3, 4.0), be = uniform(rng, 0.3, 4.0);
        const double want = quadrature_log_gen_sim(a, b, al, be);
        const double got = shape_log_gen_sim_general(a, b, {al, be});
        EXPECT_LE(std::fabs(got - want), 1e-6 * std::fabs(want)) << got << " vs " << want;
    }
}

TEST(BetaBernoulli, RejectsBadInput) {
    const std::vector<int> a{0, 1}, b{0, 2}, c{1};
    EXPECT_THROW(shape_log_gen_sim_general(a, b, {1, 1}), std::invalid_argument);
    EXPECT_THROW(shape_log_gen_sim_general(a, c, {1, 1}), std::invalid_argument);
    EXPECT_THROW(shape_log_gen_sim_limit(a, b, 0.1), std::invalid_argument);
    EXPECT_THROW(shape_log_gen_sim_limit(a, a, 0.0), std::invalid_argument);
    EXPECT_THROW(feature_sq_distance(a, c), std::invalid_argument);
    EXPECT_THROW(BetaBernoulliParams(0, 1), std::invalid_argument);
}

TEST(BetaBernoulliLimit, Examples) {
    Rng rng(9);
    const auto f = random_bits(rng, 22);
    EXPECT_NEAR(shape_log_gen_sim_limit(f, f, 0.01), 22 * std::log(2.0), 1e-12);
    for (int k = 0; k <= 22; ++k) {
        auto g = f;
        for (int i = 0; i < k; ++i) g[i] = 1 - g[i];
        EXPECT_NEAR(shape_log_gen_sim_limit(f, g, 1.0), (22 - k) * std::log(2.0), 1e-12);
    }
}

TEST(BetaBernoulliLimit, AgreesWithGeneralFormAtSmallBeta) {
    Rng rng(10);
    const double beta = 1e-6;
    for (int i = 0; i < 50; ++i) {
        const auto a = random_bits(rng, 22), b = random_bits(rng, 22);
        const double lim = shape_log_gen_sim_limit(a, b, beta);
        const double gen = shape_log_gen_sim_general(a, b, {beta, beta});
        EXPECT_LE(std::fabs(lim - gen), 1e-3 * std::fabs(gen));
    }
}

TEST(BetaBernoulliLimit, StrictlyDecreasingAffineInDistance) {
    std::vector<int> f(22, 0);
    double prev = shape_log_gen_sim_limit(f, f, 0.05);
    const double step = std::log(1.05 / 0.05);
    for (int k = 1; k <= 22; ++k) {
        std::vector<int> g(22, 0);
        for (int i = 0; i < k; ++i) g[i] = 1;
        const double v = shape_log_gen_sim_limit(f, g, 0.05);
        EXPECT_LT(v, prev);
        EXPECT_NEAR(prev - v, step, 1e-12);
        prev = v;
    }
}

TEST(FeatureDistance, Examples) {
    std::vector<int> a(22, 0), b(22, 1);
    EXPECT_EQ(feature_sq_distance(a, a), 0);
    EXPECT_EQ(feature_sq_distance(a, b), 22);
    const auto sq = extract_features(unit_square()), re = extract_features(rect_2x1());
    EXPECT_EQ(feature_sq_distance(sq, re), 4);
    for (int p : {0, 2, 3, 5}) EXPECT_NE(sq.bits[kSideBase + p], re.bits[kSideBase + p]);
}

TEST(Oddball, SquareLosesRightAngles) {
    for (int seed = 0; seed < 30; ++seed) {
        Rng rng = make_rng(77, "trial", static_cast<std::uint64_t>(seed));
        const OddballTrial t = make_oddball_trial(QuadCategory::square, rng);
        const auto odd = extract_features(t.items[t.oddball_index], ExtractionTolerances::loose());
        EXPECT_LT(odd.right_angles(), 4);
        for (int i = 0; i < 6; ++i)
            if (i != t.oddball_index) {
                EXPECT_EQ(extract_features(t.items[i], ExtractionTolerances::loose()).right_angles(), 4);
            }
    }
}

TEST(Oddball, StructureForEveryCategory) {
    std::array<int, 6> slot_counts{};
    for (QuadCategory c : kAllCategories) {
        for (int seed = 0; seed < 20; ++seed) {
            Rng rng = make_rng(78, "trial", static_cast<std::uint64_t>(seed) * 16 + index_of(c));
            const OddballTrial t = make_oddball_trial(c, rng);
            ASSERT_GE(t.oddball_index, 0);
            ASSERT_LT(t.oddball_index, 6);
            ++slot_counts[t.oddball_index];
            EXPECT_EQ(t.category, c);
            const auto pattern = category_pattern(c);
            int matching = 0;
            for (int i = 0; i < 6; ++i) matching += extract_features(t.items[i], ExtractionTolerances::loose()) == pattern;
            if (c != QuadCategory::random) {
                EXPECT_EQ(matching, 5) << name_of(c);
                EXPECT_NE(extract_features(t.items[t.oddball_index], ExtractionTolerances::loose()), pattern);
            }
            EXPECT_GT(t.items[t.oddball_index].area(), 0.0);
        }
    }
    for (int n : slot_counts) EXPECT_GT(n, 10);
}

TEST(Oddball, RandomCategoryDisplacementIsVisible) {
    Rng rng(3);
    const Quadrilateral ref = generate_exemplar(QuadCategory::random, rng);
    const auto [lo, hi] = ref.bbox();
    const double diag = length(hi - lo);
    for (int i = 0; i < 20; ++i) {
        const Quadrilateral odd = make_oddball(ref, QuadCategory::random, rng);
        const int k = lowest_rightmost_vertex(ref);
        // The three untouched vertices reappear exactly; the remaining one moved.
        int untouched = 0;
        double moved = 0;
        for (const Vec2& v : odd.vertices()) {
            bool same = false;
            for (int j = 0; j < 4; ++j) same |= (j != k && v == ref[j]);
            if (same) ++untouched;
            else moved = length(v - ref[k]);
        }
        EXPECT_EQ(untouched, 3);
        EXPECT_GE(moved, 0.05 * diag - 1e-12);
    }
}

TEST(Raster, OutlineBoundsAndDeterminism) {
    Rng rng(4);
    for (QuadCategory c : kAllCategories) {
        const Quadrilateral q = generate_exemplar(c, rng);
        for (int size : {16, 32, 64}) {
            const Raster r = rasterize_quad(q, size);
            EXPECT_GE(static_cast<double>(r.count_nonzero()), 4 * (size * 0.1));
            for (double p : r.pixels()) EXPECT_TRUE(p >= 0.0 && p <= 1.0);
            // 10% margins stay blank.
            const int m = static_cast<int>(std::floor(0.1 * size)) - 1;
            for (int i = 0; i < size; ++i)
                for (int j = 0; j < m; ++j) {
                    EXPECT_EQ(r.at(i, j), 0.0);
                    EXPECT_EQ(r.at(j, i), 0.0);
                }
        }
    }
    const Quadrilateral a = apply_transform(unit_square(), 0.7, 0.3);
    const Quadrilateral b = apply_transform(unit_square(), 0.7, 0.3);
    EXPECT_EQ(rasterize_quad(a, 64), rasterize_quad(b, 64));
    EXPECT_THROW(rasterize_quad(a, 8), std::invalid_argument);
}

TEST(Raster, FixedExtentPreservesRelativeSize) {
    const Quadrilateral big = unit_square();
    const Quadrilateral small = apply_transform(big, 0.5, 0.0);
    EXPECT_GT(rasterize_quad(big, 64, 1.0).count_nonzero(), rasterize_quad(small, 64, 1.0).count_nonzero());
}

TEST(Raster, AxisAlignedSquareIsMirrorSymmetric) {
    const Raster r = rasterize_quad(unit_square(), 64);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            EXPECT_EQ(r.at(i, j), r.at(i, 63 - j));
            EXPECT_EQ(r.at(i, j), r.at(63 - i, j));
        }
}
