#pragma once

// Quadrilateral stimuli: the eleven reference categories, the 22 binary
// geometric features, Beta-Bernoulli generative similarity over feature
// vectors, oddball trials and outline rasterization.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gensim/core.hpp"
#include "gensim/error.hpp"
#include "gensim/raster.hpp"
#include "gensim/rng.hpp"
#include "gensim/stats.hpp"

namespace gensim::quad {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    bool operator==(const Vec2&) const = default;
};

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double length(Vec2 a) { return std::hypot(a.x, a.y); }

inline double signed_area(const std::array<Vec2, 4>& v) {
    double s = 0;
    for (int i = 0; i < 4; ++i) s += cross(v[i], v[(i + 1) % 4]);
    return 0.5 * s;
}

/// Four vertices, counterclockwise, simple, no three collinear.
class Quadrilateral {
public:
    /// Validates and, if the points are clockwise, reverses them.
    explicit Quadrilateral(std::array<Vec2, 4> pts) : v_(pts) {
        double scale = 0;
        for (const Vec2& p : v_)
            for (const Vec2& q : v_) scale = std::max(scale, length(p - q));
        if (!(scale > 0) || !std::isfinite(scale)) throw std::invalid_argument("Quadrilateral: degenerate points");
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                for (int k = j + 1; k < 4; ++k)
                    if (std::fabs(cross(v_[j] - v_[i], v_[k] - v_[i])) <= 1e-9 * scale * scale)
                        throw std::invalid_argument("Quadrilateral: three collinear vertices");
        if (segments_cross(v_[0], v_[1], v_[2], v_[3]) || segments_cross(v_[1], v_[2], v_[3], v_[0]))
            throw std::invalid_argument("Quadrilateral: self-intersecting");
        if (signed_area(v_) < 0) std::reverse(v_.begin(), v_.end());
    }

    static std::optional<Quadrilateral> try_make(std::array<Vec2, 4> pts) {
        try {
            return Quadrilateral(pts);
        } catch (const std::invalid_argument&) {
            return std::nullopt;
        }
    }

    const std::array<Vec2, 4>& vertices() const noexcept { return v_; }
    const Vec2& operator[](int i) const { return v_[static_cast<std::size_t>(i)]; }
    double area() const { return signed_area(v_); }

    Vec2 centroid() const { return 0.25 * (v_[0] + v_[1] + v_[2] + v_[3]); }

    /// Axis-aligned bounding box as (min, max).
    std::pair<Vec2, Vec2> bbox() const {
        Vec2 lo = v_[0], hi = v_[0];
        for (const Vec2& p : v_) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
        return {lo, hi};
    }

private:
    static bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
        const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
        const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
        return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
    }

    std::array<Vec2, 4> v_;
};

enum class QuadCategory {
    square,
    rectangle,
    losange,
    parallelogram,
    rightKite,
    kite,
    isoTrapezoid,
    hinge,
    rustedHinge,
    trapezoid,
    random,
};

inline constexpr int kNumCategories = 11;

/// Categories in order of decreasing regularity.
inline constexpr std::array<QuadCategory, kNumCategories> kAllCategories = {
    QuadCategory::square,       QuadCategory::rectangle, QuadCategory::losange,     QuadCategory::parallelogram,
    QuadCategory::rightKite,    QuadCategory::kite,      QuadCategory::isoTrapezoid, QuadCategory::hinge,
    QuadCategory::rustedHinge,  QuadCategory::trapezoid, QuadCategory::random,
};

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "square", "rectangle", "losange", "parallelogram", "rightKite", "kite",
    "isoTrapezoid", "hinge", "rustedHinge", "trapezoid", "random",
};

/// rightAngles, parallels, symmetry, equalSides, equalAngles.
struct RegularityRow {
    int right_angles;
    int parallels;
    int symmetry;
    int equal_sides;
    int equal_angles;

    int total() const noexcept { return right_angles + parallels + symmetry + equal_sides + equal_angles; }
    bool operator==(const RegularityRow&) const = default;
};

// Reference regularity table; used for ranking only, never derived from the
// feature bits (the tallies count differently).
inline constexpr std::array<RegularityRow, kNumCategories> kRegularityTable = {{
    {4, 2, 4, 4, 4},  // square
    {4, 2, 2, 2, 4},  // rectangle
    {0, 0, 2, 4, 2},  // losange
    {0, 2, 1, 2, 2},  // parallelogram
    {2, 0, 1, 2, 2},  // rightKite
    {0, 0, 1, 2, 2},  // kite
    {0, 1, 1, 1, 2},  // isoTrapezoid
    {1, 0, 0, 1, 0},  // hinge
    {0, 0, 0, 1, 0},  // rustedHinge
    {0, 1, 0, 0, 0},  // trapezoid
    {0, 0, 0, 0, 0},  // random
}};

inline int index_of(QuadCategory c) { return static_cast<int>(c); }
inline std::string_view name_of(QuadCategory c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
inline const RegularityRow& regularity_row(QuadCategory c) { return kRegularityTable[static_cast<std::size_t>(c)]; }
/// 1 = most regular (square) ... 11 = least (random).
inline int regularity_rank(QuadCategory c) { return index_of(c) + 1; }

inline QuadCategory category_from_name(std::string_view name) {
    for (int i = 0; i < kNumCategories; ++i)
        if (kCategoryNames[static_cast<std::size_t>(i)] == name) return kAllCategories[static_cast<std::size_t>(i)];
    throw std::invalid_argument("unknown quadrilateral category: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Features

inline constexpr int kNumFeatures = 22;
inline constexpr std::array<std::array<int, 2>, 6> kPairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
inline constexpr int kSideBase = 0, kAngleBase = 6, kParallelBase = 12, kRightBase = 18;

inline int pair_index(int i, int j) {
    if (i > j) std::swap(i, j);
    for (int k = 0; k < 6; ++k)
        if (kPairs[static_cast<std::size_t>(k)][0] == i && kPairs[static_cast<std::size_t>(k)][1] == j) return k;
    throw std::invalid_argument("pair_index: not a pair");
}

/// 22 bits: 6 side-length equalities, 6 angle equalities, 6 side
/// parallelisms (pairs in lexicographic order), then 4 right angles.
/// Side i joins vertex i to vertex i+1; angle i is the interior angle at
/// vertex i.
struct GeometricFeatureVector {
    std::array<bool, kNumFeatures> bits{};

    int count() const { return static_cast<int>(std::count(bits.begin(), bits.end(), true)); }
    int count_range(int base, int n) const {
        return static_cast<int>(std::count(bits.begin() + base, bits.begin() + base + n, true));
    }
    int equal_sides() const { return count_range(kSideBase, 6); }
    int equal_angles() const { return count_range(kAngleBase, 6); }
    int parallel_pairs() const { return count_range(kParallelBase, 6); }
    int right_angles() const { return count_range(kRightBase, 4); }

    std::vector<int> as_ints() const { return {bits.begin(), bits.end()}; }
    std::string to_string() const {
        std::string s;
        for (bool b : bits) s += b ? '1' : '0';
        return s;
    }

    auto operator<=>(const GeometricFeatureVector&) const = default;
};

struct ExtractionTolerances {
    double length_rel = 1e-6;
    double angle_rad = 1e-6;

    /// For hand-perturbed or noisy inputs.
    static constexpr ExtractionTolerances loose() { return {1e-2, 1e-2}; }
};

/// A vertex relabeling: new vertex k is old vertex perm[k]. Only the eight
/// dihedral relabelings keep the polygon's edge structure.
using VertexPerm = std::array<int, 4>;

inline std::array<VertexPerm, 8> dihedral_relabelings() {
    std::array<VertexPerm, 8> out{};
    for (int r = 0; r < 4; ++r) {
        for (int k = 0; k < 4; ++k) {
            out[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = (k + r) % 4;
            out[static_cast<std::size_t>(4 + r)][static_cast<std::size_t>(k)] = ((r - k) % 4 + 4) % 4;
        }
    }
    return out;
}

/// Bit vector of the relabeled polygon, obtained by permuting bits only.
inline GeometricFeatureVector relabel_bits(const GeometricFeatureVector& f, const VertexPerm& perm) {
    auto old_edge = [&](int k) {
        const int a = perm[static_cast<std::size_t>(k)], b = perm[static_cast<std::size_t>((k + 1) % 4)];
        return (b == (a + 1) % 4) ? a : b;  // edge joining a and b, named by its first vertex
    };
    GeometricFeatureVector g;
    for (int p = 0; p < 6; ++p) {
        const int i = kPairs[static_cast<std::size_t>(p)][0], j = kPairs[static_cast<std::size_t>(p)][1];
        const int se = pair_index(old_edge(i), old_edge(j));
        const int sa = pair_index(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        g.bits[static_cast<std::size_t>(kSideBase + p)] = f.bits[static_cast<std::size_t>(kSideBase + se)];
        g.bits[static_cast<std::size_t>(kAngleBase + p)] = f.bits[static_cast<std::size_t>(kAngleBase + sa)];
        g.bits[static_cast<std::size_t>(kParallelBase + p)] = f.bits[static_cast<std::size_t>(kParallelBase + se)];
    }
    for (int k = 0; k < 4; ++k)
        g.bits[static_cast<std::size_t>(kRightBase + k)] =
            f.bits[static_cast<std::size_t>(kRightBase + perm[static_cast<std::size_t>(k)])];
    return g;
}

/// Representative of the relabeling orbit: the lexicographically largest
/// bit vector (true > false) over the eight dihedral relabelings.
inline GeometricFeatureVector canonical_bits(const GeometricFeatureVector& f) {
    GeometricFeatureVector best = f;
    for (const VertexPerm& p : dihedral_relabelings()) best = std::max(best, relabel_bits(f, p));
    return best;
}

/// Predicates evaluated on the vertices in their stored order.
inline GeometricFeatureVector raw_features(const std::array<Vec2, 4>& w, const ExtractionTolerances& tol) {
    const double orient = signed_area(w) >= 0 ? 1.0 : -1.0;
    std::array<Vec2, 4> edge{};
    std::array<double, 4> len{}, angle{};
    for (int i = 0; i < 4; ++i) {
        edge[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>((i + 1) % 4)] - w[static_cast<std::size_t>(i)];
        len[static_cast<std::size_t>(i)] = length(edge[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < 4; ++i) {
        const Vec2 in = edge[static_cast<std::size_t>((i + 3) % 4)], out = edge[static_cast<std::size_t>(i)];
        const Vec2 a = -1.0 * in;
        const double between = std::atan2(std::fabs(cross(a, out)), dot(a, out));
        const bool convex = cross(in, out) * orient > 0;
        angle[static_cast<std::size_t>(i)] = convex ? between : 2.0 * std::numbers::pi - between;
    }
    GeometricFeatureVector f;
    for (int p = 0; p < 6; ++p) {
        const auto i = static_cast<std::size_t>(kPairs[static_cast<std::size_t>(p)][0]);
        const auto j = static_cast<std::size_t>(kPairs[static_cast<std::size_t>(p)][1]);
        f.bits[static_cast<std::size_t>(kSideBase + p)] =
            std::fabs(len[i] - len[j]) <= tol.length_rel * std::max(len[i], len[j]);
        f.bits[static_cast<std::size_t>(kAngleBase + p)] = std::fabs(angle[i] - angle[j]) <= tol.angle_rad;
        const double line_angle = std::atan2(std::fabs(cross(edge[i], edge[j])), std::fabs(dot(edge[i], edge[j])));
        f.bits[static_cast<std::size_t>(kParallelBase + p)] = line_angle <= tol.angle_rad;
    }
    for (int i = 0; i < 4; ++i)
        f.bits[static_cast<std::size_t>(kRightBase + i)] =
            std::fabs(angle[static_cast<std::size_t>(i)] - 0.5 * std::numbers::pi) <= tol.angle_rad;
    return f;
}

/// Canonical 22-bit feature vector; invariant to vertex labeling, rotation,
/// scaling and reflection.
inline GeometricFeatureVector extract_features(const Quadrilateral& q, const ExtractionTolerances& tol = {}) {
    return canonical_bits(raw_features(q.vertices(), tol));
}

/// Feature pattern of each category in its construction labeling.
inline GeometricFeatureVector template_bits(QuadCategory c) {
    GeometricFeatureVector f;
    auto set = [&](std::initializer_list<int> idx) {
        for (int i : idx) f.bits[static_cast<std::size_t>(i)] = true;
    };
    const int s01 = 0, s02 = 1, s03 = 2, s12 = 3, s13 = 4, s23 = 5;
    const int a01 = 6, a02 = 7, a03 = 8, a12 = 9, a13 = 10, a23 = 11;
    const int p02 = 13, p13 = 16;
    const int r0 = 18, r1 = 19, r2 = 20, r3 = 21;
    switch (c) {
        case QuadCategory::square:
            set({s01, s02, s03, s12, s13, s23, a01, a02, a03, a12, a13, a23, p02, p13, r0, r1, r2, r3});
            break;
        case QuadCategory::rectangle:
            set({s02, s13, a01, a02, a03, a12, a13, a23, p02, p13, r0, r1, r2, r3});
            break;
        case QuadCategory::losange: set({s01, s02, s03, s12, s13, s23, a02, a13, p02, p13}); break;
        case QuadCategory::parallelogram: set({s02, s13, a02, a13, p02, p13}); break;
        case QuadCategory::rightKite: set({s03, s12, a13, r1, r3}); break;
        case QuadCategory::kite: set({s03, s12, a13}); break;
        case QuadCategory::isoTrapezoid: set({s13, a01, a23, p02}); break;
        case QuadCategory::hinge: set({s01, r1}); break;
        case QuadCategory::rustedHinge: set({s01}); break;
        case QuadCategory::trapezoid: set({p02}); break;
        case QuadCategory::random: break;
    }
    return f;
}

inline GeometricFeatureVector category_pattern(QuadCategory c) { return canonical_bits(template_bits(c)); }

// ---------------------------------------------------------------------------
// Beta-Bernoulli generative similarity

struct BetaBernoulliParams {
    double alpha = 1.0;
    double beta = 1.0;

    BetaBernoulliParams(double a, double b) : alpha(a), beta(b) {
        if (!(a > 0) || !(b > 0)) throw std::invalid_argument("Beta parameters must be positive");
    }
};

namespace detail {
inline void check_binary_pair(std::span<const int> f1, std::span<const int> f2) {
    if (f1.size() != f2.size()) throw std::invalid_argument("feature vectors differ in length");
    for (std::size_t i = 0; i < f1.size(); ++i)
        if ((f1[i] != 0 && f1[i] != 1) || (f2[i] != 0 && f2[i] != 1))
            throw std::invalid_argument("feature vectors must be binary");
}
}  // namespace detail

/// Sum over features of
///   log B(f1+f2+a, ~f1+~f2+b) + log B(a, b) - log B(f1+a, ~f1+b) - log B(f2+a, ~f2+b).
inline double shape_log_gen_sim_general(std::span<const int> f1, std::span<const int> f2,
                                        const BetaBernoulliParams& p) {
    detail::check_binary_pair(f1, f2);
    const double a = p.alpha, b = p.beta;
    double s = 0;
    for (std::size_t i = 0; i < f1.size(); ++i) {
        const double x = f1[i], y = f2[i];
        s += log_beta(x + y + a, (1 - x) + (1 - y) + b) + log_beta(a, b) -
             (log_beta(x + a, (1 - x) + b) + log_beta(y + a, (1 - y) + b));
    }
    return s;
}

/// Number of differing bits, i.e. the squared Euclidean distance of binary vectors.
inline int feature_sq_distance(std::span<const int> f1, std::span<const int> f2) {
    detail::check_binary_pair(f1, f2);
    int d = 0;
    for (std::size_t i = 0; i < f1.size(); ++i) d += (f1[i] != f2[i]);
    return d;
}

inline int feature_sq_distance(const GeometricFeatureVector& a, const GeometricFeatureVector& b) {
    return feature_sq_distance(a.as_ints(), b.as_ints());
}

/// The alpha = beta -> 0 form: n log 2 - log((beta+1)/beta) * sum (f1-f2)^2.
inline double shape_log_gen_sim_limit(std::span<const int> f1, std::span<const int> f2, double beta) {
    if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
    const int d = feature_sq_distance(f1, f2);
    return static_cast<double>(f1.size()) * std::log(2.0) - std::log((beta + 1.0) / beta) * d;
}

// ---------------------------------------------------------------------------
// Construction

/// Rigid rotation and uniform scaling about the vertex centroid.
inline Quadrilateral apply_transform(const Quadrilateral& q, double scale, double rotation) {
    if (!(scale > 0)) throw std::invalid_argument("apply_transform: scale must be positive");
    const Vec2 c = q.centroid();
    const double cs = std::cos(rotation), sn = std::sin(rotation);
    std::array<Vec2, 4> out{};
    for (int i = 0; i < 4; ++i) {
        const Vec2 d = q[i] - c;
        out[static_cast<std::size_t>(i)] = c + scale * Vec2{cs * d.x - sn * d.y, sn * d.x + cs * d.y};
    }
    return Quadrilateral(out);
}

namespace detail {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Near-coincidences within this margin are rejected at generation time so
/// that exemplars are visibly free of unintended regularities.
inline constexpr ExtractionTolerances kGenerationMargin{0.05, 0.05};

inline std::array<Vec2, 4> construct(QuadCategory c, Rng& rng) {
    switch (c) {
        case QuadCategory::square: return {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
        case QuadCategory::rectangle: {
            const double b = uniform(rng, 0.4, 0.8);
            return {{{0, 0}, {1, 0}, {1, b}, {0, b}}};
        }
        case QuadCategory::losange: {
            const double t = uniform(rng, 40, 75) * kDeg;
            return {{{0, 0}, {1, 0}, {1 + std::cos(t), std::sin(t)}, {std::cos(t), std::sin(t)}}};
        }
        case QuadCategory::parallelogram: {
            const double b = uniform(rng, 0.4, 0.8), t = uniform(rng, 45, 75) * kDeg;
            return {{{0, 0}, {1, 0}, {1 + b * std::cos(t), b * std::sin(t)}, {b * std::cos(t), b * std::sin(t)}}};
        }
        case QuadCategory::rightKite: {
            // v1, v3 on the circle with diameter v0 v2 (right angles there).
            const double phi = uniform(rng, 30, 70) * kDeg;
            const Vec2 v1{1 + std::cos(phi), -std::sin(phi)};
            return {{{0, 0}, v1, {2, 0}, {v1.x, -v1.y}}};
        }
        case QuadCategory::kite: {
            const double p = uniform(rng, 0.2, 1.6), h = uniform(rng, 0.4, 1.2);
            return {{{0, 0}, {p, -h}, {2, 0}, {p, h}}};
        }
        case QuadCategory::isoTrapezoid: {
            const double b = uniform(rng, 0.3, 0.75), h = uniform(rng, 0.5, 1.2);
            return {{{-1, 0}, {1, 0}, {b, h}, {-b, h}}};
        }
        case QuadCategory::hinge:
            return {{{0, 0}, {1, 0}, {1, 1}, {uniform(rng, -0.6, 0.6), uniform(rng, 0.6, 1.8)}}};
        case QuadCategory::rustedHinge: {
            const double t = (90.0 + (uniform(rng, 0, 1) < 0.5 ? -10.0 : 10.0)) * kDeg;
            return {{{0, 0}, {1, 0}, {1 + std::cos(t), std::sin(t)}, {uniform(rng, -0.6, 0.6), uniform(rng, 0.6, 1.8)}}};
        }
        case QuadCategory::trapezoid: {
            const double a = uniform(rng, 1.2, 2.0), b = uniform(rng, 0.4, 1.0);
            const double c0 = uniform(rng, -0.5, 1.2), h = uniform(rng, 0.5, 1.3);
            return {{{0, 0}, {a, 0}, {c0 + b, h}, {c0, h}}};
        }
        case QuadCategory::random: {
            std::array<Vec2, 4> v{};
            for (int i = 0; i < 4; ++i) {
                const double t = (90.0 * i + uniform(rng, -30, 30)) * kDeg, r = uniform(rng, 0.5, 1.0);
                v[static_cast<std::size_t>(i)] = {r * std::cos(t), r * std::sin(t)};
            }
            return v;
        }
    }
    throw std::invalid_argument("unknown category");
}

/// Centers the bounding box on the origin and scales the farthest vertex to radius 1.
inline std::array<Vec2, 4> normalize(std::array<Vec2, 4> v) {
    Vec2 lo = v[0], hi = v[0];
    for (const Vec2& p : v) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    const Vec2 c = 0.5 * (lo + hi);
    double r = 0;
    for (Vec2& p : v) {
        p = p - c;
        r = std::max(r, length(p));
    }
    for (Vec2& p : v) p = (1.0 / r) * p;
    return v;
}

}  // namespace detail

inline constexpr int kMaxConstructionAttempts = 10000;

/// A random exemplar of the category: random shape parameters, random
/// orientation, farthest vertex at distance 1 from the bounding-box center.
/// Its features equal the category pattern exactly, and no unintended
/// regularity holds even approximately.
inline Quadrilateral generate_exemplar(QuadCategory c, Rng& rng) {
    const GeometricFeatureVector target = category_pattern(c);
    for (int attempt = 0; attempt < kMaxConstructionAttempts; ++attempt) {
        auto pts = detail::construct(c, rng);
        const double rot = uniform(rng, 0, 2 * std::numbers::pi);
        const double cs = std::cos(rot), sn = std::sin(rot);
        for (Vec2& p : pts) p = {cs * p.x - sn * p.y, sn * p.x + cs * p.y};
        const auto q = Quadrilateral::try_make(detail::normalize(pts));
        if (!q) continue;
        if (extract_features(*q) != target) continue;
        if (extract_features(*q, detail::kGenerationMargin) != target) continue;
        return *q;
    }
    throw ConstructionFailure("generate_exemplar: no valid " + std::string(name_of(c)) + " after " +
                              std::to_string(kMaxConstructionAttempts) + " attempts");
}

/// Category = theta, exemplar = datum: the definite-category limit of the
/// Beta-Bernoulli shape process.
inline HierarchicalProcess<QuadCategory, Quadrilateral> category_process() {
    HierarchicalProcess<QuadCategory, Quadrilateral> p;
    p.sample_param = [](Rng& rng) { return kAllCategories[uniform_index(rng, kNumCategories)]; };
    p.sample_datum = [](const QuadCategory& c, Rng& rng) { return generate_exemplar(c, rng); };
    p.label_of = [](const QuadCategory& c) { return index_of(c); };
    return p;
}

struct OddballTrial {
    std::array<Quadrilateral, 6> items;
    int oddball_index = 0;
    QuadCategory category = QuadCategory::square;
};

/// Lowest vertex; ties (within 1e-9) go to the rightmost.
inline int lowest_rightmost_vertex(const Quadrilateral& q) {
    int best = 0;
    for (int i = 1; i < 4; ++i) {
        const Vec2 a = q[i], b = q[best];
        if (a.y < b.y - 1e-9 || (std::fabs(a.y - b.y) <= 1e-9 && a.x > b.x)) best = i;
    }
    return best;
}

struct TrialTransformRange {
    double min_scale = 0.6;
    double max_scale = 1.0;
};

/// Displaces the lowest-rightmost vertex of `reference` by 5%..25% of its
/// bounding-box diagonal in a random direction until the result is a valid
/// quadrilateral whose features differ from the reference (under the loose
/// tolerance, so the change is visible). For the `random` category the
/// reference has no features to break, so only validity is required.
inline Quadrilateral make_oddball(const Quadrilateral& reference, QuadCategory category, Rng& rng) {
    const auto ref_bits = extract_features(reference, ExtractionTolerances::loose());
    const auto [lo, hi] = reference.bbox();
    const double diag = length(hi - lo);
    const int moved = lowest_rightmost_vertex(reference);
    for (int attempt = 0; attempt < kMaxConstructionAttempts; ++attempt) {
        const double mag = uniform(rng, 0.05, 0.25) * diag, dir = uniform(rng, 0, 2 * std::numbers::pi);
        auto pts = reference.vertices();
        pts[static_cast<std::size_t>(moved)] = pts[static_cast<std::size_t>(moved)] + Vec2{mag * std::cos(dir), mag * std::sin(dir)};
        auto q = Quadrilateral::try_make(pts);
        if (!q) continue;
        if (category != QuadCategory::random && extract_features(*q, ExtractionTolerances::loose()) == ref_bits) continue;
        return *q;
    }
    throw ConstructionFailure("make_oddball: no valid perturbation found");
}

/// Five similarity-transformed copies of one exemplar plus one oddball, each
/// at an independent random scale and orientation; oddball slot uniform.
inline OddballTrial make_oddball_trial(QuadCategory category, Rng& rng, TrialTransformRange range = {}) {
    const Quadrilateral reference = generate_exemplar(category, rng);
    const Quadrilateral odd = make_oddball(reference, category, rng);
    const int slot = static_cast<int>(uniform_index(rng, 6));
    auto transformed = [&](const Quadrilateral& q) {
        const double s = uniform(rng, range.min_scale, range.max_scale);
        return apply_transform(q, s, uniform(rng, 0, 2 * std::numbers::pi));
    };
    std::array<std::optional<Quadrilateral>, 6> items;
    for (int i = 0; i < 6; ++i) items[static_cast<std::size_t>(i)] = transformed(i == slot ? odd : reference);
    return {{*items[0], *items[1], *items[2], *items[3], *items[4], *items[5]}, slot, category};
}

// ---------------------------------------------------------------------------
// Rasterization

/// Outline with 1-pixel strokes. The frame is centered on the bounding-box
/// center; with no `half_extent` the shape is fitted so its larger bbox side
/// spans 80% of the image (10% margins), otherwise world distance
/// `half_extent` from the center maps to 40% of the image width, so
/// relative sizes survive.
inline Raster rasterize_quad(const Quadrilateral& q, int size, std::optional<double> half_extent = std::nullopt) {
    if (size < 16) throw std::invalid_argument("rasterize_quad: size must be >= 16");
    const auto [lo, hi] = q.bbox();
    const Vec2 c = 0.5 * (lo + hi);
    const double h = half_extent.value_or(0.5 * std::max(hi.x - lo.x, hi.y - lo.y));
    if (!(h > 0)) throw std::invalid_argument("rasterize_quad: non-positive extent");
    const double s = 0.4 * size / h, mid = 0.5 * size;
    Raster r(size);
    for (int i = 0; i < 4; ++i) {
        const Vec2 a = q[i] - c, b = q[(i + 1) % 4] - c;
        draw_segment(r, mid + s * a.x, mid - s * a.y, mid + s * b.x, mid - s * b.y);
    }
    return r;
}

}  // namespace gensim::quad
