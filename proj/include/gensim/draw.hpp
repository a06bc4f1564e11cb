#pragma once

// Turtle-graphics drawing language: programs, weighted grammars, sampling,
// interpretation, rasterization and primitive counts.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "gensim/core.hpp"
#include "gensim/error.hpp"
#include "gensim/raster.hpp"
#include "gensim/rng.hpp"

namespace gensim::draw {

enum class NodeKind { line, arc, turn, concat, repeat };

inline constexpr std::array<NodeKind, 5> kNodeKinds = {NodeKind::line, NodeKind::arc, NodeKind::turn,
                                                      NodeKind::concat, NodeKind::repeat};

inline bool is_motor(NodeKind k) { return k == NodeKind::line || k == NodeKind::arc || k == NodeKind::turn; }

inline constexpr int kMinRepeat = 2;
inline constexpr int kMaxRepeat = 9;

/// Program tree. Line(length), Arc(radius, sweep in degrees, turning left),
/// Turn(angle in degrees, positive = left), Concat(a, b), Repeat(n, body).
struct Program {
    NodeKind kind = NodeKind::line;
    double a = 1.0;  // length | radius | angle
    double b = 0.0;  // arc sweep
    int count = 0;   // repeat count
    std::vector<Program> children;

    static Program line(double length) { return {NodeKind::line, length, 0.0, 0, {}}; }
    static Program arc(double radius, double sweep_deg) { return {NodeKind::arc, radius, sweep_deg, 0, {}}; }
    static Program turn(double angle_deg) { return {NodeKind::turn, angle_deg, 0.0, 0, {}}; }
    static Program concat(Program x, Program y) {
        Program p{NodeKind::concat, 0.0, 0.0, 0, {}};
        p.children.push_back(std::move(x));
        p.children.push_back(std::move(y));
        return p;
    }
    static Program repeat(int n, Program body) {
        if (n < kMinRepeat || n > kMaxRepeat) throw std::invalid_argument("repeat count must be in 2..9");
        Program p{NodeKind::repeat, 0.0, 0.0, n, {}};
        p.children.push_back(std::move(body));
        return p;
    }

    bool operator==(const Program&) const = default;
};

inline int depth(const Program& p) {
    int d = 0;
    for (const Program& c : p.children) d = std::max(d, depth(c));
    return d + 1;
}

inline std::size_t node_count(const Program& p) {
    std::size_t n = 1;
    for (const Program& c : p.children) n += node_count(c);
    return n;
}

struct PrimitiveCounts {
    int motor = 0;
    int control = 0;
    bool operator==(const PrimitiveCounts&) const = default;
};

/// Static tree counts; Repeat bodies are counted once.
inline PrimitiveCounts count_primitives(const Program& p) {
    PrimitiveCounts c;
    if (is_motor(p.kind)) ++c.motor;
    else ++c.control;
    for (const Program& ch : p.children) {
        const auto s = count_primitives(ch);
        c.motor += s.motor;
        c.control += s.control;
    }
    return c;
}

inline int count_kind(const Program& p, NodeKind k) {
    int n = p.kind == k;
    for (const Program& c : p.children) n += count_kind(c, k);
    return n;
}

/// Number of Line and Arc strokes after unrolling every Repeat.
inline double unrolled_stroke_count(const Program& p) {
    switch (p.kind) {
        case NodeKind::line:
        case NodeKind::arc: return 1.0;
        case NodeKind::turn: return 0.0;
        case NodeKind::concat: return unrolled_stroke_count(p.children[0]) + unrolled_stroke_count(p.children[1]);
        case NodeKind::repeat: return p.count * unrolled_stroke_count(p.children[0]);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// S-expressions

inline std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline std::string to_sexpr(const Program& p) {
    switch (p.kind) {
        case NodeKind::line: return "(line " + format_number(p.a) + ")";
        case NodeKind::arc: return "(arc " + format_number(p.a) + " " + format_number(p.b) + ")";
        case NodeKind::turn: return "(turn " + format_number(p.a) + ")";
        case NodeKind::concat: return "(concat " + to_sexpr(p.children[0]) + " " + to_sexpr(p.children[1]) + ")";
        case NodeKind::repeat: return "(repeat " + std::to_string(p.count) + " " + to_sexpr(p.children[0]) + ")";
    }
    return {};
}

namespace detail {

class SexprParser {
public:
    explicit SexprParser(std::string_view s) : s_(s) {}

    Program parse() {
        Program p = node();
        skip();
        if (i_ != s_.size()) fail("trailing input");
        return p;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("program parse error at " + std::to_string(i_) + ": " + what);
    }
    void skip() {
        while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    }
    void expect(char c) {
        skip();
        if (i_ >= s_.size() || s_[i_] != c) fail(std::string("expected '") + c + "'");
        ++i_;
    }
    std::string_view token() {
        skip();
        const std::size_t b = i_;
        while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != '(' && s_[i_] != ')') ++i_;
        if (b == i_) fail("expected token");
        return s_.substr(b, i_ - b);
    }
    double number() {
        const std::string t(token());
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            fail("bad number '" + t + "'");
        }
        if (used != t.size() || !std::isfinite(v)) fail("bad number '" + t + "'");
        return v;
    }
    Program node() {
        expect('(');
        const std::string_view head = token();
        Program p;
        if (head == "line") p = Program::line(number());
        else if (head == "turn") p = Program::turn(number());
        else if (head == "arc") {
            const double r = number();
            p = Program::arc(r, number());
        } else if (head == "concat") {
            Program x = node();
            p = Program::concat(std::move(x), node());
        } else if (head == "repeat") {
            const double n = number();
            if (n != std::floor(n)) fail("repeat count must be an integer");
            p = Program::repeat(static_cast<int>(n), node());
        } else fail("unknown form '" + std::string(head) + "'");
        expect(')');
        return p;
    }

    std::string_view s_;
    std::size_t i_ = 0;
};

}  // namespace detail

inline Program parse_sexpr(std::string_view text) { return detail::SexprParser(text).parse(); }

// ---------------------------------------------------------------------------
// Grammars

/// Discrete distribution over parameter values.
struct WeightedSet {
    std::vector<double> values;
    std::vector<double> weights;

    double sample(Rng& rng) const {
        return values[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng)];
    }
    void validate(const char* what) const {
        if (values.empty() || values.size() != weights.size())
            throw std::invalid_argument(std::string("grammar: bad parameter set ") + what);
        for (double w : weights)
            if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument(std::string("grammar: bad weight in ") + what);
        if (*std::max_element(weights.begin(), weights.end()) <= 0)
            throw std::invalid_argument(std::string("grammar: all weights zero in ") + what);
    }
};

struct Grammar {
    // Production weights, indexed by NodeKind.
    std::array<double, 5> production{1, 1, 1, 1, 1};
    WeightedSet lengths;
    WeightedSet radii;
    WeightedSet sweeps;
    WeightedSet turns;
    int depth_cap = 6;

    double weight(NodeKind k) const { return production[static_cast<std::size_t>(k)]; }

    /// Weights may be zero (a style that never uses a primitive) but each
    /// choice point needs some positive mass.
    void validate() const {
        for (double w : production)
            if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument("grammar: bad production weight");
        if (weight(NodeKind::line) + weight(NodeKind::arc) + weight(NodeKind::turn) <= 0)
            throw std::invalid_argument("grammar: motor primitives all have zero weight");
        if (depth_cap < 1) throw std::invalid_argument("grammar: depth_cap must be >= 1");
        lengths.validate("lengths");
        radii.validate("radii");
        sweeps.validate("sweeps");
        turns.validate("turns");
    }
};

enum class Style { greek = 0, celtic = 1 };

inline std::string_view style_name(Style s) { return s == Style::greek ? "greek" : "celtic"; }

inline Style style_from_name(std::string_view n) {
    if (n == "greek") return Style::greek;
    if (n == "celtic") return Style::celtic;
    throw std::invalid_argument("unknown style: " + std::string(n));
}

/// Both styles share one primitive inventory and one set of parameter
/// values; only the weights differ. Greek: no arcs, right-angle turns.
/// Celtic: arcs dominate, few straight lines.
inline Grammar builtin_grammar(Style style) {
    Grammar g;
    g.lengths = {{0.5, 1.0, 2.0}, {1, 1, 1}};
    g.radii = {{0.5, 1.0}, {1, 1}};
    g.sweeps = {{90, 180, 270, 360}, {1, 1, 1, 1}};
    g.turns.values = {-135, -90, -45, 45, 90, 135};
    g.depth_cap = 6;
    if (style == Style::greek) {
        g.production = {3.0, 0.0, 2.0, 4.0, 2.0};
        g.turns.weights = {0, 1, 0, 0, 1, 0};
    } else {
        g.production = {0.1, 4.0, 0.2, 4.0, 2.0};
        g.turns.weights = {1, 1, 1, 1, 1, 1};
    }
    return g;
}

namespace detail {

inline NodeKind sample_kind(const Grammar& g, bool motor_only, Rng& rng) {
    std::array<double, 5> w = g.production;
    if (motor_only) w[3] = w[4] = 0.0;
    return kNodeKinds[std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng)];
}

inline Program sample_at(const Grammar& g, int level, Rng& rng) {
    const NodeKind k = sample_kind(g, level >= g.depth_cap, rng);
    switch (k) {
        case NodeKind::line: return Program::line(g.lengths.sample(rng));
        case NodeKind::arc: {
            const double r = g.radii.sample(rng);
            return Program::arc(r, g.sweeps.sample(rng));
        }
        case NodeKind::turn: return Program::turn(g.turns.sample(rng));
        case NodeKind::concat: {
            Program x = sample_at(g, level + 1, rng);
            return Program::concat(std::move(x), sample_at(g, level + 1, rng));
        }
        case NodeKind::repeat: {
            const int n = kMinRepeat + static_cast<int>(uniform_index(rng, kMaxRepeat - kMinRepeat + 1));
            return Program::repeat(n, sample_at(g, level + 1, rng));
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace detail

/// Top-down sampling by normalized production weights; nodes at depth
/// depth_cap (root = 1) are restricted to motor primitives.
inline Program sample_program(const Grammar& g, Rng& rng) {
    g.validate();
    return detail::sample_at(g, 1, rng);
}

// ---------------------------------------------------------------------------
// Interpretation

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

struct LineStroke {
    Point from, to;
};

/// Counterclockwise arc: center, radius, start angle of the radius vector
/// (degrees) and sweep (degrees).
struct ArcStroke {
    Point center;
    double radius;
    double start_deg;
    double sweep_deg;
};

using Stroke = std::variant<LineStroke, ArcStroke>;

struct TurtleState {
    Point position;
    double heading_deg = 0.0;  // in [0, 360)
};

struct StrokePath {
    std::vector<Stroke> strokes;
    TurtleState end;

    bool empty() const noexcept { return strokes.empty(); }
};

namespace detail {

/// cos/sin in degrees, exact at multiples of 90.
inline Point unit_dir(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d < 0) d += 360.0;
    if (d == 0.0) return {1, 0};
    if (d == 90.0) return {0, 1};
    if (d == 180.0) return {-1, 0};
    if (d == 270.0) return {0, -1};
    const double r = d * std::numbers::pi / 180.0;
    return {std::cos(r), std::sin(r)};
}

inline double wrap_deg(double d) {
    d = std::fmod(d, 360.0);
    return d < 0 ? d + 360.0 : d;
}

inline Point arc_point(const ArcStroke& a, double deg) {
    const Point u = unit_dir(a.start_deg + deg);
    return {a.center.x + a.radius * u.x, a.center.y + a.radius * u.y};
}

inline void run(const Program& p, TurtleState& s, std::vector<Stroke>& out) {
    switch (p.kind) {
        case NodeKind::line: {
            const Point u = unit_dir(s.heading_deg);
            const Point next{s.position.x + p.a * u.x, s.position.y + p.a * u.y};
            out.push_back(LineStroke{s.position, next});
            s.position = next;
            break;
        }
        case NodeKind::arc: {
            const Point left = unit_dir(s.heading_deg + 90.0);
            const ArcStroke a{{s.position.x + p.a * left.x, s.position.y + p.a * left.y}, p.a,
                              wrap_deg(s.heading_deg - 90.0), p.b};
            out.push_back(a);
            s.position = arc_point(a, p.b);
            s.heading_deg = wrap_deg(s.heading_deg + p.b);
            break;
        }
        case NodeKind::turn: s.heading_deg = wrap_deg(s.heading_deg + p.a); break;
        case NodeKind::concat:
            run(p.children[0], s, out);
            run(p.children[1], s, out);
            break;
        case NodeKind::repeat:
            for (int i = 0; i < p.count; ++i) run(p.children[0], s, out);
            break;
    }
}

}  // namespace detail

/// Turtle semantics starting at the origin heading +x.
inline StrokePath interpret(const Program& p, TurtleState start = {}) {
    StrokePath path;
    path.end = start;
    detail::run(p, path.end, path.strokes);
    return path;
}

/// Every stroke as a chain of straight pieces; arcs split into pieces of at
/// most `max_step_deg`.
inline std::vector<std::pair<Point, Point>> flatten(const StrokePath& path, double max_step_deg = 5.0) {
    std::vector<std::pair<Point, Point>> segs;
    for (const Stroke& s : path.strokes) {
        if (const auto* l = std::get_if<LineStroke>(&s)) {
            segs.emplace_back(l->from, l->to);
            continue;
        }
        const auto& a = std::get<ArcStroke>(s);
        const int n = std::max(1, static_cast<int>(std::ceil(std::fabs(a.sweep_deg) / max_step_deg)));
        Point prev = detail::arc_point(a, 0.0);
        for (int i = 1; i <= n; ++i) {
            const Point next = detail::arc_point(a, a.sweep_deg * i / n);
            segs.emplace_back(prev, next);
            prev = next;
        }
    }
    return segs;
}

/// Fits the path's bounding box into the central 80% of the image
/// (aspect preserved, centered) and draws 1-pixel strokes, ink 1 on 0.
/// An empty path gives an all-zero raster.
inline Raster rasterize_path(const StrokePath& path, int size) {
    if (size < 32) throw std::invalid_argument("rasterize_path: size must be >= 32");
    Raster r(size);
    const auto segs = flatten(path);
    if (segs.empty()) return r;
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (const auto& [a, b] : segs)
        for (const Point& p : {a, b}) {
            x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
        }
    const double extent = std::max(x1 - x0, y1 - y0);
    const double scale = extent > 0 ? 0.8 * size / extent : 0.0;
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1), mid = 0.5 * size;
    for (const auto& [a, b] : segs)
        draw_segment(r, mid + scale * (a.x - cx), mid - scale * (a.y - cy), mid + scale * (b.x - cx),
                     mid - scale * (b.y - cy));
    return r;
}

// ---------------------------------------------------------------------------
// Datasets

struct Drawing {
    Program program;
    Style style = Style::greek;
    Raster raster;
};

inline constexpr double kDefaultMaxStrokes = 2000;
inline constexpr int kMaxDrawAttempts = 10000;

/// Samples until the program draws something and unrolls to at most
/// `max_strokes` strokes.
inline Program sample_drawable_program(const Grammar& g, Rng& rng, double max_strokes = kDefaultMaxStrokes) {
    for (int i = 0; i < kMaxDrawAttempts; ++i) {
        Program p = sample_program(g, rng);
        const double n = unrolled_stroke_count(p);
        if (n >= 1 && n <= max_strokes) return p;
    }
    throw ConstructionFailure("sample_drawable_program: no drawable program found");
}

inline Drawing sample_drawing(Style style, int size, Rng& rng) {
    Program p = sample_drawable_program(builtin_grammar(style), rng);
    Raster r = rasterize_path(interpret(p), size);
    return {std::move(p), style, std::move(r)};
}

/// theta = style (uniform over the two); datum = a drawing from that style's grammar.
inline HierarchicalProcess<Style, Drawing> style_process(int size) {
    HierarchicalProcess<Style, Drawing> p;
    p.sample_param = [](Rng& rng) { return uniform_index(rng, 2) == 0 ? Style::greek : Style::celtic; };
    p.sample_datum = [size](const Style& s, Rng& rng) { return sample_drawing(s, size, rng); };
    p.label_of = [](const Style& s) { return static_cast<int>(s); };
    return p;
}

}  // namespace gensim::draw
