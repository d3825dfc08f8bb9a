#include <algorithm>
#include <cmath>
#include <numbers>

#include "llnn/data.hpp"
#include "llnn/random.hpp"

namespace llnn {

namespace {

struct Point {
    double x, y;
};
using Stroke = std::vector<Point>;

// Elliptical arc in pixel coordinates, angles in degrees, y pointing down.
Stroke arc(double cx, double cy, double rx, double ry, double from_deg, double to_deg, int segments = 24) {
    Stroke s;
    for (int i = 0; i <= segments; ++i) {
        const double a = (from_deg + (to_deg - from_deg) * i / segments) * std::numbers::pi / 180.0;
        s.push_back({cx + rx * std::cos(a), cy - ry * std::sin(a)});
    }
    return s;
}

Stroke ellipse(double cx, double cy, double rx, double ry) { return arc(cx, cy, rx, ry, 0.0, 360.0, 40); }

Stroke join(Stroke a, const Stroke& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// '0' is a slightly narrower ellipse than 'O'; '2' and 'Z' share the
// diagonal and bottom bar.
std::vector<Stroke> glyph_template(char c) {
    switch (c) {
        case '0':
            return {ellipse(14, 14, 5.8, 8.5)};
        case 'O':
            return {ellipse(14, 14, 6.5, 8.5)};
        case 'Q':
            return {ellipse(14, 14, 6.5, 8.5), {{15.5, 17.5}, {20.5, 23.0}}};
        case '1':
            return {{{14, 5.5}, {14, 22.5}}, {{14, 5.5}, {10.5, 9.0}}};
        case '2':
            return {join(arc(14, 10, 5.5, 4.5, 160, -30), {{8.5, 22.5}, {19.5, 22.5}})};
        case 'Z':
            return {{{8.5, 5.5}, {19.5, 5.5}, {8.5, 22.5}, {19.5, 22.5}}};
        case '3':
            return {arc(14, 9.75, 5.0, 4.25, 150, -90), arc(14, 18.25, 5.5, 4.25, 90, -150)};
        case 'P':
            return {{{9, 22.5}, {9, 5.5}}, join(join({{9, 5.5}}, arc(14.5, 9.5, 4.5, 4.0, 90, -90)), {{9, 13.5}})};
        case 'R':
            return {{{9, 22.5}, {9, 5.5}},
                    join(join({{9, 5.5}}, arc(14.5, 9.5, 4.5, 4.0, 90, -90)), {{9, 13.5}}),
                    {{13, 13.5}, {19, 22.5}}};
        case 'S':
            return {join(arc(14, 9.75, 5.0, 4.25, 30, 270), arc(14, 18.25, 5.5, 4.25, 90, -150))};
        default:
            throw ConfigError(std::string("synthetic_glyphs: unsupported character '") + c + "'");
    }
}

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

void render(const std::vector<Stroke>& strokes, Rng& rng, std::uint8_t* out) {
    const double scale = uniform(rng, 0.9, 1.1);
    const double sx = scale * uniform(rng, 0.95, 1.05);
    const double sy = scale;
    const double shear = uniform(rng, -0.2, 0.2);
    const double dx = uniform(rng, -2.0, 2.0);
    const double dy = uniform(rng, -2.0, 2.0);
    const double thickness = uniform(rng, 1.0, 2.0);
    const double wobble = 0.6;

    std::vector<Stroke> placed;
    for (const auto& s : strokes) {
        Stroke t;
        for (const auto& p : s) {
            const double x = p.x - 14.0, y = p.y - 14.0;
            t.push_back({14.0 + sx * x + shear * sy * y + dx, 14.0 + sy * y + dy});
        }
        // Low-amplitude jitter on stroke endpoints only keeps curves smooth.
        t.front().x += uniform(rng, -wobble, wobble);
        t.front().y += uniform(rng, -wobble, wobble);
        t.back().x += uniform(rng, -wobble, wobble);
        t.back().y += uniform(rng, -wobble, wobble);
        placed.push_back(std::move(t));
    }

    const double half = thickness / 2.0;
    for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t c = 0; c < kImageSide; ++c) {
            const Point p{static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5};
            double d = 1e9;
            for (const auto& s : placed) {
                for (std::size_t i = 0; i + 1 < s.size(); ++i) d = std::min(d, segment_distance(p, s[i], s[i + 1]));
            }
            const double v = std::clamp(half + 0.5 - d, 0.0, 1.0);
            out[r * kImageSide + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
}

LabeledImages render_split(const std::vector<char>& chars, std::size_t per_char, const CharMap& map, Rng& rng) {
    LabeledImages out;
    out.pixels.resize(chars.size() * per_char * kImagePixels);
    for (std::size_t k = 0; k < chars.size(); ++k) {
        const auto strokes = glyph_template(chars[k]);
        const std::uint32_t cls = map.class_of(static_cast<char32_t>(chars[k]));
        for (std::size_t i = 0; i < per_char; ++i) {
            render(strokes, rng, out.pixels.data() + out.labels.size() * kImagePixels);
            out.labels.push_back(cls);
        }
    }
    return out;
}

}  // namespace

CharMap synthetic_mapping() {
    CharMap map;
    const std::string order = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabdefghnqrt";
    for (std::size_t i = 0; i < order.size(); ++i) {
        map.add(static_cast<std::uint32_t>(i), static_cast<char32_t>(order[i]));
    }
    return map;
}

std::pair<LabeledImages, LabeledImages> synthetic_glyphs(const std::vector<char>& chars, std::size_t per_char,
                                                         std::uint64_t seed, std::size_t test_per_char) {
    if (per_char < 1) throw ConfigError("synthetic_glyphs: per_char must be >= 1");
    for (char c : chars) glyph_template(c);
    const CharMap map = synthetic_mapping();
    Rng train_rng(mix_seed(seed, 1));
    Rng test_rng(mix_seed(seed, 2));
    const std::size_t n_test = test_per_char == 0 ? per_char : test_per_char;
    return {render_split(chars, per_char, map, train_rng), render_split(chars, n_test, map, test_rng)};
}

DataSource synthetic_source(std::size_t train_per_char, std::size_t test_per_char, std::uint64_t seed) {
    DataSource src;
    const std::vector<char> chars(std::begin(kSyntheticChars), std::end(kSyntheticChars));
    auto [train, test] = synthetic_glyphs(chars, train_per_char, seed, test_per_char);
    src.train = std::move(train);
    src.test = std::move(test);
    src.mapping = synthetic_mapping();
    src.origin = "synthetic";
    return src;
}

}  // namespace llnn
