#include "meqa/encoder.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_map>

#include "meqa/errors.hpp"
#include "meqa/simulator.hpp"

namespace meqa {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

// Order fixes each word's basis axis; append only.
const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> v = {
        // palette
        "white", "red", "yellow", "blue", "green", "brown", "gray", "orange", "purple", "pink", "black", "beige",
        // structure seen in images
        "wall", "floor",
        // categories
        "sofa", "table", "bookshelf", "plant", "chair", "refrigerator", "counter", "bed", "lamp", "desk", "towel",
        "bathtub", "tv", "cabinet", "sink", "toilet", "shelf", "rug", "fridge", "couch",
        // rooms
        "living", "study", "kitchen", "dining", "bedroom", "office", "bathroom", "hallway", "garage",
        // attributes
        "fabric", "leather", "wooden", "tall", "potted", "steel", "stone", "round", "plastic", "large", "small",
        "double", "cotton", "seat", "metal", "glass",
    };
    return v;
}

const std::unordered_map<std::string, int>& vocab_index() {
    static const std::unordered_map<std::string, int> m = [] {
        std::unordered_map<std::string, int> out;
        const auto& v = vocabulary();
        for (std::size_t i = 0; i < v.size(); ++i) out.emplace(v[i], static_cast<int>(i));
        return out;
    }();
    return m;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> s = {
        "a", "an", "the", "in", "on", "at", "of", "is", "are", "was", "were", "be", "and", "or", "to", "with",
        "what", "which", "how", "many", "much", "same", "color", "colour", "room", "rooms", "there", "this",
        "that", "these", "those", "it", "its", "does", "do", "did", "you", "your", "from", "for", "by", "as",
        "than", "kind", "step", "objects", "object", "description", "detection", "cate", "attr", "desc",
        "decision", "state", "position", "observer", "category", "yes", "no", "local", "target", "m", "deg",
        "forward", "backward", "left", "right", "back", "none", "unknown", "warning", "near", "next", "one",
    };
    return s;
}

// Base colors an image pixel can be explained by: palette, then wall, then floor.
struct BaseColor {
    Rgb color;
    int axis;
};

std::vector<BaseColor> base_colors() {
    std::vector<BaseColor> out;
    const auto& idx = vocab_index();
    for (const char* name : {"white", "red", "yellow", "blue", "green", "brown", "gray", "orange", "purple", "pink",
                             "black", "beige"})
        out.push_back({*palette_color(name), idx.at(name)});
    out.push_back({kWallColor, idx.at("wall")});
    out.push_back({kFloorColor, idx.at("floor")});
    return out;
}

constexpr double kUnknownTokenWeight = 0.35;
constexpr double kThumbnailWeight = 0.3;
constexpr int kThumbW = 8;
constexpr int kThumbH = 6;

}  // namespace

MockEncoder::MockEncoder(int dim, Mode mode, std::uint64_t seed) : dim_(dim), mode_(mode), seed_(seed) {
    if (dim <= 0) throw InvalidArgument("encoder dimension must be positive");
    if (mode == Mode::semantic && dim < static_cast<int>(vocabulary().size()))
        throw InvalidArgument("semantic encoder needs dim >= " + std::to_string(vocabulary().size()));
    for (int i = 0; i < kThumbW * kThumbH; ++i)
        thumb_dirs_.push_back(hashed_direction(0xA5A5A5A5ull + static_cast<std::uint64_t>(i)));
}

MockEncoder::Mode MockEncoder::parse_mode(const std::string& name) {
    if (name == "semantic") return Mode::semantic;
    if (name == "hash") return Mode::hash;
    throw InvalidArgument("unknown encoder mode '" + name + "' (expected semantic or hash)");
}

std::vector<double> MockEncoder::hashed_direction(std::uint64_t key) const {
    std::uint64_t state = key ^ (seed_ * 0xD1B54A32D192ED03ull);
    std::vector<double> v(static_cast<std::size_t>(dim_));
    double n2 = 0.0;
    for (int i = 0; i < dim_; i += 2) {
        // Box-Muller on 53-bit uniforms; portable across standard libraries.
        const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        v[static_cast<std::size_t>(i)] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < dim_) v[static_cast<std::size_t>(i) + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    for (double x : v) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
    return v;
}

std::vector<double> MockEncoder::token_vector(const std::string& token) const {
    if (mode_ == Mode::hash) return hashed_direction(fnv1a64(token));
    const auto& idx = vocab_index();
    auto it = idx.find(token);
    if (it == idx.end() && token.size() > 1 && token.back() == 's') it = idx.find(token.substr(0, token.size() - 1));
    if (it != idx.end()) {
        std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
        v[static_cast<std::size_t>(it->second)] = 1.0;
        return v;
    }
    auto v = hashed_direction(fnv1a64(token));
    for (double& x : v) x *= kUnknownTokenWeight;
    return v;
}

namespace {

std::vector<float> to_unit(const std::vector<double>& v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (!(n2 > 0.0)) throw InvalidArgument("cannot normalize a zero embedding");
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& v, double s) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * v[i];
}

}  // namespace

std::vector<float> MockEncoder::encode_text(const std::string& text) const {
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
    bool any = false;
    for (const auto& tok : tokenize(text)) {
        if (mode_ == Mode::semantic) {
            if (stopwords().count(tok)) continue;
            if (std::any_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
                continue;
        }
        add_scaled(acc, token_vector(tok), 1.0);
        any = true;
    }
    if (!any) return to_unit(hashed_direction(fnv1a64("<empty>" + text)));
    double n2 = 0.0;
    for (double x : acc) n2 += x * x;
    if (n2 < 1e-24) return to_unit(hashed_direction(fnv1a64("<cancel>" + text)));
    return to_unit(acc);
}

std::vector<float> MockEncoder::encode_image(const RgbImage& image) const {
    if (image.empty()) throw InvalidArgument("cannot encode an empty image");
    std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);

    // Thumbnail: block-mean luma, centered, through a seeded projection.
    const auto gray = to_grayscale(image);
    std::vector<double> thumb(static_cast<std::size_t>(dim_), 0.0);
    for (int by = 0; by < kThumbH; ++by)
        for (int bx = 0; bx < kThumbW; ++bx) {
            const int x0 = bx * image.width() / kThumbW, x1 = std::max(x0 + 1, (bx + 1) * image.width() / kThumbW);
            const int y0 = by * image.height() / kThumbH, y1 = std::max(y0 + 1, (by + 1) * image.height() / kThumbH);
            double sum = 0.0;
            int n = 0;
            for (int y = y0; y < std::min(y1, image.height()); ++y)
                for (int x = x0; x < std::min(x1, image.width()); ++x) {
                    sum += gray[static_cast<std::size_t>(y) * image.width() + x];
                    ++n;
                }
            const double value = (n ? sum / n : 0.0) / 255.0 - 0.5;
            add_scaled(thumb, thumb_dirs_[static_cast<std::size_t>(by * kThumbW + bx)], value);
        }
    double tn = 0.0;
    for (double x : thumb) tn += x * x;
    tn = std::sqrt(tn);

    if (mode_ == Mode::hash) {
        if (tn < 1e-12) return to_unit(hashed_direction(0x5EEDull));
        return to_unit(thumb);
    }

    // Color votes: each non-black pixel explained by the closest shaded base color.
    static const std::vector<BaseColor> bases = base_colors();
    std::vector<double> votes(bases.size(), 0.0);
    const auto bytes = image.bytes();
    for (std::size_t i = 0; i + 2 < bytes.size(); i += 3) {
        const double p[3] = {double(bytes[i]), double(bytes[i + 1]), double(bytes[i + 2])};
        if (p[0] < 8 && p[1] < 8 && p[2] < 8) continue;
        double best = 1e18;
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < bases.size(); ++k) {
            const double c[3] = {double(bases[k].color.r), double(bases[k].color.g), double(bases[k].color.b)};
            const double cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
            const double s = std::clamp((p[0] * c[0] + p[1] * c[1] + p[2] * c[2]) / cc, 0.5, 1.0);
            const double r = std::hypot(p[0] - s * c[0], p[1] - s * c[1], p[2] - s * c[2]);
            if (r < best) {
                best = r;
                best_k = k;
            }
        }
        if (best < 6.0) votes[best_k] += 1.0;
    }
    double vn = 0.0;
    for (double v : votes) vn += v * v;
    vn = std::sqrt(vn);
    if (vn > 0.0)
        for (std::size_t k = 0; k < bases.size(); ++k) acc[static_cast<std::size_t>(bases[k].axis)] += votes[k] / vn;
    if (tn > 1e-12) add_scaled(acc, thumb, kThumbnailWeight / tn);
    double an = 0.0;
    for (double x : acc) an += x * x;
    if (an < 1e-24) return to_unit(hashed_direction(0x5EEDull));
    return to_unit(acc);
}

}  // namespace meqa
