#pragma once

// Independent reference implementations and random generators shared by the
// unit tests and the acceptance binary. Nothing here calls the code under test
// beyond plain data accessors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "meqa/config.hpp"
#include "meqa/image.hpp"
#include "meqa/memory.hpp"

namespace oracle {

inline std::vector<float> unit(std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
    return out;
}

inline std::vector<float> random_unit(std::mt19937& rng, int dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (auto& x : v) x = g(rng);
    return unit(std::move(v));
}

// Unit vector near `center`: center + noise * gaussian.
inline std::vector<float> jitter(std::mt19937& rng, const std::vector<float>& center, double noise) {
    std::normal_distribution<double> g(0.0, noise);
    std::vector<double> v(center.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + g(rng);
    return unit(std::move(v));
}

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

inline double norm(const std::vector<float>& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    return dot(a, b) / (norm(a) * norm(b));
}

inline double entropy(const std::vector<float>& f) {
    double total = 0.0;
    for (float x : f) total += std::fabs(double(x));
    double h = 0.0;
    for (float x : f) {
        const double p = std::fabs(double(x)) / total;
        if (p > 0.0) h += -p * std::log(p);
    }
    return h / std::log(double(f.size()));
}

inline int dynamic_k(double h, int k_min, double beta, int k_max) {
    int k = static_cast<int>(std::ceil(k_min + beta * h - 1e-12));
    return std::min(std::max(k, k_min), k_max);
}

struct Hit {
    std::int64_t index;
    double similarity;
    bool operator==(const Hit&) const = default;
};

// Scans every record: both gates, then sort and cut at k.
inline std::vector<Hit> content_scan(const std::vector<meqa::VectorRecord>& records, int scene_id,
                                     const std::vector<float>& f_q, const meqa::RetrievalParams& p) {
    const double h = entropy(f_q);
    const int k = dynamic_k(h, p.k_min, p.beta, p.max_retrieval_num);
    std::vector<float> q = f_q;
    if (q.size() != records.front().embedding.size()) {
        const std::size_t d = q.size() / 2;
        std::vector<double> m(d);
        for (std::size_t i = 0; i < d; ++i) m[i] = (double(f_q[i]) + double(f_q[d + i])) / 2.0;
        q = unit(std::move(m));
    }
    std::vector<Hit> hits;
    for (const auto& r : records) {
        if (r.superseded || r.scene_id != scene_id) continue;
        double d2 = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) d2 += (double(q[i]) - r.embedding[i]) * (double(q[i]) - r.embedding[i]);
        const double c = cosine(q, r.embedding);
        if (std::sqrt(d2) < p.alpha_e * (1.0 + h) && c > p.alpha_s) hits.push_back({r.index, c});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.similarity > b.similarity; });
    if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
    return hits;
}

// Full sort of passing records, vote over the first top_k, lowest scene id wins ties.
inline std::optional<int> scene_scan(const std::vector<meqa::VectorRecord>& records, const std::vector<float>& f,
                                     int top_k, double threshold) {
    std::vector<std::pair<double, const meqa::VectorRecord*>> all;
    for (const auto& r : records)
        if (!r.superseded) {
            const double c = cosine(f, r.embedding);
            if (c > threshold) all.push_back({c, &r});
        }
    if (all.empty()) return std::nullopt;
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::map<int, int> count;
    for (std::size_t i = 0; i < all.size() && i < static_cast<std::size_t>(top_k); ++i) ++count[all[i].second->scene_id];
    int best_n = 0;
    for (const auto& [s, n] : count) best_n = std::max(best_n, n);
    for (const auto& [s, n] : count)
        if (n == best_n) return s;
    return std::nullopt;
}

// Textbook O(n*m) LCS table.
inline std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    return t[a.size()][b.size()];
}

// SSIM of two constant images with luma a and b: the variance terms vanish.
inline double constant_ssim(double a, double b) {
    const double c1 = (0.01 * 255) * (0.01 * 255);
    return (2 * a * b + c1) / (a * a + b * b + c1);
}

inline meqa::RgbImage random_image(std::mt19937& rng, int w, int h) {
    meqa::RgbImage img(w, h);
    std::uniform_int_distribution<int> u(0, 255);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.set(x, y, {static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng)),
                                                   static_cast<std::uint8_t>(u(rng))});
    return img;
}

inline std::string random_word(std::mt19937& rng) {
    static const char* words[] = {"red", "sofa", "kitchen", "tall", "wooden", "chair", "lamp", "in", "the", "near", "bed",
                                  "blue", "window", "small", "Ünïcode", "quote\"d", "back\\slash", "tab\there"};
    return words[std::uniform_int_distribution<std::size_t>(0, std::size(words) - 1)(rng)];
}

inline std::string random_phrase(std::mt19937& rng, int max_words = 5) {
    std::string s;
    const int n = std::uniform_int_distribution<int>(0, max_words)(rng);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + random_word(rng);
    return s;
}

// Any of the three payload shapes with random field content.
inline meqa::MemoryPayload random_payload(std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    if (kind == 0) {
        meqa::LocalMemoryEntry e;
        e.step = std::uniform_int_distribution<int>(0, 500)(rng);
        e.observation_ref = "step_" + std::to_string(e.step);
        const int nd = std::uniform_int_distribution<int>(0, 3)(rng);
        for (int i = 0; i < nd; ++i) {
            meqa::DetectionRecord d;
            d.caption = {random_word(rng), random_phrase(rng, 2), random_phrase(rng)};
            d.x0 = i;
            d.y0 = 2 * i;
            d.x1 = 10 + i;
            d.y1 = 20 + i;
            e.detections.push_back(d);
        }
        e.scene_caption.room = random_phrase(rng, 2);
        for (int i = 0; i < 2; ++i) e.scene_caption.objects.push_back(random_word(rng));
        e.scene_caption.description = random_phrase(rng);
        e.decision = random_phrase(rng, 3);
        e.pose = meqa::Pose({u(rng), u(rng), u(rng) / 10.0}, u(rng) / 7.0);
        e.space = random_phrase(rng, 3);
        if (nd == 0) e.warnings.push_back("missing scene caption");
        return e;
    }
    if (kind == 1) return meqa::GlobalMemoryEntry::make_room({random_phrase(rng, 2), {u(rng), u(rng), u(rng)}});
    return meqa::GlobalMemoryEntry::make_target(
        {{u(rng), u(rng), u(rng)}, random_word(rng), random_phrase(rng), meqa::Pose(u(rng), u(rng), u(rng) / 7.0)});
}

}  // namespace oracle
