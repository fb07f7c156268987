#include "meqa/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "meqa/errors.hpp"

namespace meqa {

double entropy(std::span<const float> f) {
    double total = 0.0;
    for (float x : f) total += std::abs(double(x));
    if (!(total > 0.0)) throw InvalidArgument("entropy of a zero vector is undefined");
    if (f.size() < 2) return 0.0;
    double h = 0.0;
    for (float x : f) {
        const double p = std::abs(double(x)) / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::clamp(h / std::log(static_cast<double>(f.size())), 0.0, 1.0);
}

std::optional<int> scene_retrieve(const MemoryStore& store, std::span<const float> f_obs,
                                  const RetrievalParams& params) {
    if (static_cast<int>(f_obs.size()) != store.dim())
        throw InvalidArgument("scene_retrieve: query dimension does not match the store");
    struct Scored {
        double sim;
        std::int64_t index;
        int scene;
    };
    std::vector<Scored> passing = store.read([&](const std::vector<VectorRecord>& records) {
        std::vector<Scored> out;
        for (const auto& r : records) {
            if (r.superseded) continue;
            const double s = cosine(f_obs, r.embedding);
            if (s > params.scene_sim_threshold) out.push_back({s, r.index, r.scene_id});
        }
        return out;
    });
    if (passing.empty()) return std::nullopt;
    const auto k = std::min<std::size_t>(passing.size(), static_cast<std::size_t>(params.top_k_scene));
    std::partial_sort(passing.begin(), passing.begin() + static_cast<std::ptrdiff_t>(k), passing.end(),
                      [](const Scored& a, const Scored& b) { return a.sim != b.sim ? a.sim > b.sim : a.index < b.index; });
    std::map<int, int> votes;
    for (std::size_t i = 0; i < k; ++i) ++votes[passing[i].scene];
    int best = votes.begin()->first, best_n = 0;
    for (const auto& [scene, n] : votes)
        if (n > best_n) {
            best = scene;
            best_n = n;
        }
    return best;
}

std::vector<float> fuse_query(std::span<const float> f_obs, std::span<const float> f_text) {
    if (f_obs.size() != f_text.size()) throw InvalidArgument("fuse_query: modality dimensions differ");
    std::vector<float> q(f_obs.begin(), f_obs.end());
    q.insert(q.end(), f_text.begin(), f_text.end());
    normalize(q);
    return q;
}

std::vector<float> reduce_query(std::span<const float> f_q) {
    if (f_q.size() % 2 != 0 || f_q.empty()) throw InvalidArgument("reduce_query: fused query must have even dimension");
    const std::size_t d = f_q.size() / 2;
    std::vector<float> r(d);
    for (std::size_t i = 0; i < d; ++i) r[i] = static_cast<float>(0.5 * (double(f_q[i]) + f_q[d + i]));
    normalize(r);
    return r;
}

int dynamic_k(double h, const RetrievalParams& params) {
    const double raw = std::ceil(params.k_min + params.beta * h - 1e-12);
    const double clamped = std::clamp(raw, double(params.k_min), double(params.max_retrieval_num));
    return static_cast<int>(clamped);
}

int dynamic_k(std::span<const float> f_q, const RetrievalParams& params) { return dynamic_k(entropy(f_q), params); }

RetrievalResult content_retrieve(const MemoryStore& store, int scene_id, std::span<const float> f_q,
                                 const RetrievalParams& params) {
    RetrievalResult result;
    result.entropy = entropy(f_q);
    result.k = dynamic_k(result.entropy, params);
    result.distance_gate = params.alpha_e * (1.0 + result.entropy);
    const std::vector<float> q = static_cast<int>(f_q.size()) == store.dim() ? std::vector<float>(f_q.begin(), f_q.end())
                                                                              : reduce_query(f_q);
    if (static_cast<int>(q.size()) != store.dim())
        throw InvalidArgument("content_retrieve: query dimension does not match the store");

    result.items = store.read([&](const std::vector<VectorRecord>& records) {
        std::vector<RetrievedMemory> out;
        for (const auto& r : records) {
            if (r.superseded || r.scene_id != scene_id) continue;
            double d2 = 0.0;
            for (std::size_t i = 0; i < q.size(); ++i) {
                const double diff = double(q[i]) - r.embedding[i];
                d2 += diff * diff;
            }
            const double dist = std::sqrt(d2);
            const double sim = cosine(q, r.embedding);
            if (dist < result.distance_gate && sim > params.alpha_s) out.push_back({r.index, sim, dist, r.payload});
        }
        return out;
    });
    std::sort(result.items.begin(), result.items.end(), [](const RetrievedMemory& a, const RetrievedMemory& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.index < b.index;
    });
    if (result.items.size() > static_cast<std::size_t>(result.k)) result.items.resize(static_cast<std::size_t>(result.k));
    return result;
}

}  // namespace meqa
