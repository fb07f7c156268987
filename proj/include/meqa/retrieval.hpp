#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "meqa/config.hpp"
#include "meqa/memory.hpp"

namespace meqa {

// Normalized Shannon entropy of the magnitude distribution p_i = |f_i| / sum|f_j|.
// 0 for a one-hot vector, 1 for uniform magnitudes. Throws on a zero vector.
double entropy(std::span<const float> f);

// Scene whose records dominate the top_k_scene most similar ones above the
// threshold; ties go to the lower scene id. Empty when nothing passes.
std::optional<int> scene_retrieve(const MemoryStore& store, std::span<const float> f_obs,
                                  const RetrievalParams& params);

// normalize(concat(f_obs, f_text)).
std::vector<float> fuse_query(std::span<const float> f_obs, std::span<const float> f_text);

// Brings a 2D fused query down to record dimension: mean of its halves, renormalized.
std::vector<float> reduce_query(std::span<const float> f_q);

int dynamic_k(double entropy_value, const RetrievalParams& params);
int dynamic_k(std::span<const float> f_q, const RetrievalParams& params);

struct RetrievedMemory {
    std::int64_t index = 0;
    double similarity = 0.0;
    double distance = 0.0;
    MemoryPayload payload;
};

struct RetrievalResult {
    std::vector<RetrievedMemory> items;  // non-increasing similarity, ties by lower index
    int k = 0;
    double entropy = 0.0;
    double distance_gate = 0.0;
};

RetrievalResult content_retrieve(const MemoryStore& store, int scene_id, std::span<const float> f_q,
                                 const RetrievalParams& params);

}  // namespace meqa
