#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "meqa/config.hpp"
#include "meqa/image.hpp"
#include "meqa/memory.hpp"

namespace meqa {

// Observation images and their image embeddings, keyed by observation_ref.
// Memory records carry only the handle; the episode keeps the pixels here.
class ObservationCache {
public:
    struct Item {
        RgbImage image;
        std::vector<float> embedding;
    };

    void put(const std::string& ref, RgbImage image, std::vector<float> embedding);
    const Item* find(const std::string& ref) const;
    std::size_t size() const { return items_.size(); }

private:
    std::unordered_map<std::string, Item> items_;
};

// Minimum distance and yaw difference both above their thresholds, over the
// poses of the scene's live local entries. Vacuously true on empty memory.
bool novelty_gate(const Pose& pose, const MemoryStore& store, int scene_id, const UpdateParams& params);

// Mean SSIM over 8x8 windows at stride 4 on BT.601 luma, L = 255.
double ssim(const RgbImage& a, const RgbImage& b);

double blended_similarity(const RgbImage& o_i, const RgbImage& o_j, std::span<const float> f_i,
                          std::span<const float> f_j, double alpha);

// Fraction of black pixels <= black_ratio_max.
bool fov_gate(const RgbImage& obs, double black_ratio_max);

struct UpdateDecision {
    bool update = false;
    bool novel = false;
    bool dissimilar = false;
    bool clear_view = false;
    double max_similarity = 0.0;  // over stored observations that were compared
};

// novelty, then dissimilarity, then view; short-circuits at the first failure.
UpdateDecision should_update(const Pose& pose, const RgbImage& obs, std::span<const float> f_obs,
                             const MemoryStore& store, int scene_id, const UpdateParams& params,
                             const ObservationCache& cache);

}  // namespace meqa
