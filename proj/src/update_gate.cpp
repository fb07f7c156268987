#include "meqa/update_gate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "meqa/errors.hpp"

namespace meqa {

void ObservationCache::put(const std::string& ref, RgbImage image, std::vector<float> embedding) {
    items_[ref] = {std::move(image), std::move(embedding)};
}

const ObservationCache::Item* ObservationCache::find(const std::string& ref) const {
    const auto it = items_.find(ref);
    return it == items_.end() ? nullptr : &it->second;
}

bool novelty_gate(const Pose& pose, const MemoryStore& store, int scene_id, const UpdateParams& params) {
    return store.read([&](const std::vector<VectorRecord>& records) {
        double min_d = std::numeric_limits<double>::infinity();
        double min_a = std::numeric_limits<double>::infinity();
        for (const auto& r : records) {
            if (r.superseded || r.scene_id != scene_id) continue;
            const auto* e = std::get_if<LocalMemoryEntry>(&r.payload);
            if (!e) continue;
            min_d = std::min(min_d, (e->pose.position - pose.position).norm());
            min_a = std::min(min_a, angle_between(e->pose.yaw, pose.yaw));
        }
        return min_d > params.beta_p && min_a > params.beta_r();
    });
}

double ssim(const RgbImage& a, const RgbImage& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw InvalidArgument("ssim: image sizes differ");
    if (a.empty()) throw InvalidArgument("ssim: empty image");
    constexpr double L = 255.0;
    constexpr double c1 = (0.01 * L) * (0.01 * L);
    constexpr double c2 = (0.03 * L) * (0.03 * L);
    const auto ga = to_grayscale(a), gb = to_grayscale(b);
    const int w = a.width(), h = a.height();
    const int win_w = std::min(8, w), win_h = std::min(8, h);
    const int stride = 4;

    double total = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + win_h <= h; y0 += stride) {
        for (int x0 = 0; x0 + win_w <= w; x0 += stride) {
            double ma = 0, mb = 0;
            for (int y = y0; y < y0 + win_h; ++y)
                for (int x = x0; x < x0 + win_w; ++x) {
                    ma += ga[static_cast<std::size_t>(y) * w + x];
                    mb += gb[static_cast<std::size_t>(y) * w + x];
                }
            const double n = static_cast<double>(win_w * win_h);
            ma /= n;
            mb /= n;
            double va = 0, vb = 0, cov = 0;
            for (int y = y0; y < y0 + win_h; ++y)
                for (int x = x0; x < x0 + win_w; ++x) {
                    const double da = ga[static_cast<std::size_t>(y) * w + x] - ma;
                    const double db = gb[static_cast<std::size_t>(y) * w + x] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return total / windows;
}

double blended_similarity(const RgbImage& o_i, const RgbImage& o_j, std::span<const float> f_i,
                          std::span<const float> f_j, double alpha) {
    // Skip the unused term so alpha = 0 or 1 reproduces it exactly.
    const double s = alpha == 0.0 ? 0.0 : ssim(o_i, o_j);
    const double c = alpha == 1.0 ? 0.0 : cosine(f_i, f_j);
    return alpha * s + (1.0 - alpha) * c;
}

bool fov_gate(const RgbImage& obs, double black_ratio_max) { return black_fraction(obs) <= black_ratio_max; }

UpdateDecision should_update(const Pose& pose, const RgbImage& obs, std::span<const float> f_obs,
                             const MemoryStore& store, int scene_id, const UpdateParams& params,
                             const ObservationCache& cache) {
    UpdateDecision d;
    d.novel = novelty_gate(pose, store, scene_id, params);
    if (!d.novel) return d;

    std::vector<std::string> refs = store.read([&](const std::vector<VectorRecord>& records) {
        std::vector<std::string> out;
        for (const auto& r : records) {
            if (r.superseded || r.scene_id != scene_id) continue;
            if (const auto* e = std::get_if<LocalMemoryEntry>(&r.payload)) out.push_back(e->observation_ref);
        }
        return out;
    });
    double max_sim = -std::numeric_limits<double>::infinity();
    for (const auto& ref : refs) {
        const auto* item = cache.find(ref);
        if (!item || item->image.width() != obs.width() || item->image.height() != obs.height()) continue;
        max_sim = std::max(max_sim, blended_similarity(obs, item->image, f_obs, item->embedding, params.alpha));
    }
    d.max_similarity = std::isfinite(max_sim) ? max_sim : 0.0;
    d.dissimilar = !std::isfinite(max_sim) || max_sim < params.sim_threshold;
    if (!d.dissimilar) return d;

    d.clear_view = fov_gate(obs, params.black_ratio_max);
    d.update = d.clear_view;
    return d;
}

}  // namespace meqa
