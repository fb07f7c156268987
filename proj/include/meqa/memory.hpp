#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "meqa/geometry.hpp"

namespace meqa {

class Encoder;
class RgbImage;

struct SceneCaption {
    std::string room;
    std::vector<std::string> objects;
    std::string description;
    bool operator==(const SceneCaption&) const = default;
};

struct ObjectCaption {
    std::string category;
    std::string attribute;
    std::string description;
    bool operator==(const ObjectCaption&) const = default;
};

struct DetectionRecord {
    ObjectCaption caption;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool operator==(const DetectionRecord&) const = default;
};

struct LocalMemoryEntry {
    int step = 0;
    std::string observation_ref;
    std::vector<DetectionRecord> detections;
    SceneCaption scene_caption;
    std::string decision;
    Pose pose;
    std::string space;  // coarse description of where the agent stands
    std::vector<std::string> warnings;
    bool operator==(const LocalMemoryEntry&) const = default;
};

struct RoomAnnotation {
    std::string category;
    Vec3 observing_position;
    bool operator==(const RoomAnnotation&) const = default;
};

struct TargetAnnotation {
    Vec3 position;
    std::string category;
    std::string description;
    Pose observer;
    bool operator==(const TargetAnnotation&) const = default;
};

struct GlobalMemoryEntry {
    enum class Kind { room, target };
    Kind kind = Kind::room;
    std::optional<RoomAnnotation> room;
    std::optional<TargetAnnotation> target;

    static GlobalMemoryEntry make_room(RoomAnnotation r);
    static GlobalMemoryEntry make_target(TargetAnnotation t);
    void validate() const;
    bool operator==(const GlobalMemoryEntry&) const = default;
};

using MemoryPayload = std::variant<LocalMemoryEntry, GlobalMemoryEntry>;

// Fixed-order key: value lines; used both as encoder input and as prompt context.
std::string canonical_text(const LocalMemoryEntry& e);
std::string canonical_text(const GlobalMemoryEntry& e);
std::string canonical_text(const MemoryPayload& p);
std::string payload_kind(const MemoryPayload& p);  // "local", "room" or "target"

// Throws InvalidArgument when step < 0, a detection lacks a category, or the pose is not finite.
LocalMemoryEntry build_local_entry(const std::string& observation_ref, std::vector<DetectionRecord> detections,
                                   std::optional<SceneCaption> caption, int step, std::string decision,
                                   const Pose& pose, std::string space);

struct VectorRecord {
    std::int64_t index = 0;
    MemoryPayload payload;
    std::vector<float> embedding;  // unit norm
    int scene_id = 0;
    bool superseded = false;
    bool operator==(const VectorRecord&) const = default;
};

// Dense-vector library. Readers share, writers are exclusive.
class MemoryStore {
public:
    explicit MemoryStore(int dim = 768);
    MemoryStore(const MemoryStore& other);
    MemoryStore& operator=(const MemoryStore& other);

    int dim() const { return dim_; }
    std::size_t size() const;
    std::int64_t next_index() const;
    std::vector<int> scene_ids() const;

    // Embedding must have the store dimension; it is normalized on insert.
    std::int64_t insert(MemoryPayload payload, int scene_id, std::vector<float> embedding);
    // Encodes the canonical text, averaged with the image embedding when an image is given.
    std::int64_t insert(MemoryPayload payload, int scene_id, const Encoder& encoder, const RgbImage* image = nullptr);
    void supersede(std::int64_t index);

    std::optional<VectorRecord> get(std::int64_t index) const;

    // Runs f(records) under the shared lock.
    template <typename F>
    auto read(F&& f) const {
        std::shared_lock lock(mu_);
        return f(static_cast<const std::vector<VectorRecord>&>(records_));
    }

    void persist(const std::filesystem::path& dir) const;
    static MemoryStore load(const std::filesystem::path& dir);

    bool operator==(const MemoryStore& other) const;

private:
    mutable std::shared_mutex mu_;
    int dim_;
    std::int64_t next_index_ = 0;
    std::vector<VectorRecord> records_;
    std::map<std::int64_t, std::size_t> by_index_;
};

// Normalizes in place; throws InvalidArgument on a zero or non-finite vector.
void normalize(std::vector<float>& v);
double cosine(std::span<const float> a, std::span<const float> b);

}  // namespace meqa
