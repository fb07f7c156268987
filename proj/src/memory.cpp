#include "meqa/memory.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "meqa/encoder.hpp"
#include "meqa/errors.hpp"
#include "meqa/image.hpp"

namespace meqa {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Entries

GlobalMemoryEntry GlobalMemoryEntry::make_room(RoomAnnotation r) {
    GlobalMemoryEntry e;
    e.kind = Kind::room;
    e.room = std::move(r);
    e.validate();
    return e;
}

GlobalMemoryEntry GlobalMemoryEntry::make_target(TargetAnnotation t) {
    GlobalMemoryEntry e;
    e.kind = Kind::target;
    e.target = std::move(t);
    e.validate();
    return e;
}

void GlobalMemoryEntry::validate() const {
    if (kind == Kind::room) {
        if (!room || target) throw InvalidArgument("room entry must carry exactly a room annotation");
        if (!room->observing_position.finite()) throw InvalidArgument("room observing position must be finite");
    } else {
        if (!target || room) throw InvalidArgument("target entry must carry exactly a target annotation");
        if (!target->position.finite() || !target->observer.finite())
            throw InvalidArgument("target positions must be finite");
    }
}

namespace {

std::string fmt(const char* f, double a, double b) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::string fmt_pose(const Pose& p) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "(%.2f, %.2f, %.0f deg)", p.position.x, p.position.y, rad2deg(p.yaw));
    return buf;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

}  // namespace

std::string canonical_text(const LocalMemoryEntry& e) {
    std::string out = "kind: local\nstep: " + std::to_string(e.step) + "\n";
    out += "room: " + e.scene_caption.room + "\n";
    out += "objects: " + join(e.scene_caption.objects, ", ") + "\n";
    out += "description: " + e.scene_caption.description + "\n";
    for (const auto& d : e.detections)
        out += "detection: cate=" + d.caption.category + "; attr=" + d.caption.attribute + "; desc=" +
               d.caption.description + "\n";
    out += "decision: " + e.decision + "\n";
    out += "state: " + fmt_pose(e.pose) + " " + e.space + "\n";
    return out;
}

std::string canonical_text(const GlobalMemoryEntry& e) {
    if (e.kind == GlobalMemoryEntry::Kind::room) {
        const auto& r = *e.room;
        return "kind: room\nroom: " + r.category + "\nposition: " +
               fmt("(%.2f, %.2f)", r.observing_position.x, r.observing_position.y) + "\n";
    }
    const auto& t = *e.target;
    return "kind: target\ncategory: " + t.category + "\ndescription: " + t.description +
           "\nposition: " + fmt("(%.2f, %.2f)", t.position.x, t.position.y) + "\nobserver: " + fmt_pose(t.observer) +
           "\n";
}

std::string canonical_text(const MemoryPayload& p) {
    return std::visit([](const auto& e) { return canonical_text(e); }, p);
}

std::string payload_kind(const MemoryPayload& p) {
    if (std::holds_alternative<LocalMemoryEntry>(p)) return "local";
    return std::get<GlobalMemoryEntry>(p).kind == GlobalMemoryEntry::Kind::room ? "room" : "target";
}

LocalMemoryEntry build_local_entry(const std::string& observation_ref, std::vector<DetectionRecord> detections,
                                   std::optional<SceneCaption> caption, int step, std::string decision,
                                   const Pose& pose, std::string space) {
    if (step < 0) throw InvalidArgument("local memory step must be >= 0, got " + std::to_string(step));
    if (!pose.finite()) throw InvalidArgument("local memory pose must be finite");
    for (std::size_t i = 0; i < detections.size(); ++i)
        if (detections[i].caption.category.empty())
            throw InvalidArgument("detection " + std::to_string(i) + " has an empty category");
    LocalMemoryEntry e;
    e.step = step;
    e.observation_ref = observation_ref;
    e.detections = std::move(detections);
    if (caption) {
        e.scene_caption = std::move(*caption);
    } else {
        e.warnings.push_back("missing scene caption");
    }
    e.decision = std::move(decision);
    e.pose = pose;
    e.space = std::move(space);
    return e;
}

// ---------------------------------------------------------------------------
// Vectors

void normalize(std::vector<float>& v) {
    double n2 = 0.0;
    for (float x : v) n2 += double(x) * x;
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw InvalidArgument("embedding must be finite and non-zero");
    const double inv = 1.0 / std::sqrt(n2);
    for (float& x : v) x = static_cast<float>(x * inv);
}

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return d / std::sqrt(na * nb);
}

// ---------------------------------------------------------------------------
// Store

MemoryStore::MemoryStore(int dim) : dim_(dim) {
    if (dim <= 0) throw InvalidArgument("memory store dimension must be positive");
}

MemoryStore::MemoryStore(const MemoryStore& other) {
    std::shared_lock lock(other.mu_);
    dim_ = other.dim_;
    next_index_ = other.next_index_;
    records_ = other.records_;
    by_index_ = other.by_index_;
}

MemoryStore& MemoryStore::operator=(const MemoryStore& other) {
    if (this == &other) return *this;
    std::unique_lock lock(mu_, std::defer_lock);
    std::shared_lock other_lock(other.mu_, std::defer_lock);
    std::lock(lock, other_lock);
    dim_ = other.dim_;
    next_index_ = other.next_index_;
    records_ = other.records_;
    by_index_ = other.by_index_;
    return *this;
}

std::size_t MemoryStore::size() const {
    std::shared_lock lock(mu_);
    return records_.size();
}

std::int64_t MemoryStore::next_index() const {
    std::shared_lock lock(mu_);
    return next_index_;
}

std::vector<int> MemoryStore::scene_ids() const {
    std::shared_lock lock(mu_);
    std::set<int> ids;
    for (const auto& r : records_) ids.insert(r.scene_id);
    return {ids.begin(), ids.end()};
}

std::int64_t MemoryStore::insert(MemoryPayload payload, int scene_id, std::vector<float> embedding) {
    if (static_cast<int>(embedding.size()) != dim_)
        throw InvalidArgument("embedding dimension " + std::to_string(embedding.size()) + " does not match store " +
                              std::to_string(dim_));
    if (auto* g = std::get_if<GlobalMemoryEntry>(&payload)) g->validate();
    normalize(embedding);
    std::unique_lock lock(mu_);
    const std::int64_t index = next_index_++;
    by_index_[index] = records_.size();
    records_.push_back({index, std::move(payload), std::move(embedding), scene_id, false});
    return index;
}

std::int64_t MemoryStore::insert(MemoryPayload payload, int scene_id, const Encoder& encoder, const RgbImage* image) {
    if (encoder.dim() != dim_)
        throw InvalidArgument("encoder dimension " + std::to_string(encoder.dim()) + " does not match store " +
                              std::to_string(dim_));
    std::vector<float> f = encoder.encode_text(canonical_text(payload));
    if (image && !image->empty()) {
        const auto fi = encoder.encode_image(*image);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.5f * (f[i] + fi[i]);
    }
    return insert(std::move(payload), scene_id, std::move(f));
}

void MemoryStore::supersede(std::int64_t index) {
    std::unique_lock lock(mu_);
    const auto it = by_index_.find(index);
    if (it == by_index_.end()) throw InvalidArgument("supersede: unknown memory index " + std::to_string(index));
    records_[it->second].superseded = true;
}

std::optional<VectorRecord> MemoryStore::get(std::int64_t index) const {
    std::shared_lock lock(mu_);
    const auto it = by_index_.find(index);
    if (it == by_index_.end()) return std::nullopt;
    return records_[it->second];
}

bool MemoryStore::operator==(const MemoryStore& other) const {
    if (this == &other) return true;
    std::shared_lock a(mu_, std::defer_lock);
    std::shared_lock b(other.mu_, std::defer_lock);
    std::lock(a, b);
    return dim_ == other.dim_ && next_index_ == other.next_index_ && records_ == other.records_;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kFormat = "meqa-memory";
constexpr int kVersion = 1;

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
json pose_json(const Pose& p) { return json::array({p.position.x, p.position.y, p.position.z, p.yaw}); }

Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Pose pose_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("expected [x, y, z, yaw]");
    Pose p;
    p.position = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    p.yaw = j[3].get<double>();  // stored already wrapped; keep bits
    return p;
}

json payload_json(const MemoryPayload& payload) {
    if (const auto* e = std::get_if<LocalMemoryEntry>(&payload)) {
        json dets = json::array();
        for (const auto& d : e->detections)
            dets.push_back({{"cate", d.caption.category},
                            {"attr", d.caption.attribute},
                            {"desc", d.caption.description},
                            {"bbox", {d.x0, d.y0, d.x1, d.y1}}});
        return {{"step", e->step},
                {"observation_ref", e->observation_ref},
                {"detections", dets},
                {"room", e->scene_caption.room},
                {"objects", e->scene_caption.objects},
                {"description", e->scene_caption.description},
                {"decision", e->decision},
                {"pose", pose_json(e->pose)},
                {"space", e->space},
                {"warnings", e->warnings}};
    }
    const auto& g = std::get<GlobalMemoryEntry>(payload);
    if (g.kind == GlobalMemoryEntry::Kind::room)
        return {{"category", g.room->category}, {"observing_position", vec3_json(g.room->observing_position)}};
    return {{"category", g.target->category},
            {"description", g.target->description},
            {"position", vec3_json(g.target->position)},
            {"observer", pose_json(g.target->observer)}};
}

MemoryPayload payload_from(const std::string& kind, const json& j) {
    if (kind == "local") {
        LocalMemoryEntry e;
        e.step = j.at("step").get<int>();
        e.observation_ref = j.at("observation_ref").get<std::string>();
        for (const auto& d : j.at("detections")) {
            DetectionRecord r;
            r.caption = {d.at("cate").get<std::string>(), d.at("attr").get<std::string>(),
                         d.at("desc").get<std::string>()};
            const auto& b = d.at("bbox");
            r.x0 = b.at(0).get<int>();
            r.y0 = b.at(1).get<int>();
            r.x1 = b.at(2).get<int>();
            r.y1 = b.at(3).get<int>();
            e.detections.push_back(std::move(r));
        }
        e.scene_caption.room = j.at("room").get<std::string>();
        e.scene_caption.objects = j.at("objects").get<std::vector<std::string>>();
        e.scene_caption.description = j.at("description").get<std::string>();
        e.decision = j.at("decision").get<std::string>();
        e.pose = pose_from(j.at("pose"));
        e.space = j.at("space").get<std::string>();
        e.warnings = j.at("warnings").get<std::vector<std::string>>();
        return e;
    }
    if (kind == "room")
        return GlobalMemoryEntry::make_room({j.at("category").get<std::string>(), vec3_from(j.at("observing_position"))});
    if (kind == "target")
        return GlobalMemoryEntry::make_target({vec3_from(j.at("position")), j.at("category").get<std::string>(),
                                               j.at("description").get<std::string>(), pose_from(j.at("observer"))});
    throw std::runtime_error("unknown kind '" + kind + "'");
}

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
    return v;
}

}  // namespace

void MemoryStore::persist(const std::filesystem::path& dir) const {
    std::shared_lock lock(mu_);
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.jsonl");
    std::ofstream vectors(dir / "vectors.bin", std::ios::binary);
    if (!manifest || !vectors) throw PersistenceError("cannot write memory bank at " + dir.string());
    manifest << json{{"format", kFormat},
                     {"version", kVersion},
                     {"dim", dim_},
                     {"next_index", next_index_},
                     {"records", records_.size()}}
                    .dump()
             << "\n";
    for (const auto& r : records_) {
        manifest << json{{"index", r.index},
                         {"scene_id", r.scene_id},
                         {"kind", payload_kind(r.payload)},
                         {"superseded", r.superseded},
                         {"payload", payload_json(r.payload)}}
                        .dump()
                 << "\n";
        for (float f : r.embedding) {
            const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
            vectors.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    }
    if (!manifest || !vectors) throw PersistenceError("write failed for memory bank at " + dir.string());
}

MemoryStore MemoryStore::load(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.jsonl");
    if (!manifest) throw PersistenceError("missing manifest.jsonl in " + dir.string());
    std::string line;
    if (!std::getline(manifest, line)) throw PersistenceError("empty manifest in " + dir.string());
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw PersistenceError(std::string("manifest header is not valid JSON: ") + e.what());
    }
    if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion)
        throw PersistenceError("manifest header has unsupported format/version");
    const int dim = header.at("dim").get<int>();
    const auto declared = header.at("records").get<std::size_t>();
    MemoryStore store(dim);
    store.next_index_ = header.at("next_index").get<std::int64_t>();

    std::ifstream vectors(dir / "vectors.bin", std::ios::binary);
    if (!vectors) throw PersistenceError("missing vectors.bin in " + dir.string());
    const auto vec_bytes = std::filesystem::file_size(dir / "vectors.bin");
    const std::size_t row_bytes = static_cast<std::size_t>(dim) * sizeof(float);

    std::size_t n = 0;
    int line_no = 1;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) continue;
        VectorRecord r;
        std::string where = "record " + std::to_string(n) + " (manifest line " + std::to_string(line_no) + ")";
        try {
            const json j = json::parse(line);
            r.index = j.at("index").get<std::int64_t>();
            where = "record " + std::to_string(n) + " (index " + std::to_string(r.index) + ", manifest line " +
                    std::to_string(line_no) + ")";
            r.scene_id = j.at("scene_id").get<int>();
            r.superseded = j.at("superseded").get<bool>();
            r.payload = payload_from(j.at("kind").get<std::string>(), j.at("payload"));
        } catch (const std::exception& e) {
            throw PersistenceError(where + ": " + e.what());
        }
        if ((n + 1) * row_bytes > vec_bytes)
            throw PersistenceError(where + ": vectors.bin is truncated (" + std::to_string(vec_bytes) + " bytes, need " +
                                   std::to_string((n + 1) * row_bytes) + ")");
        r.embedding.resize(static_cast<std::size_t>(dim));
        for (auto& f : r.embedding) {
            std::uint32_t bits;
            vectors.read(reinterpret_cast<char*>(&bits), sizeof bits);
            f = std::bit_cast<float>(to_le(bits));
        }
        double n2 = 0.0;
        for (float f : r.embedding) n2 += double(f) * f;
        if (!std::isfinite(n2) || std::abs(std::sqrt(n2) - 1.0) > 1e-5)
            throw PersistenceError(where + ": embedding is not unit norm");
        if (store.by_index_.count(r.index) || r.index >= store.next_index_)
            throw PersistenceError(where + ": duplicate or out-of-range index");
        store.by_index_[r.index] = store.records_.size();
        store.records_.push_back(std::move(r));
        ++n;
    }
    if (n != declared)
        throw PersistenceError("manifest declares " + std::to_string(declared) + " records but holds " +
                               std::to_string(n));
    if (vec_bytes != n * row_bytes)
        throw PersistenceError("vectors.bin has " + std::to_string(vec_bytes) + " bytes, expected " +
                               std::to_string(n * row_bytes) + " for " + std::to_string(n) + " records");
    return store;
}

}  // namespace meqa
