#include "doctest.h"

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "meqa/encoder.hpp"
#include "meqa/errors.hpp"
#include "meqa/memory.hpp"
#include "oracles.hpp"

using namespace meqa;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("meqa_test_memory_" + name);
    fs::remove_all(dir);
    return dir;
}

MemoryStore random_store(std::mt19937& rng, int n, int dim) {
    MemoryStore s(dim);
    for (int i = 0; i < n; ++i) s.insert(oracle::random_payload(rng), i % 4, oracle::random_unit(rng, dim));
    for (int i = 0; i < n; i += 7) s.supersede(i);
    return s;
}

}  // namespace

TEST_CASE("build_local_entry") {
    const Pose pose(1.0, 2.0, 0.5);
    const auto empty = build_local_entry("step_0", {}, SceneCaption{"kitchen", {}, "a kitchen"}, 0, "start", pose, "x");
    CHECK(empty.detections.empty());
    CHECK(empty.warnings.empty());

    DetectionRecord d;
    d.caption = {"sofa", "white", "white fabric sofa"};
    const auto e = build_local_entry("step_1", {d}, std::nullopt, 1, "move forward 1.0 m", pose, "in the study");
    const std::string text = canonical_text(e);
    CHECK(text.find("sofa") != std::string::npos);
    CHECK(text.find("white") != std::string::npos);
    CHECK(text.find("white fabric sofa") != std::string::npos);
    REQUIRE(e.warnings.size() == 1);
    CHECK(e.warnings[0] == "missing scene caption");

    CHECK_THROWS_AS(build_local_entry("s", {}, std::nullopt, -1, "", pose, ""), InvalidArgument);
    DetectionRecord bad;
    CHECK_THROWS_AS(build_local_entry("s", {bad}, std::nullopt, 0, "", pose, ""), InvalidArgument);
    CHECK_THROWS_AS(build_local_entry("s", {}, std::nullopt, 0, "", Pose(NAN, 0.0, 0.0), ""), InvalidArgument);
}

TEST_CASE("global entries carry exactly one annotation") {
    auto room = GlobalMemoryEntry::make_room({"kitchen", {1, 2, 0}});
    CHECK_NOTHROW(room.validate());
    room.target = TargetAnnotation{};
    CHECK_THROWS_AS(room.validate(), InvalidArgument);
    CHECK_THROWS_AS(GlobalMemoryEntry::make_target({{NAN, 0, 0}, "sofa", "d", Pose()}), InvalidArgument);
}

TEST_CASE("canonical text is injective on a random corpus") {
    std::mt19937 rng(7);
    std::set<std::string> seen;
    std::vector<MemoryPayload> corpus;
    for (int i = 0; i < 300; ++i) {
        auto p = oracle::random_payload(rng);
        if (std::find(corpus.begin(), corpus.end(), p) != corpus.end()) continue;
        corpus.push_back(p);
        CHECK(seen.insert(canonical_text(p)).second);
    }
}

TEST_CASE("insert, supersede and indices") {
    MockEncoder enc(64);
    MemoryStore s(64);
    const auto room = GlobalMemoryEntry::make_room({"kitchen", {0, 0, 0}});
    CHECK(s.insert(room, 0, enc) == 0);
    CHECK(s.insert(room, 0, enc) == 1);
    CHECK(s.get(0).has_value());
    CHECK(s.get(1).has_value());

    MockEncoder wrong(96);
    CHECK_THROWS_AS(s.insert(room, 0, wrong), InvalidArgument);
    CHECK_THROWS_AS(s.insert(room, 0, std::vector<float>(63, 1.0f)), InvalidArgument);
    CHECK_THROWS_AS(s.insert(room, 0, std::vector<float>(64, 0.0f)), InvalidArgument);

    s.supersede(0);
    CHECK(s.get(0)->superseded);
    CHECK_NOTHROW(s.supersede(0));
    CHECK_THROWS_AS(s.supersede(999), InvalidArgument);
    CHECK(s.insert(room, 1, enc) == 2);
    CHECK(s.next_index() == 3);
    CHECK(s.scene_ids() == std::vector<int>{0, 1});

    s.read([](const std::vector<VectorRecord>& records) {
        for (const auto& r : records) CHECK(std::abs(oracle::norm(r.embedding) - 1.0) < 1e-6);
        return 0;
    });
}

TEST_CASE("text plus image embedding is the normalized mean") {
    MockEncoder enc(64);
    MemoryStore s(64);
    RgbImage img(16, 12, Rgb{200, 30, 30});
    const auto entry = GlobalMemoryEntry::make_room({"kitchen", {0, 0, 0}});
    s.insert(entry, 0, enc, &img);
    const auto ft = enc.encode_text(canonical_text(MemoryPayload(entry)));
    const auto fi = enc.encode_image(img);
    std::vector<double> mean(64);
    for (std::size_t i = 0; i < 64; ++i) mean[i] = (double(ft[i]) + fi[i]) / 2.0;
    const auto expect = oracle::unit(mean);
    const auto got = s.get(0)->embedding;
    for (std::size_t i = 0; i < 64; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-5));
}

TEST_CASE("persistence roundtrip") {
    std::mt19937 rng(11);
    SUBCASE("empty") {
        const auto dir = scratch_dir("empty");
        MemoryStore s(8);
        s.persist(dir);
        CHECK(MemoryStore::load(dir) == s);
    }
    SUBCASE("100 random records, bit-exact") {
        const auto dir = scratch_dir("random");
        const MemoryStore s = random_store(rng, 100, 48);
        s.persist(dir);
        const MemoryStore t = MemoryStore::load(dir);
        CHECK(t == s);
        CHECK(t.next_index() == s.next_index());
        for (std::int64_t i = 0; i < 100; ++i) {
            const auto a = s.get(i), b = t.get(i);
            REQUIRE(b.has_value());
            CHECK(std::memcmp(a->embedding.data(), b->embedding.data(), a->embedding.size() * sizeof(float)) == 0);
        }
    }
    SUBCASE("truncated vector file names a record") {
        const auto dir = scratch_dir("truncated");
        random_store(rng, 10, 16).persist(dir);
        fs::resize_file(dir / "vectors.bin", 16 * 4 * 6 + 5);
        try {
            MemoryStore::load(dir);
            FAIL("expected a PersistenceError");
        } catch (const PersistenceError& e) {
            CHECK(std::string(e.what()).find("record 6") != std::string::npos);
        }
    }
    SUBCASE("corrupt manifest line names a record") {
        const auto dir = scratch_dir("manifest");
        random_store(rng, 5, 16).persist(dir);
        std::vector<std::string> lines;
        {
            std::ifstream in(dir / "manifest.jsonl");
            for (std::string l; std::getline(in, l);) lines.push_back(l);
        }
        lines[3] = "{\"index\": 2, \"scene_id\": ";
        std::ofstream out(dir / "manifest.jsonl");
        for (const auto& l : lines) out << l << "\n";
        out.close();
        CHECK_THROWS_WITH_AS(MemoryStore::load(dir), doctest::Contains("record 2"), PersistenceError);
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(MemoryStore::load(scratch_dir("absent")), PersistenceError); }
}

TEST_CASE("concurrent readers with a writer") {
    std::mt19937 rng(3);
    MemoryStore s = random_store(rng, 50, 16);
    std::atomic<bool> bad{false};
    std::vector<std::thread> readers;
    for (int t = 0; t < 4; ++t)
        readers.emplace_back([&] {
            for (int i = 0; i < 200; ++i) {
                const auto n = s.read([](const std::vector<VectorRecord>& r) { return r.size(); });
                if (n < 50) bad = true;
            }
        });
    std::mt19937 wr(5);
    for (int i = 0; i < 100; ++i) s.insert(oracle::random_payload(wr), 0, oracle::random_unit(wr, 16));
    for (auto& t : readers) t.join();
    CHECK_FALSE(bad.load());
    CHECK(s.size() == 150);
}
