#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "meqa/encoder.hpp"
#include "meqa/errors.hpp"
#include "meqa/update_gate.hpp"
#include "oracles.hpp"

using namespace meqa;

namespace {

constexpr double kPi = std::numbers::pi;

LocalMemoryEntry local_at(const Pose& pose, const std::string& ref) {
    return build_local_entry(ref, {}, SceneCaption{"kitchen", {}, "k"}, 0, "start", pose, "in the kitchen");
}

RgbImage stripes(int w, int h, int period) {
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::uint8_t v = ((x / period) % 2) ? 220 : 40;
            img.set(x, y, {v, v, v});
        }
    return img;
}

}  // namespace

TEST_CASE("novelty gate") {
    UpdateParams p;
    MemoryStore s(8);
    CHECK(novelty_gate(Pose(0, 0, 0), s, 0, p));

    s.insert(local_at(Pose(0, 0, 0), "a"), 0, oracle::unit({1, 0, 0, 0, 0, 0, 0, 0}));
    s.insert(local_at(Pose(0, 3, kPi), "b"), 0, oracle::unit({0, 1, 0, 0, 0, 0, 0, 0}));
    CHECK_FALSE(novelty_gate(Pose(0, 0, 0), s, 0, p));
    CHECK(novelty_gate(Pose(2, -1.5, kPi / 2), s, 0, p));
    // distance is novel but the heading repeats a stored one
    CHECK_FALSE(novelty_gate(Pose(5, 5, 0), s, 0, p));
    // heading is novel but the position is close
    CHECK_FALSE(novelty_gate(Pose(0.5, 0, kPi / 2), s, 0, p));
    // other scenes and superseded entries are ignored
    CHECK(novelty_gate(Pose(0, 0, 0), s, 1, p));
    s.supersede(0);
    s.supersede(1);
    CHECK(novelty_gate(Pose(0, 0, 0), s, 0, p));
}

TEST_CASE("ssim") {
    std::mt19937 rng(5);
    for (int i = 0; i < 20; ++i) {
        const auto a = oracle::random_image(rng, 32, 24), b = oracle::random_image(rng, 32, 24);
        CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-9);
        CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
        CHECK(ssim(a, b) < 0.5);
    }
    const RgbImage dark(16, 16, Rgb{64, 64, 64}), light(16, 16, Rgb{192, 192, 192});
    CHECK(ssim(dark, light) == doctest::Approx(oracle::constant_ssim(64, 192)).epsilon(1e-9));
    CHECK_THROWS_AS(ssim(dark, RgbImage(16, 8)), InvalidArgument);
}

TEST_CASE("blended similarity") {
    const auto a = stripes(32, 24, 3), b = stripes(32, 24, 5);
    const std::vector<float> f1{1, 0}, f2{0.6f, 0.8f}, f3{0, 1};
    CHECK(blended_similarity(a, b, f1, f2, 1.0) == ssim(a, b));
    CHECK(blended_similarity(a, b, f1, f2, 0.0) == cosine(f1, f2));
    CHECK(blended_similarity(a, a, f1, f3, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("fov gate") {
    CHECK_FALSE(fov_gate(RgbImage(10, 10), 0.5));
    CHECK(fov_gate(RgbImage(10, 10, Rgb{9, 9, 9}), 0.5));
    RgbImage half(10, 10, Rgb{100, 100, 100});
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 10; ++x) half.set(x, y, {0, 0, 0});
    CHECK(fov_gate(half, 0.5));
    half.set(0, 5, {7, 7, 7});
    CHECK_FALSE(fov_gate(half, 0.5));
}

TEST_CASE("should_update rules") {
    UpdateParams p;
    MockEncoder enc(64);
    ObservationCache cache;
    MemoryStore s(64);
    const auto stored = stripes(32, 24, 3);
    const auto f_stored = enc.encode_image(stored);
    const auto clear = stripes(32, 24, 7);
    const auto f_clear = enc.encode_image(clear);

    SUBCASE("empty memory and a clear view") {
        const auto d = should_update(Pose(0, 0, 0), clear, f_clear, s, 0, p, cache);
        CHECK(d.update);
    }

    cache.put("a", stored, f_stored);
    s.insert(local_at(Pose(0, 0, 0), "a"), 0, f_stored);

    SUBCASE("duplicate pose fails regardless of the rest") {
        const auto d = should_update(Pose(0, 0, 0), clear, f_clear, s, 0, p, cache);
        CHECK_FALSE(d.novel);
        CHECK_FALSE(d.update);
    }
    SUBCASE("near-identical observation fails") {
        auto copy = stored;
        copy.set(0, 0, {41, 41, 41});
        const auto d = should_update(Pose(3, 0, kPi / 2), copy, enc.encode_image(copy), s, 0, p, cache);
        CHECK(d.novel);
        CHECK_FALSE(d.dissimilar);
        CHECK(d.max_similarity >= p.sim_threshold);
        CHECK_FALSE(d.update);
    }
    SUBCASE("mostly black view fails") {
        RgbImage dark(32, 24);
        for (int x = 0; x < 32; ++x) dark.set(x, 0, {200, 200, 200});
        const auto d = should_update(Pose(3, 0, kPi / 2), dark, enc.encode_image(dark), s, 0, p, cache);
        CHECK(d.novel);
        CHECK(d.dissimilar);
        CHECK_FALSE(d.clear_view);
        CHECK_FALSE(d.update);
    }
    SUBCASE("all three hold") {
        const auto d = should_update(Pose(3, 0, kPi / 2), clear, f_clear, s, 0, p, cache);
        CHECK(d.update);
        CHECK(d.max_similarity < p.sim_threshold);
    }
}
