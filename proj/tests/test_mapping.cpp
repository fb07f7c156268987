#include "doctest.h"

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "meqa/errors.hpp"
#include "meqa/mapping.hpp"
#include "test_util.hpp"

using namespace meqa;

namespace {

CameraModel single_ray_camera() {
    CameraModel cam;
    cam.width = 1;
    cam.height_px = 1;
    cam.tilt_deg = 0.0;
    cam.hfov_deg = 60.0;
    cam.max_range = 10.0;
    return cam;
}

}  // namespace

TEST_CASE("single ray against a wall matches a hand march") {
    MappingParams mp;
    const CameraModel cam = single_ray_camera();
    const Pose pose(0.05, 0.05, 0.0);
    VoxelGrid grid = VoxelGrid::around(pose.xy(), 0.5, mp);
    DepthImage depth(1, 1, 2.0f);
    integrate_depth(grid, depth, pose, cam);

    // Oracle: sample the ray densely, group by voxel, take each voxel's
    // entry/exit along the ray and apply the truncated fusion rule once.
    const double tau = 3 * mp.voxel_size;
    const double z = cam.height;
    std::map<int, std::pair<double, double>> span;
    for (double t = 0.0; t <= 2.0 + tau; t += 1e-5) {
        const int ix = static_cast<int>(std::floor((pose.position.x + t) / mp.voxel_size));
        auto [it, fresh] = span.try_emplace(ix, t, t);
        it->second.second = t;
    }
    int checked = 0, free_count = 0;
    for (const auto& [ix, s] : span) {
        const double sdf = 2.0 - 0.5 * (s.first + s.second);
        const Voxel v = grid.sample({(ix + 0.5) * mp.voxel_size, 0.05, z + 0.01});
        if (sdf < -tau) {
            CHECK(v.weight == 0.0f);
            continue;
        }
        CHECK(v.weight == 1.0f);
        CHECK(v.tsdf == doctest::Approx(std::min(sdf, tau)).epsilon(1e-3));
        ++checked;
        if (v.tsdf > 0) ++free_count;
    }
    CHECK(checked >= 20);
    // Free until the surface, a sign change inside +-tau of 2.0 m.
    CHECK(grid.sample({1.65, 0.05, z + 0.01}).tsdf > 0.0f);
    CHECK(grid.sample({2.05, 0.05, z + 0.01}).tsdf < 0.0f);
    CHECK(grid.sample({2.45, 0.05, z + 0.01}).weight == 0.0f);
}

TEST_CASE("no-surface frame marks free space only") {
    MappingParams mp;
    CameraModel cam;
    cam.width = 16;
    cam.height_px = 12;
    cam.tilt_deg = 10.0;
    VoxelGrid grid = VoxelGrid::around({0, 0}, 1.0, mp);
    DepthImage depth(16, 12, static_cast<float>(cam.max_range));
    const auto stats = integrate_depth(grid, depth, Pose(0, 0, 0), cam);
    CHECK(stats.voxels_updated > 0);
    std::size_t occ = 0, fr = 0;
    for (int x = 0; x < grid.nx(); ++x)
        for (int y = 0; y < grid.ny(); ++y)
            for (int z = 0; z < grid.nz(); ++z) {
                occ += grid.occupancy(x, y, z) == Occupancy::occupied;
                fr += grid.occupancy(x, y, z) == Occupancy::free;
            }
    CHECK(occ == 0);
    CHECK(fr > 0);
}

TEST_CASE("non-finite depth samples are rejected, size mismatch throws") {
    MappingParams mp;
    CameraModel cam;
    cam.width = 4;
    cam.height_px = 3;
    VoxelGrid grid = VoxelGrid::around({0, 0}, 1.0, mp);
    DepthImage depth(4, 3, 2.0f);
    depth.set(1, 1, std::nanf(""));
    depth.set(2, 1, -1.0f);
    const auto stats = integrate_depth(grid, depth, Pose(0, 0, 0), cam);
    CHECK(stats.rejected == 2);
    CHECK_THROWS_AS(integrate_depth(grid, DepthImage(5, 3, 1.0f), Pose(0, 0, 0), cam), InvalidArgument);
}

TEST_CASE("fusion is order-insensitive") {
    const Scene scene = test::load_fixture("box_room");
    const HyperParams hp = HyperParams::defaults();
    const Pose a(2.0, 2.0, 0.3), b(4.0, 3.5, 2.2);
    const auto oa = render(scene, a, hp.camera), ob = render(scene, b, hp.camera);
    VoxelGrid g1 = VoxelGrid::around({3.1, 3.1}, 4.0, hp.mapping), g2 = g1;
    integrate_depth(g1, oa.depth, a, hp.camera);
    integrate_depth(g1, ob.depth, b, hp.camera);
    integrate_depth(g2, ob.depth, b, hp.camera);
    integrate_depth(g2, oa.depth, a, hp.camera);
    REQUIRE(g1.nx() == g2.nx());
    int compared = 0;
    for (int x = 0; x < g1.nx(); ++x)
        for (int y = 0; y < g1.ny(); ++y)
            for (int z = 0; z < g1.nz(); ++z) {
                const Voxel& v1 = g1.at(x, y, z);
                const Voxel& v2 = g2.sample(g1.voxel_center(x, y, z));
                CHECK(v1.weight == v2.weight);
                if (std::abs(v1.tsdf - v2.tsdf) > 1e-6) CHECK(v1.tsdf == doctest::Approx(v2.tsdf).epsilon(1e-6));
                ++compared;
            }
    CHECK(compared > 0);
}

TEST_CASE("expand_grid preserves world readback") {
    MappingParams mp;
    VoxelGrid g = VoxelGrid::around({0, 0}, 1.0, mp);
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> u(-0.3f, 0.3f);
    for (int x = 0; x < g.nx(); ++x)
        for (int y = 0; y < g.ny(); ++y)
            for (int z = 0; z < g.nz(); ++z) g.at(x, y, z) = {u(rng), 1.0f + (x + y + z) % 3, (x + z) % 2 == 0};

    SUBCASE("inside bounds is identity") {
        const AxisBox b = g.bounds();
        CHECK(expand_grid(g, {b.min + Vec3{0.2, 0.2, 0}, b.max - Vec3{0.2, 0.2, 0}}) == g);
    }
    SUBCASE("one meter in +x grows L by 10") {
        const AxisBox b = g.bounds();
        const VoxelGrid e = expand_grid(g, {b.min, b.max + Vec3{1.0, 0, 0}});
        CHECK(e.nx() == g.nx() + 10);
        CHECK(e.ny() == g.ny());
        CHECK(e.nz() == g.nz());
        for (int x = 0; x < g.nx(); ++x)
            for (int y = 0; y < g.ny(); ++y)
                for (int z = 0; z < g.nz(); ++z) CHECK(e.sample(g.voxel_center(x, y, z)) == g.at(x, y, z));
    }
    SUBCASE("negative expansion shifts the origin") {
        const AxisBox b = g.bounds();
        const VoxelGrid e = expand_grid(g, {b.min - Vec3{0.55, 0.3, 0}, b.max});
        CHECK(e.nx() == g.nx() + 6);
        CHECK(e.ny() == g.ny() + 3);
        for (int x = 0; x < g.nx(); ++x)
            for (int y = 0; y < g.ny(); y += 3)
                for (int z = 0; z < g.nz(); z += 2) CHECK(e.sample(g.voxel_center(x, y, z)) == g.at(x, y, z));
    }
    SUBCASE("cap") {
        MappingParams small = mp;
        small.max_voxels = 100000;
        VoxelGrid s = VoxelGrid::around({0, 0}, 1.0, small);
        CHECK_THROWS_AS(expand_grid(s, {{-50, -50, 0}, {50, 50, 0}}), ResourceLimitError);
    }
}

TEST_CASE("project_to_2d column rules") {
    MappingParams mp;
    CameraModel cam;
    VoxelGrid g({0, 0, 0}, 3, 1, mp);
    for (int x = 0; x < 3; ++x)
        for (int z = 0; z < g.nz(); ++z) g.at(x, 0, z) = {0.1f, 1.0f, true};
    // column 0: occupied above camera height only
    for (int z = 0; z < g.nz(); ++z)
        if (g.voxel_center(0, 0, z).z > cam.height) g.at(0, 0, z).tsdf = -0.1f;
    // column 1: one occupied voxel at 0.4 m
    g.at(1, 0, 4).tsdf = -0.1f;
    // column 2: one unexplored voxel near the top
    g.at(2, 0, g.nz() - 1).explored = false;

    const Map2D m = project_to_2d(g, cam);
    CHECK(m.traversable({0, 0}));
    CHECK(m.explored({0, 0}));
    CHECK_FALSE(m.traversable({1, 0}));
    CHECK(m.occupied({1, 0}));
    CHECK(m.traversable({2, 0}));
    CHECK_FALSE(m.explored({2, 0}));
    CHECK(project_to_2d(g, cam) == m);
}

TEST_CASE("frontier degenerate maps") {
    const HyperParams hp = HyperParams::defaults();
    Map2D all(Vec2{}, 16, 16, 0.1), none(Vec2{}, 16, 16, 0.1);
    for (int x = 0; x < 16; ++x)
        for (int y = 0; y < 16; ++y) {
            all.set({x, y}, true, true);
            none.set({x, y}, true, false);
        }
    CHECK(detect_frontiers(all, hp).empty());
    CHECK(detect_frontiers(none, hp).empty());
}

TEST_CASE("frontier on half-explored 8x8 map is the middle column") {
    const HyperParams hp = HyperParams::defaults();
    Map2D m(Vec2{}, 8, 8, 0.1);
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) m.set({x, y}, x < 4, x < 4);
    const auto fs = detect_frontiers(m, hp);
    REQUIRE(fs.size() == 1);
    CHECK(fs[0].cells.size() == 8);
    for (const Cell c : fs[0].cells) CHECK(c.x == 3);
    CHECK(fs[0].centroid.x == doctest::Approx(0.35));
    for (const Pose& p : fs[0].candidate_poses) CHECK(std::cos(p.yaw) > 0.9);
}

TEST_CASE("frontiers equal the brute-force oracle on random maps") {
    const HyperParams hp = HyperParams::defaults();
    std::mt19937 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const Map2D m = test::random_map(rng, 32, 32);
        const auto expected = test::brute_force_frontiers(m, hp.visual_prompt.min_points_clustering);
        const auto got = detect_frontiers(m, hp);
        std::set<std::vector<Cell>> got_sets;
        for (const auto& f : got) {
            got_sets.insert(f.cells);
            for (const Cell c : f.cells) CHECK(is_frontier_cell(m, c));
            for (std::size_t i = 0; i < f.candidate_poses.size(); ++i)
                for (std::size_t j = i + 1; j < f.candidate_poses.size(); ++j)
                    CHECK((f.candidate_poses[i].xy() - f.candidate_poses[j].xy()).norm() >=
                          hp.planner.frontier_spacing - 1e-9);
        }
        CHECK(got_sets == expected);
    }
}

namespace {

Frontier point_frontier(Vec2 p) {
    Frontier f;
    f.cells = {{0, 0}};
    f.centroid = p;
    f.candidate_poses = {Pose(p.x, p.y, 0.0)};
    return f;
}

}  // namespace

TEST_CASE("sample_candidates") {
    const HyperParams hp = HyperParams::defaults();
    const Pose agent(0, 0, 0);
    SUBCASE("single frontier in band") {
        const auto r = sample_candidates({point_frontier({5, 0})}, agent, hp);
        REQUIRE(r.candidates.size() == 1);
        CHECK(r.candidates[0].pose.xy() == Vec2{5, 0});
        CHECK_FALSE(r.fallback);
    }
    SUBCASE("three frontiers give three separated candidates") {
        const auto r = sample_candidates({point_frontier({3, 0}), point_frontier({0, 4}), point_frontier({-5, 0}),
                                          point_frontier({3.2, 0.2})},
                                         agent, hp);
        REQUIRE(r.candidates.size() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j)
                CHECK((r.candidates[i].pose.xy() - r.candidates[j].pose.xy()).norm() >=
                      hp.visual_prompt.cluster_threshold);
    }
    SUBCASE("degenerate band falls back to the nearest centroid") {
        const auto r = sample_candidates({point_frontier({0.5, 0}), point_frontier({0, -0.4})}, agent, hp);
        REQUIRE(r.candidates.size() == 1);
        CHECK(r.fallback);
        CHECK(r.candidates[0].frontier == 1);
    }
    SUBCASE("top-up from outside the band is flagged") {
        const auto r = sample_candidates({point_frontier({5, 0}), point_frontier({0, 1})}, agent, hp);
        CHECK(r.candidates.size() == 2);
        CHECK(r.relaxed);
    }
    SUBCASE("deterministic") {
        std::vector<Frontier> fs;
        for (int i = 0; i < 8; ++i) fs.push_back(point_frontier({2.0 + i * 0.7, std::sin(i) * 3}));
        const auto a = sample_candidates(fs, agent, hp), b = sample_candidates(fs, agent, hp);
        REQUIRE(a.candidates.size() == b.candidates.size());
        for (std::size_t i = 0; i < a.candidates.size(); ++i) CHECK(a.candidates[i].pose == b.candidates[i].pose);
    }
}
