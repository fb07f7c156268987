#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "meqa/config.hpp"
#include "meqa/errors.hpp"
#include "meqa/simulator.hpp"
#include "test_util.hpp"

using namespace meqa;

namespace {

CameraModel test_camera() { return HyperParams::defaults().camera; }

Scene open_box(int n) {
    Scene s;
    s.name = "box";
    s.nx = s.ny = n;
    s.cells.assign(static_cast<std::size_t>(n) * n, CellType::floor);
    for (int i = 0; i < n; ++i) {
        s.cells[i] = s.cells[static_cast<std::size_t>(n - 1) * n + i] = CellType::wall;
        s.cells[static_cast<std::size_t>(i) * n] = s.cells[static_cast<std::size_t>(i) * n + n - 1] = CellType::wall;
    }
    s.spawns = {Pose(n * 0.05, n * 0.05, 0.0)};
    return s;
}

}  // namespace

TEST_CASE("bundled fixtures load") {
    const Scene s = test::load_fixture("two_sofas");
    CHECK(s.rooms.size() == 2);
    int sofas = 0;
    std::set<std::string> colors;
    for (const auto& o : s.objects)
        if (o.category == "sofa") {
            ++sofas;
            colors.insert(o.color);
        }
    CHECK(sofas == 2);
    CHECK(colors.size() == 2);
    for (const char* name : {"kitchen_count", "three_room_attr", "box_room"}) CHECK_NOTHROW(test::load_fixture(name));
}

TEST_CASE("facing a wall at 1 m leaves no black pixels") {
    const Scene s = test::load_fixture("box_room");
    const auto obs = render(s, Pose(1.1, 3.1, std::numbers::pi), test_camera());
    CHECK(black_fraction(obs.rgb) == 0.0);
    for (int y = 0; y < obs.depth.height(); ++y)
        for (int x = 0; x < obs.depth.width(); ++x) CHECK(obs.depth.at(x, y) < 10.0f);
}

TEST_CASE("facing void renders black at max range") {
    Scene s;
    s.name = "void";
    s.nx = s.ny = 41;
    s.cells.assign(41 * 41, CellType::empty);
    s.cells[20 * 41 + 20] = CellType::floor;
    s.spawns = {Pose(2.05, 2.05, 0.0)};
    const CameraModel cam = test_camera();
    const auto obs = render(s, s.spawns[0], cam);
    CHECK(black_fraction(obs.rgb) == 1.0);
    for (int y = 0; y < obs.depth.height(); ++y)
        for (int x = 0; x < obs.depth.width(); ++x) CHECK(obs.depth.at(x, y) == static_cast<float>(cam.max_range));
}

TEST_CASE("rendering inside a wall throws") {
    const Scene s = test::load_fixture("box_room");
    CHECK_THROWS_AS(render(s, Pose(0.05, 3.0, 0.0), test_camera()), InvalidArgument);
}

TEST_CASE("depth equals analytic wall distance") {
    const Scene s = test::load_fixture("box_room");
    const CameraModel cam = test_camera();
    const Pose pose(3.1, 3.1, 0.0);
    const auto obs = render(s, pose, cam);
    const Vec3 o = cam.origin(pose);
    // Wall face x = 6.1, floor z = 0: whichever plane the ray meets first.
    for (int y = 0; y < cam.height_px; y += 5)
        for (int x = 0; x < cam.width; x += 7) {
            const Vec3 d = cam.ray(pose, x + 0.5, y + 0.5);
            double t = (6.1 - o.x) / d.x;
            const double py = o.y + t * d.y;
            if (d.z < 0) t = std::min(t, -o.z / d.z);
            if (py < 0.1 || py > 6.1) continue;  // side walls
            if (o.z + t * d.z > 3.5) continue;
            CHECK(obs.depth.at(x, y) == doctest::Approx(t).epsilon(1e-6));
        }
}

TEST_CASE("red sofa detection bbox matches projected footprint and pixels") {
    const Scene s = test::load_fixture("two_sofas");
    const CameraModel cam = test_camera();
    const SceneObject& sofa = *s.object(1);
    const Pose pose(3.5, 2.5, std::atan2(5.2 - 2.5, 1.2 - 3.5));
    const auto obs = render(s, pose, cam);
    const Detection* det = nullptr;
    for (const auto& d : obs.detections)
        if (d.object_id == 1) det = &d;
    REQUIRE(det);
    CHECK(det->category == "sofa");
    CHECK(det->color == "red");

    // Independent pinhole projection of the eight corners.
    const double f = 0.5 * cam.width / std::tan(deg2rad(cam.hfov_deg) / 2);
    const double c = std::cos(pose.yaw), sn = std::sin(pose.yaw), t = deg2rad(cam.tilt_deg);
    double umin = 1e9, umax = -1e9;
    for (double x : {sofa.min().x, sofa.max().x})
        for (double y : {sofa.min().y, sofa.max().y})
            for (double z : {0.0, sofa.height}) {
                const Vec3 p{x - pose.position.x, y - pose.position.y, z - cam.height};
                const double fwd = std::cos(t) * (c * p.x + sn * p.y) + std::sin(t) * p.z;
                const double right = sn * p.x - c * p.y;
                const double u = cam.width / 2.0 + f * right / fwd;
                umin = std::min(umin, u);
                umax = std::max(umax, u);
            }
    CHECK(det->x0 == std::clamp(static_cast<int>(std::floor(umin)), 0, cam.width));
    CHECK(det->x1 == std::clamp(static_cast<int>(std::ceil(umax)), 0, cam.width));

    // Every pixel shaded in the sofa's hue lies inside the bbox.
    int red = 0;
    for (int y = 0; y < cam.height_px; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const Rgb p = obs.rgb.at(x, y);
            if (p.r > 2 * p.g && p.r > 2 * p.b) {
                ++red;
                CHECK(x >= det->x0);
                CHECK(x < det->x1);
                CHECK(y >= det->y0);
                CHECK(y < det->y1);
            }
        }
    CHECK(red > 10);
}

TEST_CASE("occluded objects are not detected") {
    const Scene s = test::load_fixture("two_sofas");
    // From the living room looking at the partition wall away from the door.
    const auto obs = render(s, Pose(3.0, 5.5, 0.0), test_camera());
    for (const auto& d : obs.detections) CHECK(s.room_at(d.position.xy())->name == "living room");
}

TEST_CASE("move") {
    const Scene s = test::load_fixture("box_room");
    const Pose start(3.1, 3.1, 0.0);
    SUBCASE("clear path reaches target") {
        const Pose target(5.1, 4.0, 1.0);
        CHECK(move(s, start, target) == target);
    }
    SUBCASE("wall midway stops adjacent") {
        const Pose got = move(s, start, Pose(8.0, 3.1, 0.0));
        CHECK(got.position.x == doctest::Approx(6.1 - 0.05));
        CHECK(got.position.y == doctest::Approx(3.1));
        CHECK_FALSE(s.blocked(got.xy()));
    }
    SUBCASE("diagonal into corner stays free") {
        const Pose got = move(s, start, Pose(-3.0, -2.0, 0.0));
        CHECK_FALSE(s.blocked(got.xy()));
        // line-grid oracle: first blocked cell along the segment
        const Vec2 a = start.xy(), b{-3.0, -2.0};
        double t_hit = 1.0;
        for (double t = 0; t <= 1.0; t += 1e-6)
            if (s.blocked_cell(static_cast<int>(std::floor((a.x + (b.x - a.x) * t) / 0.1)),
                               static_cast<int>(std::floor((a.y + (b.y - a.y) * t) / 0.1)))) {
                t_hit = t;
                break;
            }
        const double len = (b - a).norm();
        CHECK((got.xy() - a).norm() == doctest::Approx(t_hit * len - 0.05).epsilon(1e-4));
    }
    SUBCASE("zero-length move is identity") { CHECK(move(s, start, start) == start); }
    SUBCASE("never ends in a blocked cell") {
        const Scene t = test::load_fixture("two_sofas");
        std::mt19937 rng(3);
        std::uniform_real_distribution<double> ux(-1, 13), uy(-1, 7);
        Pose p = t.spawns[0];
        for (int i = 0; i < 300; ++i) {
            p = move(t, p, Pose(ux(rng), uy(rng), 0.0));
            int cx, cy;
            t.world_to_cell(p.xy(), cx, cy);
            CHECK_FALSE(t.blocked_cell(cx, cy));
        }
    }
}

TEST_CASE("scene roundtrip on random scenes") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<std::string> colors = {"red", "blue", "green", "white", "brown"};
    for (int trial = 0; trial < 20; ++trial) {
        Scene s = open_box(30 + trial);
        s.name = "random_" + std::to_string(trial);
        const double extent = s.nx * 0.1;
        s.rooms = {{"a", {0.1, 0.1}, {extent / 2, extent - 0.1}}, {"b", {extent / 2, 0.1}, {extent - 0.1, extent - 0.1}}};
        for (int i = 0; i < 4; ++i) {
            SceneObject o;
            o.id = i + 1;
            o.category = "thing" + std::to_string(i);
            o.color = colors[static_cast<std::size_t>(u(rng) * colors.size())];
            o.attributes = {"attr" + std::to_string(i)};
            o.size = {0.2 + u(rng) * 0.3, 0.2 + u(rng) * 0.3};
            o.position = {0.6 + u(rng) * (extent - 1.2), 0.6 + u(rng) * (extent - 1.2)};
            o.height = 0.5 + u(rng);
            s.objects.push_back(o);
        }
        s.spawns = {Pose(0.35, 0.35, u(rng) * 6 - 3)};
        const Scene back = parse_scene(serialize_scene(s));
        CHECK(back == s);
    }
}

TEST_CASE("scene validation names the field") {
    Scene s = open_box(40);
    s.rooms = {{"a", {0.1, 0.1}, {2.5, 3.9}}, {"b", {2.0, 0.1}, {3.9, 3.9}}};
    try {
        s.validate();
        FAIL("expected overlap error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("rooms[1]") != std::string::npos);
    }
    s.rooms.pop_back();
    s.objects.push_back({7, "sofa", "red", {}, {0.05, 2.0}, {0.5, 0.5}, 1.0});
    try {
        s.validate();
        FAIL("expected object error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("objects[0]") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_scene("{\"name\": \"x\", \"size\": [2, 1], \"cells\": [\"3.\"]}"), ValidationError);
    CHECK_THROWS_AS(parse_scene("not json"), ValidationError);
}
