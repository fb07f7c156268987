#include "meqa/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "meqa/errors.hpp"

namespace meqa {

// ---------------------------------------------------------------------------
// VoxelGrid

VoxelGrid::VoxelGrid(Vec3 origin, int nx, int ny, const MappingParams& params)
    : origin_(origin), nx_(nx), ny_(ny), params_(params) {
    if (!(params.voxel_size > 0.0)) throw InvalidArgument("voxel size must be positive");
    if (nx <= 0 || ny <= 0) throw InvalidArgument("grid dimensions must be positive");
    if (!origin.finite()) throw InvalidArgument("grid origin must be finite");
    nz_ = static_cast<int>(std::lround(params.grid_height / params.voxel_size));
    if (voxel_count() > params.max_voxels)
        throw ResourceLimitError("voxel grid of " + std::to_string(voxel_count()) + " voxels exceeds cap " +
                                 std::to_string(params.max_voxels));
    voxels_.resize(static_cast<std::size_t>(voxel_count()));
}

VoxelGrid VoxelGrid::around(Vec2 center, double half_extent, const MappingParams& params) {
    const double l = params.voxel_size;
    const Vec3 origin{std::floor((center.x - half_extent) / l) * l, std::floor((center.y - half_extent) / l) * l,
                      0.0};
    const int n = static_cast<int>(std::ceil(2.0 * half_extent / l)) + 1;
    return VoxelGrid(origin, n, n, params);
}

AxisBox VoxelGrid::bounds() const {
    const double l = params_.voxel_size;
    return {origin_, {origin_.x + nx_ * l, origin_.y + ny_ * l, origin_.z + nz_ * l}};
}

Occupancy VoxelGrid::occupancy(int ix, int iy, int iz) const {
    const Voxel& v = at(ix, iy, iz);
    if (v.weight <= 0.0f) return Occupancy::unknown;
    return v.tsdf > 0.0f ? Occupancy::free : Occupancy::occupied;
}

Vec3 VoxelGrid::voxel_center(int ix, int iy, int iz) const {
    const double l = params_.voxel_size;
    return {origin_.x + (ix + 0.5) * l, origin_.y + (iy + 0.5) * l, origin_.z + (iz + 0.5) * l};
}

void VoxelGrid::world_to_index(const Vec3& p, int& ix, int& iy, int& iz) const {
    const double l = params_.voxel_size;
    ix = static_cast<int>(std::floor((p.x - origin_.x) / l));
    iy = static_cast<int>(std::floor((p.y - origin_.y) / l));
    iz = static_cast<int>(std::floor((p.z - origin_.z) / l));
}

Voxel VoxelGrid::sample(const Vec3& world) const {
    int ix, iy, iz;
    world_to_index(world, ix, iy, iz);
    if (!in_bounds(ix, iy, iz)) return {};
    return at(ix, iy, iz);
}

VoxelGrid expand_grid(const VoxelGrid& grid, const AxisBox& required) {
    if (!required.finite()) throw InvalidArgument("expand_grid: required bounds must be finite");
    if (grid.bounds().contains_xy(required)) return grid;

    const double l = grid.voxel_size();
    const auto lo = [&](double v, double o) { return static_cast<int>(std::floor((v - o) / l + 1e-9)); };
    const auto hi = [&](double v, double o) { return static_cast<int>(std::ceil((v - o) / l - 1e-9)); };

    const int shift_x = std::max(0, -lo(required.min.x, grid.origin_.x));
    const int shift_y = std::max(0, -lo(required.min.y, grid.origin_.y));
    const int nx = std::max(grid.nx_, hi(required.max.x, grid.origin_.x)) + shift_x;
    const int ny = std::max(grid.ny_, hi(required.max.y, grid.origin_.y)) + shift_y;

    const std::int64_t count = static_cast<std::int64_t>(nx) * ny * grid.nz_;
    if (count > grid.params_.max_voxels)
        throw ResourceLimitError("expand_grid: " + std::to_string(count) + " voxels exceeds cap " +
                                 std::to_string(grid.params_.max_voxels));

    const Vec3 origin{grid.origin_.x - shift_x * l, grid.origin_.y - shift_y * l, grid.origin_.z};
    VoxelGrid out(origin, nx, ny, grid.params_);
    for (int ix = 0; ix < grid.nx_; ++ix)
        for (int iy = 0; iy < grid.ny_; ++iy)
            for (int iz = 0; iz < grid.nz_; ++iz) out.at(ix + shift_x, iy + shift_y, iz) = grid.at(ix, iy, iz);
    return out;
}

// ---------------------------------------------------------------------------
// Integration

namespace {

// Amanatides-Woo traversal of the voxels pierced by o + t*r for t in [t0, t1].
template <typename Visit>
void traverse(const VoxelGrid& g, const Vec3& o, const Vec3& r, double t0, double t1, Visit&& visit) {
    const AxisBox b = g.bounds();
    const double os[3] = {o.x, o.y, o.z};
    const double rs[3] = {r.x, r.y, r.z};
    const double lo[3] = {b.min.x, b.min.y, b.min.z};
    const double hi[3] = {b.max.x, b.max.y, b.max.z};
    double t_enter = t0, t_exit = t1;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(rs[a]) < 1e-12) {
            if (os[a] < lo[a] || os[a] >= hi[a]) return;
            continue;
        }
        double ta = (lo[a] - os[a]) / rs[a];
        double tb = (hi[a] - os[a]) / rs[a];
        if (ta > tb) std::swap(ta, tb);
        t_enter = std::max(t_enter, ta);
        t_exit = std::min(t_exit, tb);
    }
    if (t_enter >= t_exit) return;

    const double l = g.voxel_size();
    const int n[3] = {g.nx(), g.ny(), g.nz()};
    int idx[3], step[3];
    double t_max[3], t_delta[3];
    const double t_probe = t_enter + 1e-9 * std::max(1.0, t_exit - t_enter);
    for (int a = 0; a < 3; ++a) {
        const double p = os[a] + rs[a] * t_probe;
        idx[a] = std::clamp(static_cast<int>(std::floor((p - lo[a]) / l)), 0, n[a] - 1);
        if (rs[a] > 1e-12) {
            step[a] = 1;
            t_max[a] = (lo[a] + (idx[a] + 1) * l - os[a]) / rs[a];
            t_delta[a] = l / rs[a];
        } else if (rs[a] < -1e-12) {
            step[a] = -1;
            t_max[a] = (lo[a] + idx[a] * l - os[a]) / rs[a];
            t_delta[a] = -l / rs[a];
        } else {
            step[a] = 0;
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }

    double t = t_enter;
    while (true) {
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        const double t_next = std::min(t_max[axis], t_exit);
        if (t_next > t) visit(idx[0], idx[1], idx[2], t, t_next);
        if (t_next >= t_exit) break;
        idx[axis] += step[axis];
        if (idx[axis] < 0 || idx[axis] >= n[axis]) break;
        t = t_next;
        t_max[axis] += t_delta[axis];
    }
}

}  // namespace

IntegrationStats integrate_depth(VoxelGrid& grid, const DepthImage& depth, const Pose& pose,
                                 const CameraModel& cam) {
    cam.validate();
    if (depth.width() != cam.width || depth.height() != cam.height_px)
        throw InvalidArgument("integrate_depth: depth image is " + std::to_string(depth.width()) + "x" +
                              std::to_string(depth.height()) + ", camera expects " + std::to_string(cam.width) +
                              "x" + std::to_string(cam.height_px));
    if (!pose.finite()) throw InvalidArgument("integrate_depth: pose must be finite");

    IntegrationStats stats;
    const double tau = grid.truncation();
    const double max_range = cam.max_range;
    const Vec3 o = cam.origin(pose);

    struct Sample {
        Vec3 dir;
        double range;  // measured range
        double t_end;  // march limit
    };
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(cam.width) * cam.height_px);

    AxisBox need{o, o};
    for (int y = 0; y < cam.height_px; ++y)
        for (int x = 0; x < cam.width; ++x) {
            ++stats.rays;
            const double d = depth.at(x, y);
            if (!std::isfinite(d) || d < 0.0) {
                ++stats.rejected;
                continue;
            }
            const bool hit = d < max_range;
            const double t_end = hit ? d + tau : max_range;
            const Vec3 dir = cam.ray(pose, x + 0.5, y + 0.5);
            const Vec3 p = o + dir * t_end;
            need.min = {std::min(need.min.x, p.x), std::min(need.min.y, p.y), need.min.z};
            need.max = {std::max(need.max.x, p.x), std::max(need.max.y, p.y), need.max.z};
            samples.push_back({dir, std::min(d, max_range), t_end});
        }
    const double margin = grid.params().expand_margin;
    need.min = need.min - Vec3{margin, margin, 0.0};
    need.max = need.max + Vec3{margin, margin, 0.0};
    grid = expand_grid(grid, need);

    // Per-frame average of ray observations, fused once per voxel with weight 1.
    std::vector<float> sum(static_cast<std::size_t>(grid.voxel_count()), 0.0f);
    std::vector<std::uint32_t> count(sum.size(), 0);
    std::vector<std::size_t> touched;
    for (const Sample& s : samples) {
        traverse(grid, o, s.dir, 0.0, s.t_end, [&](int ix, int iy, int iz, double ta, double tb) {
            const double sdf = s.range - 0.5 * (ta + tb);
            if (sdf < -tau) return;
            const std::size_t i = grid.linear(ix, iy, iz);
            if (count[i] == 0) touched.push_back(i);
            sum[i] += static_cast<float>(std::min(sdf, tau));
            ++count[i];
        });
    }
    std::sort(touched.begin(), touched.end());
    const float cap = static_cast<float>(grid.params().weight_cap);
    for (std::size_t i : touched) {
        const int iz = static_cast<int>(i % grid.nz());
        const int iy = static_cast<int>((i / grid.nz()) % grid.ny());
        const int ix = static_cast<int>(i / (static_cast<std::size_t>(grid.nz()) * grid.ny()));
        Voxel& v = grid.at(ix, iy, iz);
        const float obs = sum[i] / static_cast<float>(count[i]);
        v.tsdf = std::clamp((v.tsdf * v.weight + obs) / (v.weight + 1.0f), static_cast<float>(-tau),
                            static_cast<float>(tau));
        v.weight = std::min(v.weight + 1.0f, cap);
    }
    stats.voxels_updated = touched.size();

    // Exploration marking: floor columns whose floor point falls inside the
    // margin-reduced image window and is not hidden behind the observed surface.
    const MappingParams& mp = grid.params();
    const double u_lo = 0.5 * mp.margin_w_ratio * cam.width;
    const double u_hi = cam.width - u_lo;
    const double v_lo = 0.5 * mp.margin_h_ratio * cam.height_px;
    const double v_hi = cam.height_px - v_lo;
    int cx0, cy0, cz0, cx1, cy1, cz1;
    grid.world_to_index({o.x - max_range, o.y - max_range, 0.0}, cx0, cy0, cz0);
    grid.world_to_index({o.x + max_range, o.y + max_range, 0.0}, cx1, cy1, cz1);
    cx0 = std::max(cx0, 0);
    cy0 = std::max(cy0, 0);
    cx1 = std::min(cx1, grid.nx() - 1);
    cy1 = std::min(cy1, grid.ny() - 1);
    for (int ix = cx0; ix <= cx1; ++ix)
        for (int iy = cy0; iy <= cy1; ++iy) {
            const Vec3 c = grid.voxel_center(ix, iy, 0);
            const Vec3 floor_pt{c.x, c.y, grid.origin().z};
            const double range = (floor_pt - o).norm();
            if (range > max_range) continue;
            const auto px = cam.project(pose, floor_pt);
            if (!px || px->u < u_lo || px->u >= u_hi || px->v < v_lo || px->v >= v_hi) continue;
            const int u = std::clamp(static_cast<int>(px->u), 0, cam.width - 1);
            const int v = std::clamp(static_cast<int>(px->v), 0, cam.height_px - 1);
            const double measured = depth.at(u, v);
            if (!std::isfinite(measured) || range > measured + tau) continue;
            for (int iz = 0; iz < grid.nz(); ++iz) grid.at(ix, iy, iz).explored = true;
        }
    return stats;
}

void clear_around(VoxelGrid& grid, Vec2 center, double radius, double below_height) {
    const double l = grid.voxel_size();
    grid = expand_grid(grid, {{center.x - radius - l, center.y - radius - l, 0.0},
                              {center.x + radius + l, center.y + radius + l, 0.0}});
    const float tau = static_cast<float>(grid.truncation());
    for (int ix = 0; ix < grid.nx(); ++ix)
        for (int iy = 0; iy < grid.ny(); ++iy) {
            const Vec3 c = grid.voxel_center(ix, iy, 0);
            if ((c.xy() - center).norm() > radius) continue;
            for (int iz = 0; iz < grid.nz(); ++iz) {
                if (grid.voxel_center(ix, iy, iz).z >= below_height) break;
                Voxel& v = grid.at(ix, iy, iz);
                if (v.weight <= 0.0f) {
                    v.tsdf = tau;
                    v.weight = 1.0f;
                }
            }
        }
}

// ---------------------------------------------------------------------------
// Map2D

Map2D::Map2D(Vec2 origin, int nx, int ny, double resolution)
    : origin_(origin), nx_(nx), ny_(ny), resolution_(resolution),
      flags_(static_cast<std::size_t>(std::max(nx, 0)) * std::max(ny, 0), 0) {}

void Map2D::set(Cell c, bool traversable, bool explored, bool occupied) {
    flags_[idx(c)] = static_cast<std::uint8_t>((traversable ? kTraversable : 0) | (explored ? kExplored : 0) |
                                               (occupied ? kOccupied : 0));
}

Vec2 Map2D::cell_center(Cell c) const {
    return {origin_.x + (c.x + 0.5) * resolution_, origin_.y + (c.y + 0.5) * resolution_};
}

Cell Map2D::world_to_cell(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
            static_cast<int>(std::floor((p.y - origin_.y) / resolution_))};
}

Map2D project_to_2d(const VoxelGrid& grid, const CameraModel& cam) {
    Map2D map(grid.origin().xy(), grid.nx(), grid.ny(), grid.voxel_size());
    for (int ix = 0; ix < grid.nx(); ++ix)
        for (int iy = 0; iy < grid.ny(); ++iy) {
            bool traversable = true, explored = true, occupied = false;
            for (int iz = 0; iz < grid.nz(); ++iz) {
                const Voxel& v = grid.at(ix, iy, iz);
                if (!v.explored) explored = false;
                if (grid.voxel_center(ix, iy, iz).z < grid.origin().z + cam.height) {
                    const Occupancy occ = grid.occupancy(ix, iy, iz);
                    if (occ != Occupancy::free) traversable = false;
                    if (occ == Occupancy::occupied) occupied = true;
                }
            }
            map.set({ix, iy}, traversable, explored, occupied);
        }
    return map;
}

// ---------------------------------------------------------------------------
// Frontiers

bool is_frontier_cell(const Map2D& map, Cell c) {
    if (!map.in_bounds(c) || !map.explored(c) || !map.traversable(c)) return false;
    constexpr Cell kNeighbors4[] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const Cell d : kNeighbors4) {
        const Cell n{c.x + d.x, c.y + d.y};
        if (map.in_bounds(n) && !map.explored(n)) return true;
    }
    return false;
}

namespace {

Vec2 unexplored_direction(const Map2D& map, Cell c, int radius) {
    Vec2 dir;
    for (int dx = -radius; dx <= radius; ++dx)
        for (int dy = -radius; dy <= radius; ++dy) {
            const Cell n{c.x + dx, c.y + dy};
            if ((dx == 0 && dy == 0) || !map.in_bounds(n) || map.explored(n)) continue;
            const double len = std::hypot(dx, dy);
            dir = dir + Vec2{dx / len, dy / len};
        }
    return dir;
}

}  // namespace

std::vector<Frontier> detect_frontiers(const Map2D& map, const HyperParams& params) {
    std::vector<Frontier> out;
    if (map.empty()) return out;
    const int nx = map.nx(), ny = map.ny();
    std::vector<int> label(static_cast<std::size_t>(nx) * ny, -1);
    auto lin = [&](Cell c) { return static_cast<std::size_t>(c.x) * ny + c.y; };

    const double res = map.resolution();
    const double spacing = params.planner.frontier_spacing;
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y) {
            const Cell seed{x, y};
            if (label[lin(seed)] != -1 || !is_frontier_cell(map, seed)) continue;
            // Flood fill the 8-connected component.
            std::vector<Cell> cells{seed}, stack{seed};
            label[lin(seed)] = -2;
            while (!stack.empty()) {
                const Cell c = stack.back();
                stack.pop_back();
                for (int dx = -1; dx <= 1; ++dx)
                    for (int dy = -1; dy <= 1; ++dy) {
                        const Cell n{c.x + dx, c.y + dy};
                        if (!map.in_bounds(n) || label[lin(n)] != -1 || !is_frontier_cell(map, n)) continue;
                        label[lin(n)] = -2;
                        cells.push_back(n);
                        stack.push_back(n);
                    }
            }
            if (static_cast<int>(cells.size()) < params.visual_prompt.min_points_clustering) continue;
            std::sort(cells.begin(), cells.end());

            Frontier f;
            f.cells = std::move(cells);
            for (const Cell c : f.cells) f.centroid = f.centroid + map.cell_center(c);
            f.centroid = f.centroid * (1.0 / static_cast<double>(f.cells.size()));

            // Farthest-point picks, seeded by the cell nearest the centroid.
            std::vector<Cell> picked;
            auto nearest = std::min_element(f.cells.begin(), f.cells.end(), [&](Cell a, Cell b) {
                return (map.cell_center(a) - f.centroid).norm() < (map.cell_center(b) - f.centroid).norm();
            });
            picked.push_back(*nearest);
            while (true) {
                double best = -1.0;
                Cell best_cell{};
                for (const Cell c : f.cells) {
                    double dmin = std::numeric_limits<double>::infinity();
                    for (const Cell p : picked) dmin = std::min(dmin, (map.cell_center(c) - map.cell_center(p)).norm());
                    if (dmin > best) {
                        best = dmin;
                        best_cell = c;
                    }
                }
                if (best < spacing) break;
                picked.push_back(best_cell);
            }
            const int radius = std::max(1, static_cast<int>(std::lround(0.5 * spacing / res)));
            for (const Cell c : picked) {
                Vec2 dir = unexplored_direction(map, c, radius);
                if (dir.norm() < 1e-9) dir = map.cell_center(c) - f.centroid;
                const double yaw = dir.norm() < 1e-9 ? 0.0 : std::atan2(dir.y, dir.x);
                const Vec2 p = map.cell_center(c);
                f.candidate_poses.emplace_back(p.x, p.y, yaw);
            }
            out.push_back(std::move(f));
        }
    return out;
}

CandidateSet sample_candidates(const std::vector<Frontier>& frontiers, const Pose& agent,
                               const HyperParams& params) {
    const auto& vp = params.visual_prompt;
    CandidateSet result;
    if (frontiers.empty()) return result;

    std::vector<CandidatePose> in_band, out_band;
    for (std::size_t fi = 0; fi < frontiers.size(); ++fi)
        for (const Pose& p : frontiers[fi].candidate_poses) {
            const double d = (p.xy() - agent.xy()).norm();
            CandidatePose cp{p, static_cast<int>(fi), d};
            (d >= vp.point_min_dist && d <= vp.point_max_dist ? in_band : out_band).push_back(cp);
        }
    auto by_distance = [](const CandidatePose& a, const CandidatePose& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.frontier != b.frontier) return a.frontier < b.frontier;
        if (a.pose.position.x != b.pose.position.x) return a.pose.position.x < b.pose.position.x;
        return a.pose.position.y < b.pose.position.y;
    };
    std::sort(in_band.begin(), in_band.end(), by_distance);
    std::sort(out_band.begin(), out_band.end(), by_distance);

    if (in_band.empty()) {
        // Degenerate band: head for the nearest frontier centroid.
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t fi = 0; fi < frontiers.size(); ++fi) {
            const double d = (frontiers[fi].centroid - agent.xy()).norm();
            if (d < best_d) {
                best_d = d;
                best = fi;
            }
        }
        const Vec2 c = frontiers[best].centroid;
        const Vec2 dir = c - agent.xy();
        const double yaw = dir.norm() > 1e-9 ? std::atan2(dir.y, dir.x) : agent.yaw;
        result.candidates.push_back({Pose(c.x, c.y, yaw), static_cast<int>(best), best_d});
        result.fallback = true;
        return result;
    }

    auto min_sep = [&](const CandidatePose& c) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& p : result.candidates) d = std::min(d, (p.pose.xy() - c.pose.xy()).norm());
        return d;
    };
    result.candidates.push_back(in_band.front());
    while (static_cast<int>(result.candidates.size()) < vp.num_prompt_points) {
        const CandidatePose* best = nullptr;
        double best_sep = -1.0;
        for (const auto& c : in_band) {
            const double sep = min_sep(c);
            if (sep >= vp.cluster_threshold && sep > best_sep) {
                best_sep = sep;
                best = &c;
            }
        }
        if (!best) break;
        result.candidates.push_back(*best);
    }
    for (const auto& c : out_band) {
        if (static_cast<int>(result.candidates.size()) >= vp.min_prompt_points) break;
        if (min_sep(c) < vp.cluster_threshold) continue;
        result.candidates.push_back(c);
        result.relaxed = true;
    }
    return result;
}

}  // namespace meqa
