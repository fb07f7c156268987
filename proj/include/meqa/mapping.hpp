#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "meqa/camera.hpp"
#include "meqa/config.hpp"
#include "meqa/geometry.hpp"
#include "meqa/image.hpp"

namespace meqa {

enum class Occupancy : std::uint8_t { unknown, free, occupied };

struct AxisBox {
    Vec3 min;
    Vec3 max;

    bool finite() const { return min.finite() && max.finite(); }
    bool contains_xy(const AxisBox& o) const {
        return o.min.x >= min.x && o.min.y >= min.y && o.max.x <= max.x && o.max.y <= max.y;
    }
};

struct Voxel {
    float tsdf = 0.0f;
    float weight = 0.0f;
    bool explored = false;

    bool operator==(const Voxel&) const = default;
};

// Extensible TSDF grid. The vertical extent is fixed (grid_height); x/y grow
// in whole voxels so world coordinates of existing voxels never move.
class VoxelGrid {
public:
    VoxelGrid(Vec3 origin, int nx, int ny, const MappingParams& params);

    // Grid of the given half extent centered on a floor point, snapped to voxel multiples.
    static VoxelGrid around(Vec2 center, double half_extent, const MappingParams& params);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nz() const { return nz_; }
    double voxel_size() const { return params_.voxel_size; }
    double truncation() const { return params_.truncation(); }
    const Vec3& origin() const { return origin_; }
    const MappingParams& params() const { return params_; }
    AxisBox bounds() const;
    std::int64_t voxel_count() const { return static_cast<std::int64_t>(nx_) * ny_ * nz_; }

    bool in_bounds(int ix, int iy, int iz) const {
        return ix >= 0 && iy >= 0 && iz >= 0 && ix < nx_ && iy < ny_ && iz < nz_;
    }
    const Voxel& at(int ix, int iy, int iz) const { return voxels_[linear(ix, iy, iz)]; }
    Voxel& at(int ix, int iy, int iz) { return voxels_[linear(ix, iy, iz)]; }
    Occupancy occupancy(int ix, int iy, int iz) const;

    Vec3 voxel_center(int ix, int iy, int iz) const;
    // Floor index of the voxel containing a world point (may be out of bounds).
    void world_to_index(const Vec3& p, int& ix, int& iy, int& iz) const;
    // World-coordinate readback; unknown voxel when outside the grid.
    Voxel sample(const Vec3& world) const;

    std::size_t linear(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(ix) * ny_ + iy) * nz_ + iz;
    }

    bool operator==(const VoxelGrid&) const = default;

private:
    friend VoxelGrid expand_grid(const VoxelGrid&, const AxisBox&);

    Vec3 origin_;
    int nx_ = 0;
    int ny_ = 0;
    int nz_ = 0;
    MappingParams params_;
    std::vector<Voxel> voxels_;
};

struct Cell {
    int x = 0;
    int y = 0;
    auto operator<=>(const Cell&) const = default;
};

// Top-down projection of the voxel grid at the voxel resolution.
class Map2D {
public:
    Map2D() = default;
    Map2D(Vec2 origin, int nx, int ny, double resolution);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double resolution() const { return resolution_; }
    const Vec2& origin() const { return origin_; }
    bool empty() const { return nx_ == 0 || ny_ == 0; }

    bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < nx_ && c.y < ny_; }
    bool traversable(Cell c) const { return flags_[idx(c)] & kTraversable; }
    bool explored(Cell c) const { return flags_[idx(c)] & kExplored; }
    bool occupied(Cell c) const { return flags_[idx(c)] & kOccupied; }
    void set(Cell c, bool traversable, bool explored, bool occupied = false);

    Vec2 cell_center(Cell c) const;
    Cell world_to_cell(Vec2 p) const;

    bool operator==(const Map2D&) const = default;

private:
    static constexpr std::uint8_t kTraversable = 1;
    static constexpr std::uint8_t kExplored = 2;
    static constexpr std::uint8_t kOccupied = 4;

    std::size_t idx(Cell c) const { return static_cast<std::size_t>(c.y) * nx_ + c.x; }

    Vec2 origin_;
    int nx_ = 0;
    int ny_ = 0;
    double resolution_ = 0.1;
    std::vector<std::uint8_t> flags_;
};

struct Frontier {
    std::vector<Cell> cells;  // lexicographic order
    Vec2 centroid;
    std::vector<Pose> candidate_poses;
};

struct CandidatePose {
    Pose pose;
    int frontier = -1;  // index into the frontier list, -1 for none
    double distance = 0.0;
};

struct CandidateSet {
    std::vector<CandidatePose> candidates;
    bool fallback = false;  // no candidate satisfied the distance band
    bool relaxed = false;   // topped up from outside the band to reach min_prompt_points
};

struct IntegrationStats {
    std::size_t rays = 0;
    std::size_t rejected = 0;  // non-finite or negative depth samples
    std::size_t voxels_updated = 0;
};

// Grows the grid (in place of the returned copy) to cover required_bounds in x/y.
VoxelGrid expand_grid(const VoxelGrid& grid, const AxisBox& required_bounds);

// Fuses one depth frame. Depth is range along each pixel ray; values at or
// beyond cam.max_range mean "no surface". The grid expands to cover every ray.
IntegrationStats integrate_depth(VoxelGrid& grid, const DepthImage& depth, const Pose& pose,
                                 const CameraModel& cam);

// Marks voxels below camera height within radius of a floor point as free.
void clear_around(VoxelGrid& grid, Vec2 center, double radius, double below_height);

Map2D project_to_2d(const VoxelGrid& grid, const CameraModel& cam);

bool is_frontier_cell(const Map2D& map, Cell c);

std::vector<Frontier> detect_frontiers(const Map2D& map, const HyperParams& params);

CandidateSet sample_candidates(const std::vector<Frontier>& frontiers, const Pose& agent,
                               const HyperParams& params);

}  // namespace meqa
