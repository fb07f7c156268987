#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "meqa/camera.hpp"

namespace meqa {

struct MappingParams {
    double voxel_size = 0.1;         // tsdf grid size
    double grid_height = 3.5;        // fixed vertical extent, meters
    double truncation_voxels = 3.0;  // tau = truncation_voxels * voxel_size
    double weight_cap = 100.0;
    double margin_w_ratio = 0.25;
    double margin_h_ratio = 0.6;
    double expand_margin = 1.0;            // meters of unknown space kept around observed rays
    std::int64_t max_voxels = 40'000'000;  // resource guard for expand_grid

    double truncation() const { return truncation_voxels * voxel_size; }
    bool operator==(const MappingParams&) const = default;
};

struct NavigationParams {
    double init_clearance = 0.5;
    double max_step_room_size_ratio = 3.0;
    double black_pixel_ratio = 0.7;  // view rejection while navigating
    int min_random_init_steps = 2;
    double collision_margin = 0.05;
};

// Keys mirror the planner section of the reference hyper-parameter table. Only
// smooth_sigma, min/max_dist_from_cur and frontier_spacing drive this planner;
// the rest are parsed and carried for config compatibility.
struct PlannerParams {
    double dist_T = 10.0;
    double unexplored_T = 0.2;
    double unoccupied_T = 2.0;
    double val_T = 0.5;
    double val_dir_T = 0.5;
    int max_val_check = 3;
    double smooth_sigma = 5.0;  // cells
    double eps = 1.0;
    double min_dist_from_cur = 0.5;
    double max_dist_from_cur = 3.0;
    double frontier_spacing = 1.5;
    int min_neighbors = 3;
    int max_neighbors = 4;
    int max_unexplored = 3;
    int max_unoccupied = 1;
};

struct VisualPromptParams {
    double cluster_threshold = 1.0;
    int num_prompt_points = 3;
    int num_max_unoccupied = 300;
    int min_points_clustering = 3;
    double point_min_dist = 2.0;
    double point_max_dist = 10.0;
    double cam_offset = 0.6;
    int min_prompt_points = 2;
    int circle_radius = 18;
};

struct RetrievalParams {
    bool use_rag = true;
    int dim = 1536;  // fused query dimension (image half + text half)
    int max_retrieval_num = 10;
    int top_k_scene = 5;
    double scene_sim_threshold = 0.65;
    double alpha_e = 0.9;
    double alpha_s = 0.5;
    int k_min = 2;
    double beta = 8.0;

    void validate() const;
};

struct UpdateParams {
    double beta_p = 1.0;            // meters
    double beta_r_deg = 30.0;       // degrees
    double alpha = 0.5;             // SSIM weight in the blended similarity
    double sim_threshold = 0.85;
    double black_ratio_max = 0.5;

    double beta_r() const { return deg2rad(beta_r_deg); }
    void validate() const;
};

struct EncoderParams {
    int dim = 768;
    std::string mode = "semantic";  // "semantic" or "hash"
};

struct StopParams {
    double gamma = 0.5;
};

struct HyperParams {
    std::uint64_t seed = 42;
    CameraModel camera;
    MappingParams mapping;
    NavigationParams navigation;
    PlannerParams planner;
    VisualPromptParams visual_prompt;
    RetrievalParams retrieval;
    UpdateParams update;
    EncoderParams encoder;
    StopParams stop;

    // Desk-scale defaults: table values plus a 64x48 simulator raster.
    static HyperParams defaults();

    double gamma_s() const { return navigation.max_step_room_size_ratio; }
    void validate() const;
};

// YAML with the reference table's key names (snake_case) grouped by section.
// Missing keys keep their defaults; unknown keys are rejected.
HyperParams load_config(const std::filesystem::path& path);
HyperParams parse_config(const std::string& yaml_text);
std::string dump_config(const HyperParams& params);

}  // namespace meqa
