#include "meqa/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "meqa/errors.hpp"

namespace meqa {

void RetrievalParams::validate() const {
    if (!(scene_sim_threshold > 0.0 && scene_sim_threshold < 1.0))
        throw ValidationError("retrieval.scene_sim_threshold must be in (0, 1)");
    if (!(alpha_e >= 0.0)) throw ValidationError("retrieval.alpha_e must be >= 0");
    if (!(alpha_s > 0.0 && alpha_s < 1.0)) throw ValidationError("retrieval.alpha_s must be in (0, 1)");
    if (k_min < 1) throw ValidationError("retrieval.k_min must be >= 1");
    if (!(beta >= 0.0)) throw ValidationError("retrieval.beta must be >= 0");
    if (max_retrieval_num < k_min) throw ValidationError("rag.max_retrieval_num must be >= k_min");
    if (top_k_scene < 1) throw ValidationError("retrieval.top_k_scene must be >= 1");
}

void UpdateParams::validate() const {
    if (!(beta_p >= 0.0)) throw ValidationError("memory_update.beta_p must be >= 0");
    if (!(beta_r_deg >= 0.0)) throw ValidationError("memory_update.beta_r_deg must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("memory_update.alpha must be in [0, 1]");
    if (!(sim_threshold >= 0.0 && sim_threshold <= 1.0))
        throw ValidationError("memory_update.sim_threshold must be in [0, 1]");
    if (!(black_ratio_max >= 0.0 && black_ratio_max <= 1.0))
        throw ValidationError("memory_update.black_ratio_max must be in [0, 1]");
}

HyperParams HyperParams::defaults() {
    HyperParams p;
    p.camera.width = 64;
    p.camera.height_px = 48;
    return p;
}

void HyperParams::validate() const {
    try {
        camera.validate();
    } catch (const InvalidArgument& e) {
        throw ValidationError(std::string("camera: ") + e.what());
    }
    retrieval.validate();
    update.validate();
    if (!(mapping.voxel_size > 0.0)) throw ValidationError("camera.tsdf_grid_size must be positive");
    if (!(mapping.truncation_voxels > 0.0)) throw ValidationError("mapping.truncation_voxels must be positive");
    if (!(mapping.weight_cap >= 1.0)) throw ValidationError("mapping.weight_cap must be >= 1");
    if (!(mapping.margin_w_ratio >= 0.0 && mapping.margin_w_ratio < 0.5))
        throw ValidationError("camera.margin_w_ratio must be in [0, 0.5)");
    if (!(mapping.margin_h_ratio >= 0.0 && mapping.margin_h_ratio < 1.0))
        throw ValidationError("camera.margin_h_ratio must be in [0, 1)");
    if (camera.height >= mapping.grid_height) throw ValidationError("camera.camera_height must be below grid height");
    if (!(navigation.max_step_room_size_ratio > 0.0))
        throw ValidationError("navigation.max_step_room_size_ratio must be positive");
    if (!(navigation.black_pixel_ratio >= 0.0 && navigation.black_pixel_ratio <= 1.0))
        throw ValidationError("navigation.black_pixel_ratio must be in [0, 1]");
    if (navigation.min_random_init_steps < 0) throw ValidationError("navigation.min_random_init_steps must be >= 0");
    if (!(planner.min_dist_from_cur >= 0.0 && planner.max_dist_from_cur > planner.min_dist_from_cur))
        throw ValidationError("planner.min/max_dist_from_cur must satisfy 0 <= min < max");
    if (!(planner.smooth_sigma > 0.0)) throw ValidationError("planner.smooth_sigma must be positive");
    if (!(planner.frontier_spacing > 0.0)) throw ValidationError("planner.frontier_spacing must be positive");
    if (visual_prompt.num_prompt_points < 1 || visual_prompt.num_prompt_points > 26)
        throw ValidationError("visual_prompt.num_prompt_points must be in [1, 26]");
    if (visual_prompt.min_prompt_points < 1 || visual_prompt.min_prompt_points > visual_prompt.num_prompt_points)
        throw ValidationError("visual_prompt.min_prompt_points must be in [1, num_prompt_points]");
    if (visual_prompt.min_points_clustering < 1) throw ValidationError("visual_prompt.min_points_clustering must be >= 1");
    if (!(visual_prompt.point_max_dist > visual_prompt.point_min_dist))
        throw ValidationError("visual_prompt.point_max_dist must exceed point_min_dist");
    if (encoder.dim < 2) throw ValidationError("encoder.dim must be >= 2");
    if (encoder.mode != "semantic" && encoder.mode != "hash")
        throw ValidationError("encoder.mode must be 'semantic' or 'hash'");
    if (retrieval.dim != 2 * encoder.dim) throw ValidationError("rag.dim must equal 2 * encoder.dim");
    if (!(stop.gamma >= 0.0 && stop.gamma <= 1.0)) throw ValidationError("stop.gamma must be in [0, 1]");
}

namespace {

using FieldPtr = std::variant<double*, int*, bool*, std::string*, std::int64_t*, std::uint64_t*>;

struct Binding {
    const char* section;  // empty for top-level keys
    const char* key;
    FieldPtr field;
};

// Carried only so configs copied from the reference setup load unchanged.
struct PassThrough {
    std::string model_name_or_path = "scripted";
    std::string text = "clip-vit-large-patch14";
    std::string visual = "clip-vit-large-patch14";
    std::string detector = "ground_truth";
    std::string device = "cpu";
};

std::vector<Binding> bindings(HyperParams& p, PassThrough& pt) {
    return {
        {"", "seed", &p.seed},
        {"", "device", &pt.device},
        {"vlm", "model_name_or_path", &pt.model_name_or_path},
        {"rag", "use_rag", &p.retrieval.use_rag},
        {"rag", "text", &pt.text},
        {"rag", "visual", &pt.visual},
        {"rag", "dim", &p.retrieval.dim},
        {"rag", "max_retrieval_num", &p.retrieval.max_retrieval_num},
        {"camera", "detector", &pt.detector},
        {"camera", "camera_height", &p.camera.height},
        {"camera", "camera_tilt_deg", &p.camera.tilt_deg},
        {"camera", "img_width", &p.camera.width},
        {"camera", "img_height", &p.camera.height_px},
        {"camera", "hfov", &p.camera.hfov_deg},
        {"camera", "max_range", &p.camera.max_range},
        {"camera", "tsdf_grid_size", &p.mapping.voxel_size},
        {"camera", "margin_w_ratio", &p.mapping.margin_w_ratio},
        {"camera", "margin_h_ratio", &p.mapping.margin_h_ratio},
        {"mapping", "grid_height", &p.mapping.grid_height},
        {"mapping", "truncation_voxels", &p.mapping.truncation_voxels},
        {"mapping", "weight_cap", &p.mapping.weight_cap},
        {"mapping", "expand_margin", &p.mapping.expand_margin},
        {"mapping", "max_voxels", &p.mapping.max_voxels},
        {"navigation", "init_clearance", &p.navigation.init_clearance},
        {"navigation", "max_step_room_size_ratio", &p.navigation.max_step_room_size_ratio},
        {"navigation", "black_pixel_ratio", &p.navigation.black_pixel_ratio},
        {"navigation", "min_random_init_steps", &p.navigation.min_random_init_steps},
        {"navigation", "collision_margin", &p.navigation.collision_margin},
        {"planner", "dist_T", &p.planner.dist_T},
        {"planner", "unexplored_T", &p.planner.unexplored_T},
        {"planner", "unoccupied_T", &p.planner.unoccupied_T},
        {"planner", "val_T", &p.planner.val_T},
        {"planner", "val_dir_T", &p.planner.val_dir_T},
        {"planner", "max_val_check", &p.planner.max_val_check},
        {"planner", "smooth_sigma", &p.planner.smooth_sigma},
        {"planner", "eps", &p.planner.eps},
        {"planner", "min_dist_from_cur", &p.planner.min_dist_from_cur},
        {"planner", "max_dist_from_cur", &p.planner.max_dist_from_cur},
        {"planner", "frontier_spacing", &p.planner.frontier_spacing},
        {"planner", "min_neighbors", &p.planner.min_neighbors},
        {"planner", "max_neighbors", &p.planner.max_neighbors},
        {"planner", "max_unexplored", &p.planner.max_unexplored},
        {"planner", "max_unoccupied", &p.planner.max_unoccupied},
        {"visual_prompt", "cluster_threshold", &p.visual_prompt.cluster_threshold},
        {"visual_prompt", "num_prompt_points", &p.visual_prompt.num_prompt_points},
        {"visual_prompt", "num_max_unoccupied", &p.visual_prompt.num_max_unoccupied},
        {"visual_prompt", "min_points_clustering", &p.visual_prompt.min_points_clustering},
        {"visual_prompt", "point_min_dist", &p.visual_prompt.point_min_dist},
        {"visual_prompt", "point_max_dist", &p.visual_prompt.point_max_dist},
        {"visual_prompt", "cam_offset", &p.visual_prompt.cam_offset},
        {"visual_prompt", "min_prompt_points", &p.visual_prompt.min_prompt_points},
        {"visual_prompt", "circle_radius", &p.visual_prompt.circle_radius},
        {"retrieval", "top_k_scene", &p.retrieval.top_k_scene},
        {"retrieval", "scene_sim_threshold", &p.retrieval.scene_sim_threshold},
        {"retrieval", "alpha_e", &p.retrieval.alpha_e},
        {"retrieval", "alpha_s", &p.retrieval.alpha_s},
        {"retrieval", "k_min", &p.retrieval.k_min},
        {"retrieval", "beta", &p.retrieval.beta},
        {"memory_update", "beta_p", &p.update.beta_p},
        {"memory_update", "beta_r_deg", &p.update.beta_r_deg},
        {"memory_update", "alpha", &p.update.alpha},
        {"memory_update", "sim_threshold", &p.update.sim_threshold},
        {"memory_update", "black_ratio_max", &p.update.black_ratio_max},
        {"encoder", "dim", &p.encoder.dim},
        {"encoder", "mode", &p.encoder.mode},
        {"stop", "gamma", &p.stop.gamma},
    };
}

void assign(const YAML::Node& node, const FieldPtr& field, const std::string& name) {
    try {
        std::visit([&](auto* ptr) { *ptr = node.as<std::remove_pointer_t<decltype(ptr)>>(); }, field);
    } catch (const YAML::Exception&) {
        throw ValidationError("config key '" + name + "' has an invalid value");
    }
}

void emit(YAML::Emitter& out, const FieldPtr& field) {
    std::visit(
        [&](auto* ptr) {
            using T = std::remove_pointer_t<decltype(ptr)>;
            if constexpr (std::is_same_v<T, double>) {
                std::ostringstream s;
                s.precision(17);
                s << *ptr;
                out << YAML::Value << s.str();
            } else {
                out << YAML::Value << *ptr;
            }
        },
        field);
}

}  // namespace

HyperParams parse_config(const std::string& yaml_text) {
    HyperParams p = HyperParams::defaults();
    PassThrough pt;
    const auto table = bindings(p, pt);
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ValidationError(std::string("config is not valid YAML: ") + e.what());
    }
    if (root.IsNull()) return p;
    if (!root.IsMap()) throw ValidationError("config root must be a mapping");

    auto find = [&](const std::string& section, const std::string& key) -> const Binding* {
        for (const auto& b : table)
            if (section == b.section && key == b.key) return &b;
        return nullptr;
    };

    for (const auto& entry : root) {
        const auto name = entry.first.as<std::string>();
        if (entry.second.IsMap()) {
            for (const auto& kv : entry.second) {
                const auto key = kv.first.as<std::string>();
                const Binding* b = find(name, key);
                if (!b) throw ValidationError("unknown config key '" + name + "." + key + "'");
                assign(kv.second, b->field, name + "." + key);
            }
        } else {
            const Binding* b = find("", name);
            if (!b) throw ValidationError("unknown config key '" + name + "'");
            assign(entry.second, b->field, name);
        }
    }
    p.validate();
    return p;
}

HyperParams load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string dump_config(const HyperParams& params) {
    HyperParams copy = params;
    PassThrough pt;
    const auto table = bindings(copy, pt);
    YAML::Emitter out;
    out << YAML::BeginMap;
    std::string open_section;
    bool in_section = false;
    for (const auto& b : table) {
        const std::string section = b.section;
        if (section != open_section || (section.empty() && in_section)) {
            if (in_section) out << YAML::EndMap;
            in_section = false;
            open_section = section;
            if (!section.empty()) {
                out << YAML::Key << section << YAML::Value << YAML::BeginMap;
                in_section = true;
            }
        }
        out << YAML::Key << b.key;
        emit(out, b.field);
    }
    if (in_section) out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

}  // namespace meqa
