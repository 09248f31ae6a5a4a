#pragma once

#include "avatar/deform.hpp"
#include "avatar/field.hpp"
#include "avatar/render.hpp"
#include "avatar/skeleton.hpp"

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace avatar {

enum class FieldKind {
    Analytic,          // sphere, capsule or plane in world space
    TemplateDistance,  // signed distance to the posed template
    Decoded,           // tri-plane field over the posed template's UTTS
};

struct FieldDescription {
    FieldKind kind = FieldKind::TemplateDistance;
    AnalyticSdf analytic;

    // Decoded fields. The mapping mesh is the posed template, so it is bound
    // when the scene is posed.
    double d_max = config::kDmaxInitial;
    FeatureTriplane triplane;
    MlpWeights geometry;
    std::optional<MlpWeights> color;
    std::optional<MlpWeights> motion_encoder;  // replaces motion_code when present
    EncodingConfig encoding;
    Eigen::VectorXd motion_code;
    Vec3 global_position = Vec3::Zero();
};

/// Everything a scene file names: the avatar assets, the field, the camera
/// and the render settings.
struct SceneDescription {
    TriangleMesh mesh;  // rest template, skinned when a skeleton is given
    std::optional<Skeleton> skeleton;
    std::optional<EmbeddedGraph> graph;
    std::optional<GraphParams> params;
    std::optional<MotionSequence> motion;
    int frame = 0;
    std::optional<Eigen::VectorXd> pose;  // explicit DoFs; overrides the motion frame
    FieldDescription field;
    Camera camera;
    RenderSettings settings;

    int dof_count() const { return skeleton ? skeleton->dof_count() : 0; }
};

void validate(const SceneDescription& scene);

/// Relative paths inside `json` resolve against `base_dir`.
SceneDescription parse_scene(const nlohmann::json& json, const std::filesystem::path& base_dir);
SceneDescription load_scene(const std::filesystem::path& path);

/// Writes the scene JSON plus the files it references (template OBJ and,
/// for decoded fields, weight tensors) into the directory of `path`.
void save_scene(const std::filesystem::path& path, const SceneDescription& scene);

Camera camera_from_json(const nlohmann::json& json);
nlohmann::json to_json(const Camera& camera);
RenderSettings render_settings_from_json(const nlohmann::json& json);
nlohmann::json to_json(const RenderSettings& settings);
AnalyticSdf analytic_sdf_from_json(const nlohmann::json& json);
nlohmann::json to_json(const AnalyticSdf& sdf);

/// Skinning weights as per-vertex index and value lists.
SkinWeights skin_from_json(const nlohmann::json& json, int vertex_count, int joint_count);
nlohmann::json skin_to_json(const SkinWeights& weights);

/// Pose the scene is configured for: the explicit pose, else the motion
/// frame, else all zeros.
Eigen::VectorXd scene_pose(const SceneDescription& scene);

/// Pose window ending at the given DoFs. Earlier rows come from the motion
/// (frames before `frame`) or repeat the pose when there is none.
SkeletalMotion pose_window(const SceneDescription& scene, const Eigen::VectorXd& pose, int frame);

/// Posed template vertices. Without a skeleton the rest template is returned.
Positions pose_template(const SceneDescription& scene, const SkeletalMotion& window);

/// Binds the field to the posed template and assembles the render input.
Scene make_render_scene(const SceneDescription& scene, const Positions& posed, const SkeletalMotion& window);

/// Same field, bound to the posed template.
SdfField bind_field(const SceneDescription& scene, const Positions& posed, const SkeletalMotion& window);

}  // namespace avatar
