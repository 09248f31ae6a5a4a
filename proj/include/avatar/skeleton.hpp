#pragma once

#include "avatar/config.hpp"
#include "avatar/dual_quaternion.hpp"
#include "avatar/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace avatar {

using DualQuat = DualQuaternion<double>;
using Isometry = Eigen::Isometry3d;

struct Joint {
    std::string name;
    int parent = -1;
    Isometry rest = Isometry::Identity();  // relative to parent
};

enum class DofType { Rotational, Translational };

struct Dof {
    int joint = 0;
    Vec3 axis = Vec3::UnitX();
    DofType type = DofType::Rotational;
    double min = -3.14159265358979;
    double max = 3.14159265358979;
    std::string name;
};

/// Topologically sorted joint tree plus the P degrees of freedom that drive it.
struct Skeleton {
    std::vector<Joint> joints;
    std::vector<Dof> dofs;

    int dof_count() const { return static_cast<int>(dofs.size()); }
    int joint_count() const { return static_cast<int>(joints.size()); }

    /// DoF indices that translate the root joint.
    std::vector<int> root_translation_dofs() const;

    /// True if `joint` equals `ancestor` or lies below it.
    bool in_subtree(int joint, int ancestor) const;
};

void validate(const Skeleton& skeleton);

Skeleton skeleton_from_json(const nlohmann::json& json);
nlohmann::json to_json(const Skeleton& skeleton);
Skeleton load_skeleton(const std::filesystem::path& path);

/// Window of k consecutive poses (one row each) ending at frame `frame`.
struct SkeletalMotion {
    Eigen::MatrixXd window;  // k × P
    int frame = 0;           // absolute index of the last row

    int length() const { return static_cast<int>(window.rows()); }
    Eigen::VectorXd current() const { return window.row(window.rows() - 1).transpose(); }
};

/// A full recorded sequence; windows are cut from it.
struct MotionSequence {
    double fps = config::kMotionFps;
    Eigen::MatrixXd frames;  // T × P

    int frame_count() const { return static_cast<int>(frames.rows()); }

    /// Window of `k` frames ending at `frame`, repeating frame 0 before the start.
    SkeletalMotion window(int frame, int k = config::kMotionWindow) const;
};

MotionSequence motion_from_json(const nlohmann::json& json);
nlohmann::json to_json(const MotionSequence& motion);
MotionSequence load_motion(const std::filesystem::path& path);

/// World transforms of every joint in the posed skeleton.
std::vector<Isometry> joint_world_transforms(const Skeleton& skeleton, const Eigen::VectorXd& pose);

/// Skinning transforms (posed world × rest world⁻¹) as unit dual quaternions.
std::vector<DualQuat> forward_kinematics(const Skeleton& skeleton, const Eigen::VectorXd& pose);

/// Dual-quaternion linear blending. Each vertex blends its joints' transforms
/// with signs aligned to the highest-weight joint, then normalizes.
Positions dq_skin(const Positions& rest, const SkinWeights& weights, const std::vector<DualQuat>& transforms);

/// Shifts the root-translation DoFs so the last frame of the window sits at the origin.
SkeletalMotion normalize_motion(const Skeleton& skeleton, const SkeletalMotion& motion);

}  // namespace avatar
