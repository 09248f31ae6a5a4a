#include "avatar/skeleton.hpp"

#include "avatar/error.hpp"
#include "avatar/io.hpp"
#include "json_util.hpp"

#include <cmath>

namespace avatar {

using nlohmann::json;

std::vector<int> Skeleton::root_translation_dofs() const
{
    std::vector<int> out;
    for (int i = 0; i < dof_count(); ++i) {
        if (dofs[i].type == DofType::Translational && joints[dofs[i].joint].parent < 0) out.push_back(i);
    }
    return out;
}

bool Skeleton::in_subtree(int joint, int ancestor) const
{
    for (int j = joint; j >= 0; j = joints[j].parent) {
        if (j == ancestor) return true;
    }
    return false;
}

void validate(const Skeleton& skeleton)
{
    int roots = 0;
    for (int j = 0; j < skeleton.joint_count(); ++j) {
        const int parent = skeleton.joints[j].parent;
        if (parent < 0) {
            ++roots;
        } else if (parent >= j) {
            throw TopologyError("joint " + std::to_string(j) + " precedes its parent " + std::to_string(parent));
        }
    }
    if (roots != 1) throw TopologyError("skeleton needs exactly one root, found " + std::to_string(roots));
    if (skeleton.dofs.empty()) throw DimensionError("skeleton has no degrees of freedom");
    for (const Dof& dof : skeleton.dofs) {
        if (dof.joint < 0 || dof.joint >= skeleton.joint_count()) throw TopologyError("DoF references a missing joint");
        if (std::abs(dof.axis.norm() - 1.0) > 1e-9) throw DomainError("DoF axis must be unit length");
    }
}

Skeleton skeleton_from_json(const json& j)
{
    Skeleton s;
    for (const auto& jj : j.at("joints")) {
        Joint joint;
        joint.name = jj.value("name", "");
        joint.parent = jj.value("parent", -1);
        if (jj.contains("rest")) {
            const auto& rest = jj["rest"];
            if (rest.contains("rotation")) {
                const auto& q = rest["rotation"];
                joint.rest.linear() =
                    Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>())
                        .normalized()
                        .toRotationMatrix();
            }
            if (rest.contains("translation")) joint.rest.translation() = detail::vec3(rest["translation"]);
        }
        s.joints.push_back(joint);
    }
    for (const auto& jd : j.at("dofs")) {
        Dof dof;
        dof.joint = jd.at("joint").get<int>();
        dof.axis = detail::vec3(jd.at("axis")).normalized();
        const std::string type = jd.value("type", "rotational");
        if (type == "rotational") {
            dof.type = DofType::Rotational;
        } else if (type == "translational") {
            dof.type = DofType::Translational;
            dof.min = -10.0;
            dof.max = 10.0;
        } else {
            throw Error("unknown DoF type '" + type + "'");
        }
        dof.min = jd.value("min", dof.min);
        dof.max = jd.value("max", dof.max);
        dof.name = jd.value("name", "");
        s.dofs.push_back(dof);
    }
    validate(s);
    return s;
}

json to_json(const Skeleton& s)
{
    json out;
    out["joints"] = json::array();
    for (const Joint& joint : s.joints) {
        const Eigen::Quaterniond q(joint.rest.rotation());
        out["joints"].push_back({{"name", joint.name},
                                 {"parent", joint.parent},
                                 {"rest",
                                  {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
                                   {"translation", detail::to_json(Vec3(joint.rest.translation()))}}}});
    }
    out["dofs"] = json::array();
    for (const Dof& dof : s.dofs) {
        out["dofs"].push_back({{"joint", dof.joint},
                               {"axis", detail::to_json(dof.axis)},
                               {"type", dof.type == DofType::Rotational ? "rotational" : "translational"},
                               {"min", dof.min},
                               {"max", dof.max},
                               {"name", dof.name}});
    }
    return out;
}

Skeleton load_skeleton(const std::filesystem::path& path) { return skeleton_from_json(json::parse(read_text_file(path))); }

SkeletalMotion MotionSequence::window(int frame, int k) const
{
    if (frame < 0 || frame >= frame_count()) throw DomainError("frame " + std::to_string(frame) + " outside sequence");
    if (k < 1) throw DomainError("window length must be >= 1");
    SkeletalMotion m;
    m.frame = frame;
    m.window.resize(k, frames.cols());
    for (int i = 0; i < k; ++i) m.window.row(i) = frames.row(std::max(0, frame - (k - 1) + i));
    return m;
}

MotionSequence motion_from_json(const json& j)
{
    MotionSequence m;
    m.fps = j.value("fps", 25.0);
    const auto& frames = j.at("frames");
    if (frames.empty()) throw DimensionError("motion has no frames");
    const std::size_t p = frames[0].size();
    m.frames.resize(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(p));
    for (std::size_t f = 0; f < frames.size(); ++f) {
        if (frames[f].size() != p) throw DimensionError("motion frame " + std::to_string(f) + " has a different DoF count");
        for (std::size_t d = 0; d < p; ++d) {
            m.frames(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(d)) = frames[f][d].get<double>();
        }
    }
    return m;
}

json to_json(const MotionSequence& m)
{
    json frames = json::array();
    for (Eigen::Index f = 0; f < m.frames.rows(); ++f) {
        json row = json::array();
        for (Eigen::Index d = 0; d < m.frames.cols(); ++d) row.push_back(m.frames(f, d));
        frames.push_back(row);
    }
    return {{"fps", m.fps}, {"frames", frames}};
}

MotionSequence load_motion(const std::filesystem::path& path) { return motion_from_json(json::parse(read_text_file(path))); }

namespace {

std::vector<Isometry> world_transforms(const Skeleton& skeleton, const Eigen::VectorXd* pose)
{
    const int nj = skeleton.joint_count();
    std::vector<Isometry> local(nj);
    for (int j = 0; j < nj; ++j) local[j] = skeleton.joints[j].rest;
    if (pose) {
        for (int i = 0; i < skeleton.dof_count(); ++i) {
            const Dof& dof = skeleton.dofs[i];
            const double value = (*pose)(i);
            if (dof.type == DofType::Rotational) {
                local[dof.joint].rotate(Eigen::AngleAxisd(value, dof.axis));
            } else {
                local[dof.joint].translate(value * dof.axis);
            }
        }
    }
    std::vector<Isometry> world(nj);
    for (int j = 0; j < nj; ++j) {
        const int parent = skeleton.joints[j].parent;
        world[j] = parent < 0 ? local[j] : world[parent] * local[j];
    }
    return world;
}

}  // namespace

std::vector<Isometry> joint_world_transforms(const Skeleton& skeleton, const Eigen::VectorXd& pose)
{
    if (pose.size() != skeleton.dof_count()) {
        throw DimensionError("pose has " + std::to_string(pose.size()) + " values, skeleton has " +
                             std::to_string(skeleton.dof_count()) + " DoFs");
    }
    return world_transforms(skeleton, &pose);
}

std::vector<DualQuat> forward_kinematics(const Skeleton& skeleton, const Eigen::VectorXd& pose)
{
    const auto posed = joint_world_transforms(skeleton, pose);
    const auto rest = world_transforms(skeleton, nullptr);
    std::vector<DualQuat> out;
    out.reserve(posed.size());
    for (std::size_t j = 0; j < posed.size(); ++j) {
        out.push_back(DualQuat::from_isometry(posed[j] * rest[j].inverse()));
    }
    return out;
}

Positions dq_skin(const Positions& rest, const SkinWeights& weights, const std::vector<DualQuat>& transforms)
{
    if (weights.rows() != rest.rows()) throw DimensionError("skin weights need one row per vertex");
    if (weights.cols() > static_cast<Eigen::Index>(transforms.size())) {
        throw DimensionError("skin weights reference " + std::to_string(weights.cols()) + " joints, only " +
                             std::to_string(transforms.size()) + " transforms given");
    }
    Positions out(rest.rows(), 3);
    std::string failure;
#pragma omp parallel for schedule(static)
    for (Eigen::Index v = 0; v < rest.rows(); ++v) {
        int pivot = -1;
        double best = -1.0;
        for (SkinWeights::InnerIterator it(weights, v); it; ++it) {
            if (it.value() > best) {
                best = it.value();
                pivot = static_cast<int>(it.col());
            }
        }
        Eigen::Vector4d real = Eigen::Vector4d::Zero();
        Eigen::Vector4d dual = Eigen::Vector4d::Zero();
        if (pivot >= 0) {
            const Eigen::Vector4d pivot_real = transforms[pivot].real().coeffs();
            for (SkinWeights::InnerIterator it(weights, v); it; ++it) {
                const DualQuat& q = transforms[it.col()];
                const double sign = q.real().coeffs().dot(pivot_real) < 0.0 ? -1.0 : 1.0;
                real += sign * it.value() * q.real().coeffs();
                dual += sign * it.value() * q.dual().coeffs();
            }
        }
        const double norm = real.norm();
        if (!(norm > 1e-12)) {
#pragma omp critical
            failure = "blended dual quaternion vanishes at vertex " + std::to_string(v);
            continue;
        }
        const DualQuat blended{Eigen::Quaterniond(real / norm), Eigen::Quaterniond(dual / norm)};
        out.row(v) = blended.transform_point(rest.row(v).transpose()).transpose();
    }
    if (!failure.empty()) throw DomainError(failure);
    return out;
}

SkeletalMotion normalize_motion(const Skeleton& skeleton, const SkeletalMotion& motion)
{
    if (motion.length() < 1) throw DimensionError("empty motion window");
    if (motion.window.cols() != skeleton.dof_count()) throw DimensionError("motion window does not match skeleton DoFs");
    SkeletalMotion out = motion;
    const Eigen::Index last = motion.window.rows() - 1;
    for (int dof : skeleton.root_translation_dofs()) {
        out.window.col(dof).array() -= motion.window(last, dof);
    }
    return out;
}

}  // namespace avatar
