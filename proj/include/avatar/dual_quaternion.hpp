#pragma once

#include <Eigen/Geometry>

namespace avatar {

/// Rigid transform as a unit dual quaternion q = r + ε d.
///
/// Translation t is encoded as d = ½ (0, t) r.
template <typename Scalar>
class DualQuaternion {
public:
    using Quat = Eigen::Quaternion<Scalar>;
    using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
    using Iso = Eigen::Transform<Scalar, 3, Eigen::Isometry>;

    DualQuaternion() : real_(Quat::Identity()), dual_(Scalar(0), Scalar(0), Scalar(0), Scalar(0)) {}
    DualQuaternion(const Quat& real, const Quat& dual) : real_(real), dual_(dual) {}

    static DualQuaternion identity() { return {}; }

    static DualQuaternion from_rotation_translation(const Quat& rotation, const Vec3& translation)
    {
        const Quat r = rotation.normalized();
        const Quat t(Scalar(0), translation.x(), translation.y(), translation.z());
        Quat d = t * r;
        d.coeffs() *= Scalar(0.5);
        return {r, d};
    }

    static DualQuaternion from_isometry(const Iso& transform)
    {
        return from_rotation_translation(Quat(transform.rotation()), transform.translation());
    }

    const Quat& real() const { return real_; }
    const Quat& dual() const { return dual_; }

    Vec3 translation() const
    {
        const Quat t = dual_ * real_.conjugate();
        return Scalar(2) * t.vec();
    }

    Iso to_isometry() const
    {
        Iso out = Iso::Identity();
        out.linear() = real_.normalized().toRotationMatrix();
        out.translation() = translation();
        return out;
    }

    DualQuaternion operator*(const DualQuaternion& other) const
    {
        Quat d1 = real_ * other.dual_;
        const Quat d2 = dual_ * other.real_;
        d1.coeffs() += d2.coeffs();
        return {real_ * other.real_, d1};
    }

    DualQuaternion operator-() const { return {Quat(-real_.coeffs()), Quat(-dual_.coeffs())}; }

    /// Applies the transform. Valid for any q whose real part is unit length;
    /// a dual part that is not orthogonal to the real part is projected away
    /// by this formula, which is what blended skinning relies on.
    Vec3 transform_point(const Vec3& p) const
    {
        const Scalar w0 = real_.w();
        const Vec3 v0 = real_.vec();
        const Scalar we = dual_.w();
        const Vec3 ve = dual_.vec();
        return p + Scalar(2) * v0.cross(v0.cross(p) + w0 * p) + Scalar(2) * (w0 * ve - we * v0 + v0.cross(ve));
    }

private:
    Quat real_;
    Quat dual_;
};

}  // namespace avatar
