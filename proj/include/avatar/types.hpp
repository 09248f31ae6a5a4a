#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SparseCore>

namespace avatar {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// N×3 vertex positions, one point per row (meters).
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3>;
/// F×3 vertex indices, counter-clockwise winding.
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;
/// 3F×2 wedge UVs; row 3f+k belongs to corner k of face f.
using CornerUvs = Eigen::Matrix<double, Eigen::Dynamic, 2>;
/// N×J per-vertex joint weights, rows sum to one.
using SkinWeights = Eigen::SparseMatrix<double, Eigen::RowMajor>;

}  // namespace avatar
