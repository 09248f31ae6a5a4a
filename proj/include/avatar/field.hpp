#pragma once

#include "avatar/config.hpp"
#include "avatar/skeleton.hpp"
#include "avatar/utts.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace avatar {

// ---------------------------------------------------------------------------
// Positional encoding
// ---------------------------------------------------------------------------

/// [x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L-1}πx), cos(2^{L-1}πx)], each block
/// the size of x; output dimension n(1 + 2L).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> positional_encoding(const Eigen::MatrixBase<Derived>& x,
                                                                               int frequencies)
{
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = x.size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n * (1 + 2 * frequencies));
    out.head(n) = x;
    Scalar scale = Scalar(std::numbers::pi);
    for (int l = 0; l < frequencies; ++l, scale *= Scalar(2)) {
        out.segment(n * (1 + 2 * l), n) = (scale * x.array()).sin().matrix();
        out.segment(n * (2 + 2 * l), n) = (scale * x.array()).cos().matrix();
    }
    return out;
}

/// d(encoding)/dx, shape n(1 + 2L) × n.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> positional_encoding_jacobian(
    const Eigen::MatrixBase<Derived>& x, int frequencies)
{
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = x.size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> J =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n * (1 + 2 * frequencies), n);
    J.topRows(n).setIdentity();
    Scalar scale = Scalar(std::numbers::pi);
    for (int l = 0; l < frequencies; ++l, scale *= Scalar(2)) {
        for (Eigen::Index i = 0; i < n; ++i) {
            J(n * (1 + 2 * l) + i, i) = scale * std::cos(scale * x(i));
            J(n * (2 + 2 * l) + i, i) = -scale * std::sin(scale * x(i));
        }
    }
    return J;
}

// ---------------------------------------------------------------------------
// Tri-plane
// ---------------------------------------------------------------------------

/// Three R×R grids of C channels. Plane 0 is indexed by (u_x, u_y), plane 1
/// by (u_x, d̂), plane 2 by (u_y, d̂). Node (i, j) of a plane sits at
/// (i/(R-1), j/(R-1)) and is stored in row i·R + j.
struct FeatureTriplane {
    int resolution = 0;
    int channels = 0;
    std::array<Eigen::MatrixXd, 3> planes;

    static FeatureTriplane constant(int resolution, int channels, double value);
    static FeatureTriplane random(int resolution, int channels, double scale, std::mt19937_64& rng);

    Eigen::Index parameter_count() const { return 3 * static_cast<Eigen::Index>(resolution) * resolution * channels; }
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& values);
};

void validate(const FeatureTriplane& triplane);

/// One bilinear tap: flat parameter index (see FeatureTriplane::flatten
/// without the channel) and its weight.
struct BilinearTap {
    int plane = 0;
    int node = 0;
    double weight = 0.0;
};

struct TriplaneSample {
    Eigen::VectorXd feature;                         // 3C: (surface, x-height, y-height)
    Eigen::Matrix<double, Eigen::Dynamic, 3> jacobian;  // d feature / d (u_x, u_y, d̂)
    std::array<BilinearTap, 12> taps;
};

/// Bilinear lookups at (u_x,u_y), (u_x,d̂), (u_y,d̂), concatenated.
/// Throws DomainError outside [0,1]³.
TriplaneSample sample_triplane(const FeatureTriplane& triplane, const Vec3& cube);
inline Eigen::VectorXd sample_triplane(const FeatureTriplane& triplane, const UttsPoint& point)
{
    return sample_triplane(triplane, point.cube()).feature;
}

// ---------------------------------------------------------------------------
// Shallow MLPs
// ---------------------------------------------------------------------------

enum class Activation { None, Relu, Softplus, Sigmoid };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation activation);

struct DenseLayer {
    Eigen::MatrixXd weight;  // out × in
    Eigen::VectorXd bias;
    Activation activation = Activation::None;
};

struct MlpWeights {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
};

void validate(const MlpWeights& mlp);

Eigen::VectorXd mlp_forward(const MlpWeights& mlp, const Eigen::VectorXd& input);

/// Forward pass that carries k tangent directions alongside the values.
struct MlpTangents {
    Eigen::VectorXd output;
    Eigen::MatrixXd output_tangent;  // out × k
    Eigen::VectorXd hidden;          // input of the last layer
    Eigen::MatrixXd hidden_tangent;  // hidden × k
};
MlpTangents mlp_forward_tangent(const MlpWeights& mlp, const Eigen::VectorXd& input, const Eigen::MatrixXd& tangent);

/// Vector-Jacobian product: gradient of upstream·output w.r.t. the input.
Eigen::VectorXd mlp_input_gradient(const MlpWeights& mlp, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream);

/// Dense MLP with uniform(-s, s) weights, s = scale·sqrt(6/(in+out)).
MlpWeights random_mlp(const std::vector<int>& dims, Activation hidden, Activation output, std::mt19937_64& rng,
                      double scale = 1.0);

struct NetworkShapes {
    int geometry_layers = 4;
    int geometry_width = 256;
    int color_layers = 3;
    int color_width = 256;
    int motion_hidden_layers = 2;
    int motion_width = 128;
    int motion_code = 16;
    int shape_code = 32;
};

struct EncodingConfig {
    int position_frequencies = 6;
    int direction_frequencies = 4;
};

/// Input width of the geometry decoder: tri-plane feature, motion code and encoded UTTS point.
int geometry_input_dim(int triplane_channels, int motion_code, const EncodingConfig& encoding);
/// Input width of the appearance decoder: shape code, SDF, normal, encoded view direction, global position.
int color_input_dim(int shape_code, const EncodingConfig& encoding);

MlpWeights make_geometry_mlp(const NetworkShapes& shapes, int triplane_channels, const EncodingConfig& encoding,
                             std::mt19937_64& rng);
MlpWeights make_color_mlp(const NetworkShapes& shapes, const EncodingConfig& encoding, std::mt19937_64& rng);
MlpWeights make_motion_encoder(const NetworkShapes& shapes, int dof_count, int window, std::mt19937_64& rng);

/// Motion code from the root-normalized pose window, flattened frame by frame.
Eigen::VectorXd global_motion_code(const MlpWeights& encoder, const Skeleton& skeleton, const SkeletalMotion& motion);

// ---------------------------------------------------------------------------
// SDF fields
// ---------------------------------------------------------------------------

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
};
struct Capsule {
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::UnitY();
    double radius = 0.1;
};
/// s = n·x + offset with unit n.
struct Plane {
    Vec3 normal = Vec3::UnitZ();
    double offset = 0.0;
};

struct AnalyticSdf {
    std::variant<Sphere, Capsule, Plane> shape;
    double scale = 1.0;  // multiplies the distance; 1 keeps it a true SDF
};

struct MeshSdf {
    std::shared_ptr<const ClosestPointIndex> index;
};

/// Tri-plane field decoded by shallow MLPs over the UTTS of a fixed template.
struct DecodedField {
    std::shared_ptr<const ClosestPointIndex> mapping;
    double d_max = config::kDmaxInitial;
    FeatureTriplane triplane;
    MlpWeights geometry;
    std::optional<MlpWeights> color;
    EncodingConfig encoding;
    Eigen::VectorXd motion_code;
    Vec3 global_position = Vec3::Zero();
};

void validate(const DecodedField& field);

using SdfField = std::variant<AnalyticSdf, MeshSdf, DecodedField>;

struct SdfSample {
    double s = 0.0;
    Eigen::VectorXd shape_code;
    bool valid = true;
};

/// Signed distance at a world point. The decoded variant reports
/// valid = false outside the UTTS shell.
SdfSample sdf_eval(const SdfField& field, const Vec3& x);

/// Decoded SDF and shape code at a UTTS point.
SdfSample sdf_eval(const DecodedField& field, const UttsPoint& point);

/// Geometry-decoder input for a UTTS point, plus the tri-plane sample it used.
Eigen::VectorXd decoder_input(const DecodedField& field, const Vec3& cube, TriplaneSample* sample = nullptr);

/// ∂s/∂x by the analytic route. Throws DomainError when the decoded
/// variant's point is outside the UTTS shell.
Vec3 sdf_gradient(const SdfField& field, const Vec3& x);

/// Geometry-decoder pass at a world point with the three spatial tangent
/// directions carried along (output_tangent row 0 is ∂s/∂x).
MlpTangents sdf_tangents(const DecodedField& field, const Vec3& x);

/// Central differences with the given step (meters).
Vec3 sdf_gradient_fd(const SdfField& field, const Vec3& x, double step = 1e-4);

/// d(u_x, u_y, d̂)/dx for a mapped point (3 × 3).
Mat3 mapping_jacobian(const ClosestPointIndex& index, const MappingResult& result, const Vec3& x);

/// Eq.-17 style appearance decode; returns RGB.
Vec3 decode_color(const DecodedField& field, const SdfSample& sample, const Vec3& normal, const Vec3& view_direction);

// Weight files: an MLP is a JSON list of layers whose weight/bias live in
// TRIT tensors next to it; a tri-plane is one [3, R, R, C] tensor.
MlpWeights load_mlp(const std::filesystem::path& path);
void save_mlp(const std::filesystem::path& path, const MlpWeights& mlp);
FeatureTriplane load_triplane(const std::filesystem::path& path);
void save_triplane(const std::filesystem::path& path, const FeatureTriplane& triplane);

}  // namespace avatar
