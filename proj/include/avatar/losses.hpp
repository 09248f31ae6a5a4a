#pragma once

#include "avatar/field.hpp"
#include "avatar/image.hpp"
#include "avatar/mesh.hpp"
#include "avatar/utts.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace avatar {

// ---------------------------------------------------------------------------
// Stage weighting and reports
// ---------------------------------------------------------------------------

enum class Stage { One = 1, Two = 2, Three = 3 };

/// Loss names and weights of a training stage, in their canonical order.
/// Stage 3 lists "L_perc" with its weight, but nothing computes that term.
std::vector<std::pair<std::string, double>> stage_weights(Stage stage);

struct LossReport {
    std::map<std::string, double> values;
    std::map<std::string, double> weights;
    std::map<std::string, Eigen::VectorXd> gradients;  // flattened, keyed by loss name

    /// Σ weight·value over losses present in both maps.
    double total() const;
    /// Weight-combined gradient of the present losses; empty when none carry one.
    Eigen::VectorXd total_gradient() const;
};

LossReport make_report(Stage stage);

// ---------------------------------------------------------------------------
// Image losses
// ---------------------------------------------------------------------------

struct ImageLosses {
    double color = 0.0;    // L_col
    double mask = 0.0;     // L_mask
    double pyramid = 0.0;  // L_lappyr
    // Gradients w.r.t. the predicted color (same layout as Image::data) and opacity.
    Eigen::ArrayXXd color_gradient;
    Eigen::ArrayXXd opacity_gradient;
    Eigen::ArrayXXd pyramid_gradient;
};

/// Band images of a Laplacian pyramid: `levels − 1` band-pass images then the
/// low-pass residual. Each level blurs with the 5-tap binomial kernel (clamped
/// borders) and keeps even pixels; the expansion replicates and blurs.
std::vector<Image> laplacian_pyramid(const Image& image, int levels = 4);

/// L_col: mean absolute color error over pixels whose gt mask exceeds ½ and
/// all channels. L_mask: mean |opacity − mask| over all pixels. L_lappyr: sum
/// over pyramid levels of the mean absolute band difference.
ImageLosses image_losses(const Image& pred_color, const Image& pred_opacity, const Image& gt_color,
                         const Image& gt_mask, int pyramid_levels = 4);

// ---------------------------------------------------------------------------
// Field losses
// ---------------------------------------------------------------------------

struct EikonalResult {
    double value = 0.0;  // mean (|∇s| − 1)²
    double min_norm = 0.0;
    double max_norm = 0.0;
    double mean_norm = 0.0;
    /// Decoded fields only: gradient w.r.t. row 0 (the SDF output) of the
    /// geometry decoder's last weight matrix, flattened.
    Eigen::VectorXd weight_gradient;
};

/// Throws DomainError when a sample lies outside the field's domain.
EikonalResult eikonal_loss(const SdfField& field, std::span<const Vec3> samples);

struct SeamResult {
    double value = 0.0;                 // mean |s_a − s_b|
    Eigen::VectorXd triplane_gradient;  // w.r.t. FeatureTriplane::flatten()
};

SeamResult seam_loss(const DecodedField& field, std::span<const SeamSamplePair> pairs);

struct VertexSdfResult {
    double value = 0.0;  // mean |s(v_i)|
    Positions gradient;  // w.r.t. vertex positions
};

/// Throws DomainError naming every vertex outside the UTTS shell.
VertexSdfResult sdf_vertex_loss(const SdfField& field, const Positions& vertices);

// ---------------------------------------------------------------------------
// Template regularizers
// ---------------------------------------------------------------------------

struct SurfaceRegularizers {
    double reg = 0.0;     // mean |δ_i(before) − δ_i(after)|
    double zero = 0.0;    // mean |δ_i(after)|
    double normal = 0.0;  // mean over faces of the mean (1 − n_i·n_j) over edge neighbors
    double area = 0.0;    // mean over faces of the population variance of its edge lengths
    Positions reg_gradient;
    Positions zero_gradient;
    Positions normal_gradient;
    Positions area_gradient;
};

/// δ is the uniform Laplacian. Gradients are w.r.t. `after`.
SurfaceRegularizers surface_regularizers(const Faces& faces, const Positions& before, const Positions& after);

/// Faces sharing an edge with each face.
std::vector<std::vector<int>> face_adjacency(const Faces& faces);

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

/// Loss value at `params`; fills `gradient` when non-null.
using LossFunction = std::function<double(const Eigen::VectorXd& params, Eigen::VectorXd* gradient)>;

/// max_k |g_a − g_fd| / max(1, |g_a|) with central differences of step h.
double check_gradients(const LossFunction& loss, const Eigen::VectorXd& params, double step = 1e-5);

struct GradientCheck {
    std::string loss;
    double max_relative_error = 0.0;
    int parameters = 0;
    double seconds = 0.0;
};

/// Central-difference check of every differentiable loss on small random
/// fixtures (at most 200 vertices) drawn from `seed`. L_perc is not part of
/// it because nothing computes that term.
std::vector<GradientCheck> gradient_suite(std::uint64_t seed = 0);

}  // namespace avatar
