#include "avatar/losses.hpp"

#include "avatar/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace avatar {

// ---------------------------------------------------------------------------
// Stage weighting
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, double>> stage_weights(Stage stage)
{
    switch (stage) {
    case Stage::One: {
        const auto& w = config::kStage1Weights;
        return {{"L_col", w[0]}, {"L_mask", w[1]}, {"L_eik", w[2]}, {"L_seam", w[3]}};
    }
    case Stage::Two: {
        const auto& w = config::kStage2Weights;
        return {{"L_sdf", w[0]}, {"L_reg", w[1]}, {"L_zero", w[2]}, {"L_normal", w[3]}, {"L_area", w[4]}};
    }
    case Stage::Three: {
        const auto& w = config::kStage3Weights;
        return {{"L_col", w[0]},    {"L_mask", w[1]},    {"L_eik", w[2]},
                {"L_seam", w[3]},   {"L_lappyr", w[4]},  {"L_perc", w[5]}};
    }
    }
    throw Error("unknown training stage");
}

LossReport make_report(Stage stage)
{
    LossReport report;
    for (const auto& [name, w] : stage_weights(stage)) report.weights[name] = w;
    return report;
}

double LossReport::total() const
{
    double sum = 0.0;
    for (const auto& [name, v] : values) {
        if (auto it = weights.find(name); it != weights.end()) sum += it->second * v;
    }
    return sum;
}

Eigen::VectorXd LossReport::total_gradient() const
{
    Eigen::VectorXd g;
    for (const auto& [name, grad] : gradients) {
        auto it = weights.find(name);
        if (it == weights.end()) continue;
        if (g.size() == 0) g = Eigen::VectorXd::Zero(grad.size());
        if (grad.size() != g.size()) throw DimensionError("loss gradients disagree in size");
        g += it->second * grad;
    }
    return g;
}

// ---------------------------------------------------------------------------
// Image losses
// ---------------------------------------------------------------------------

namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

void require_same_size(const Image& a, const Image& b, const char* what)
{
    if (a.width != b.width || a.height != b.height) {
        throw DimensionError(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                             std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                             std::to_string(b.height) + ")");
    }
}

using Dense = Eigen::MatrixXd;

// 1-D pyramid operators on a signal of length n.
Dense blur_1d(int n)
{
    static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    Dense B = Dense::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int o = -2; o <= 2; ++o) B(i, std::clamp(i + o, 0, n - 1)) += k[o + 2];
    }
    return B;
}

Dense downsample_1d(int n)
{
    const int m = (n + 1) / 2;
    Dense D = Dense::Zero(m, n);
    for (int i = 0; i < m; ++i) D(i, 2 * i) = 1.0;
    return D;
}

// Replicate each coarse sample twice, then blur at the fine size.
Dense upsample_1d(int fine)
{
    const int coarse = (fine + 1) / 2;
    Dense R = Dense::Zero(fine, coarse);
    for (int i = 0; i < fine; ++i) R(i, i / 2) = 1.0;
    return blur_1d(fine) * R;
}

// Separable pyramid factors for one axis: M_k maps the input to level k's
// Gaussian image; P_k = U_k·D_k·B_k is the reduce-then-expand at level k.
struct AxisPyramid {
    std::vector<Dense> to_level;
    std::vector<Dense> reduce_expand;
};

AxisPyramid axis_pyramid(int n, int levels)
{
    AxisPyramid a;
    Dense M = Dense::Identity(n, n);
    for (int k = 0; k < levels; ++k) {
        const int size = static_cast<int>(M.rows());
        a.to_level.push_back(M);
        if (k + 1 < levels) {
            const Dense reduce = downsample_1d(size) * blur_1d(size);
            a.reduce_expand.push_back(upsample_1d(size) * reduce);
            M = reduce * M;
        }
    }
    return a;
}

// Channel c of an image as an H×W matrix.
Dense channel_matrix(const Image& image, int c)
{
    Dense X(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) X(y, x) = image.at(x, y, c);
    return X;
}

}  // namespace

std::vector<Image> laplacian_pyramid(const Image& image, int levels)
{
    if (levels < 1) throw DomainError("pyramid needs at least one level");
    if (image.width < 1 || image.height < 1) throw DimensionError("pyramid of an empty image");
    const AxisPyramid ax = axis_pyramid(image.width, levels), ay = axis_pyramid(image.height, levels);
    std::vector<Image> bands;
    for (int k = 0; k < levels; ++k) {
        const int w = static_cast<int>(ax.to_level[k].rows()), h = static_cast<int>(ay.to_level[k].rows());
        Image band(w, h, image.channels());
        for (int c = 0; c < image.channels(); ++c) {
            const Dense G = ay.to_level[k] * channel_matrix(image, c) * ax.to_level[k].transpose();
            const Dense B = k + 1 < levels ? Dense(G - ay.reduce_expand[k] * G * ax.reduce_expand[k].transpose()) : G;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) band.at(x, y, c) = B(y, x);
        }
        bands.push_back(std::move(band));
    }
    return bands;
}

ImageLosses image_losses(const Image& pred_color, const Image& pred_opacity, const Image& gt_color,
                         const Image& gt_mask, int pyramid_levels)
{
    require_same_size(pred_color, gt_color, "color loss");
    require_same_size(pred_opacity, gt_mask, "mask loss");
    require_same_size(pred_color, pred_opacity, "image losses");
    if (pred_color.channels() != gt_color.channels()) throw DimensionError("color images differ in channel count");
    if (pred_opacity.channels() != 1 || gt_mask.channels() != 1) throw DimensionError("opacity and mask need one channel");

    ImageLosses out;
    const Eigen::Index pixels = pred_color.data.rows();
    const int channels = pred_color.channels();

    // L_col over gt foreground.
    out.color_gradient = Eigen::ArrayXXd::Zero(pixels, channels);
    Eigen::Index foreground = 0;
    for (Eigen::Index p = 0; p < pixels; ++p) foreground += gt_mask.data(p, 0) > 0.5;
    if (foreground > 0) {
        const double norm = 1.0 / static_cast<double>(foreground * channels);
        for (Eigen::Index p = 0; p < pixels; ++p) {
            if (!(gt_mask.data(p, 0) > 0.5)) continue;
            for (int c = 0; c < channels; ++c) {
                const double r = pred_color.data(p, c) - gt_color.data(p, c);
                out.color += std::abs(r) * norm;
                out.color_gradient(p, c) = sign(r) * norm;
            }
        }
    }

    // L_mask over every pixel.
    const Eigen::ArrayXd dm = pred_opacity.data.col(0) - gt_mask.data.col(0);
    out.mask = dm.abs().mean();
    out.opacity_gradient = dm.unaryExpr([](double r) { return sign(r); }) / static_cast<double>(pixels);

    // L_lappyr: the pyramid is linear, so bands of the residual are the band differences.
    out.pyramid_gradient = Eigen::ArrayXXd::Zero(pixels, channels);
    const AxisPyramid ax = axis_pyramid(pred_color.width, pyramid_levels);
    const AxisPyramid ay = axis_pyramid(pred_color.height, pyramid_levels);
    for (int c = 0; c < channels; ++c) {
        const Dense X = channel_matrix(pred_color, c) - channel_matrix(gt_color, c);
        Dense grad = Dense::Zero(X.rows(), X.cols());
        for (int k = 0; k < pyramid_levels; ++k) {
            const Dense& My = ay.to_level[k];
            const Dense& Mx = ax.to_level[k];
            const Dense G = My * X * Mx.transpose();
            const bool residual = k + 1 == pyramid_levels;
            const Dense band = residual ? G : Dense(G - ay.reduce_expand[k] * G * ax.reduce_expand[k].transpose());
            const double norm = 1.0 / static_cast<double>(band.size() * channels);
            out.pyramid += band.cwiseAbs().sum() * norm;
            const Dense S = band.unaryExpr([&](double r) { return sign(r) * norm; });
            const Dense dG = residual ? S : Dense(S - ay.reduce_expand[k].transpose() * S * ax.reduce_expand[k]);
            grad += My.transpose() * dG * Mx;
        }
        for (int y = 0; y < pred_color.height; ++y)
            for (int x = 0; x < pred_color.width; ++x) out.pyramid_gradient(pred_color.index(x, y), c) = grad(y, x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Field losses
// ---------------------------------------------------------------------------

EikonalResult eikonal_loss(const SdfField& field, std::span<const Vec3> samples)
{
    if (samples.empty()) throw DomainError("eikonal loss needs at least one sample");
    EikonalResult out;
    const auto* decoded = std::get_if<DecodedField>(&field);
    if (decoded) {
        const DenseLayer& last = decoded->geometry.layers.back();
        if (last.activation != Activation::None) {
            throw Error("eikonal weight gradient assumes a linear output layer");
        }
        out.weight_gradient = Eigen::VectorXd::Zero(last.weight.cols());
    }
    out.min_norm = std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(samples.size());
    std::vector<std::size_t> outside;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Vec3 g;
        if (decoded) {
            MlpTangents t;
            try {
                t = sdf_tangents(*decoded, samples[i]);
            } catch (const DomainError&) {
                outside.push_back(i);
                continue;
            }
            g = t.output_tangent.row(0).transpose();
            const double norm = g.norm();
            // ∇s = Hᵀw for the last-layer row w, with H the hidden tangents.
            if (norm > 0.0) out.weight_gradient += (2.0 * (norm - 1.0) / (n * norm)) * (t.hidden_tangent * g);
        } else {
            g = sdf_gradient(field, samples[i]);
        }
        const double norm = g.norm();
        out.value += (norm - 1.0) * (norm - 1.0) / n;
        out.mean_norm += norm / n;
        out.min_norm = std::min(out.min_norm, norm);
        out.max_norm = std::max(out.max_norm, norm);
    }
    if (!outside.empty()) {
        std::ostringstream msg;
        msg << outside.size() << " eikonal sample(s) outside the UTTS shell:";
        for (std::size_t k = 0; k < std::min<std::size_t>(outside.size(), 20); ++k) msg << ' ' << outside[k];
        throw DomainError(msg.str());
    }
    return out;
}

SeamResult seam_loss(const DecodedField& field, std::span<const SeamSamplePair> pairs)
{
    if (pairs.empty()) throw DomainError("seam loss needs at least one sample pair");
    SeamResult out;
    out.triplane_gradient = Eigen::VectorXd::Zero(field.triplane.parameter_count());
    const int C = field.triplane.channels;
    const int R = field.triplane.resolution;
    const double n = static_cast<double>(pairs.size());
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(field.geometry.output_dim());
    e0(0) = 1.0;

    auto accumulate = [&](const UttsPoint& p, double weight) {
        TriplaneSample sample;
        const Eigen::VectorXd input = decoder_input(field, p.cube(), &sample);
        const Eigen::VectorXd g = mlp_input_gradient(field.geometry, input, e0);
        for (const BilinearTap& tap : sample.taps) {
            const Eigen::Index base = (static_cast<Eigen::Index>(tap.plane) * R * R + tap.node) * C;
            out.triplane_gradient.segment(base, C) += weight * tap.weight * g.segment(tap.plane * C, C);
        }
    };

    for (const SeamSamplePair& pair : pairs) {
        const double sa = sdf_eval(field, pair.a).s;
        const double sb = sdf_eval(field, pair.b).s;
        out.value += std::abs(sa - sb) / n;
        const double w = sign(sa - sb) / n;
        if (w != 0.0) {
            accumulate(pair.a, w);
            accumulate(pair.b, -w);
        }
    }
    return out;
}

VertexSdfResult sdf_vertex_loss(const SdfField& field, const Positions& vertices)
{
    if (vertices.rows() == 0) throw DomainError("vertex SDF loss needs at least one vertex");
    VertexSdfResult out;
    out.gradient = Positions::Zero(vertices.rows(), 3);
    const double n = static_cast<double>(vertices.rows());
    std::vector<Eigen::Index> outside;
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        const Vec3 v = vertices.row(i).transpose();
        const SdfSample s = sdf_eval(field, v);
        if (!s.valid) {
            outside.push_back(i);
            continue;
        }
        out.value += std::abs(s.s) / n;
        if (s.s != 0.0) out.gradient.row(i) = (sign(s.s) / n) * sdf_gradient(field, v).transpose();
    }
    if (!outside.empty()) {
        std::ostringstream msg;
        msg << outside.size() << " template vertex(es) outside the UTTS shell:";
        for (std::size_t k = 0; k < std::min<std::size_t>(outside.size(), 20); ++k) msg << ' ' << outside[k];
        if (outside.size() > 20) msg << " ...";
        throw DomainError(msg.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Template regularizers
// ---------------------------------------------------------------------------

std::vector<std::vector<int>> face_adjacency(const Faces& faces)
{
    std::unordered_map<std::uint64_t, std::vector<int>> edge_faces;
    auto key = [](int a, int b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    };
    for (int f = 0; f < faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) edge_faces[key(faces(f, k), faces(f, (k + 1) % 3))].push_back(f);
    }
    std::vector<std::vector<int>> adjacent(faces.rows());
    for (int f = 0; f < faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            for (int g : edge_faces[key(faces(f, k), faces(f, (k + 1) % 3))]) {
                if (g != f && std::find(adjacent[f].begin(), adjacent[f].end(), g) == adjacent[f].end()) {
                    adjacent[f].push_back(g);
                }
            }
        }
    }
    return adjacent;
}

namespace {

// Accumulates the gradient of upstream·n̂ for the unit normal of face f.
void add_normal_gradient(const Faces& faces, const Positions& p, int f, const Vec3& upstream, Positions& grad)
{
    const Vec3 a = p.row(faces(f, 0)), b = p.row(faces(f, 1)), c = p.row(faces(f, 2));
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 cr = e1.cross(e2);
    const double len = cr.norm();
    const Vec3 n = cr / len;
    const Vec3 v = (upstream - n * n.dot(upstream)) / len;  // d/d(cross product)
    const Vec3 g1 = e2.cross(v), g2 = v.cross(e1);
    grad.row(faces(f, 1)) += g1.transpose();
    grad.row(faces(f, 2)) += g2.transpose();
    grad.row(faces(f, 0)) -= (g1 + g2).transpose();
}

}  // namespace

SurfaceRegularizers surface_regularizers(const Faces& faces, const Positions& before, const Positions& after)
{
    if (before.rows() != after.rows()) {
        throw TopologyError("template regularizers need matching vertex counts (" + std::to_string(before.rows()) +
                            " vs " + std::to_string(after.rows()) + ")");
    }
    if (faces.rows() == 0) throw TopologyError("template has no faces");
    const int nv = static_cast<int>(after.rows());
    const int nf = static_cast<int>(faces.rows());
    SurfaceRegularizers out;
    out.reg_gradient = Positions::Zero(nv, 3);
    out.zero_gradient = Positions::Zero(nv, 3);
    out.normal_gradient = Positions::Zero(nv, 3);
    out.area_gradient = Positions::Zero(nv, 3);

    // Laplacian terms.
    const Eigen::SparseMatrix<double> L = uniform_laplacian(faces, nv);
    const Positions d_before = L * before;
    const Positions d_after = L * after;
    Positions u_reg = Positions::Zero(nv, 3), u_zero = Positions::Zero(nv, 3);
    for (int i = 0; i < nv; ++i) {
        const Vec3 r = (d_after.row(i) - d_before.row(i)).transpose();
        const Vec3 z = d_after.row(i).transpose();
        out.reg += r.norm() / nv;
        out.zero += z.norm() / nv;
        if (r.norm() > 0.0) u_reg.row(i) = r.normalized().transpose() / nv;
        if (z.norm() > 0.0) u_zero.row(i) = z.normalized().transpose() / nv;
    }
    const Eigen::SparseMatrix<double> Lt = L.transpose();
    out.reg_gradient = Lt * u_reg;
    out.zero_gradient = Lt * u_zero;

    // Normal consistency.
    const FaceGeometry geom = face_geometry(faces, after);
    const auto adjacent = face_adjacency(faces);
    for (int f = 0; f < nf; ++f) {
        if (adjacent[f].empty()) continue;
        const double w = 1.0 / (nf * static_cast<double>(adjacent[f].size()));
        const Vec3 nf_ = geom.normals.row(f);
        Vec3 sum_neighbors = Vec3::Zero();
        for (int g : adjacent[f]) {
            const Vec3 ng = geom.normals.row(g);
            out.normal += w * (1.0 - nf_.dot(ng));
            sum_neighbors += ng;
            add_normal_gradient(faces, after, g, -w * nf_, out.normal_gradient);
        }
        add_normal_gradient(faces, after, f, -w * sum_neighbors, out.normal_gradient);
    }

    // Edge-length variance.
    for (int f = 0; f < nf; ++f) {
        Vec3 dir[3];
        double len[3];
        for (int k = 0; k < 3; ++k) {
            const Vec3 e = after.row(faces(f, (k + 1) % 3)) - after.row(faces(f, k));
            len[k] = e.norm();
            dir[k] = e / len[k];
        }
        const double mean = (len[0] + len[1] + len[2]) / 3.0;
        for (int k = 0; k < 3; ++k) {
            out.area += (len[k] - mean) * (len[k] - mean) / (3.0 * nf);
            const double dl = 2.0 * (len[k] - mean) / (3.0 * nf);
            out.area_gradient.row(faces(f, (k + 1) % 3)) += dl * dir[k].transpose();
            out.area_gradient.row(faces(f, k)) -= dl * dir[k].transpose();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

double check_gradients(const LossFunction& loss, const Eigen::VectorXd& params, double step)
{
    Eigen::VectorXd analytic;
    loss(params, &analytic);
    if (analytic.size() != params.size()) {
        throw DimensionError("analytic gradient has " + std::to_string(analytic.size()) + " entries for " +
                             std::to_string(params.size()) + " parameters");
    }
    double worst = 0.0;
    Eigen::VectorXd x = params;
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        x(k) = params(k) + step;
        const double fp = loss(x, nullptr);
        x(k) = params(k) - step;
        const double fm = loss(x, nullptr);
        x(k) = params(k);
        const double fd = (fp - fm) / (2.0 * step);
        worst = std::max(worst, std::abs(analytic(k) - fd) / std::max(1.0, std::abs(analytic(k))));
    }
    return worst;
}

}  // namespace avatar
