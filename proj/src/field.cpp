#include "avatar/field.hpp"

#include "avatar/error.hpp"
#include "avatar/io.hpp"

#include <json.hpp>

#include <algorithm>

namespace avatar {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Tri-plane
// ---------------------------------------------------------------------------

FeatureTriplane FeatureTriplane::constant(int resolution, int channels, double value)
{
    FeatureTriplane t;
    t.resolution = resolution;
    t.channels = channels;
    for (auto& plane : t.planes) plane = Eigen::MatrixXd::Constant(resolution * resolution, channels, value);
    validate(t);
    return t;
}

FeatureTriplane FeatureTriplane::random(int resolution, int channels, double scale, std::mt19937_64& rng)
{
    FeatureTriplane t = constant(resolution, channels, 0.0);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& plane : t.planes) plane = plane.unaryExpr([&](double) { return dist(rng); });
    return t;
}

Eigen::VectorXd FeatureTriplane::flatten() const
{
    const Eigen::Index per_plane = static_cast<Eigen::Index>(resolution) * resolution * channels;
    Eigen::VectorXd out(3 * per_plane);
    for (int p = 0; p < 3; ++p) {
        // Row-major per plane: node-major, channel-minor.
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = planes[p];
        out.segment(p * per_plane, per_plane) = Eigen::Map<const Eigen::VectorXd>(rm.data(), per_plane);
    }
    return out;
}

void FeatureTriplane::assign(const Eigen::VectorXd& values)
{
    if (values.size() != parameter_count()) throw DimensionError("tri-plane parameter vector has the wrong size");
    const Eigen::Index per_plane = static_cast<Eigen::Index>(resolution) * resolution * channels;
    for (int p = 0; p < 3; ++p) {
        planes[p] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            values.data() + p * per_plane, static_cast<Eigen::Index>(resolution) * resolution, channels);
    }
}

void validate(const FeatureTriplane& t)
{
    if (t.resolution < 2) throw DimensionError("tri-plane resolution must be at least 2");
    if (t.channels < 1) throw DimensionError("tri-plane needs at least one channel");
    for (const auto& plane : t.planes) {
        if (plane.rows() != static_cast<Eigen::Index>(t.resolution) * t.resolution || plane.cols() != t.channels) {
            throw DimensionError("tri-plane grid must be R·R × C");
        }
    }
}

namespace {

struct Bilinear {
    int i0, j0;
    double s, t;  // fractional offsets along the first and second axes
};

Bilinear locate(int resolution, double a, double b)
{
    const double scale = resolution - 1;
    const double fa = a * scale, fb = b * scale;
    const int i0 = std::min(static_cast<int>(std::floor(fa)), resolution - 2);
    const int j0 = std::min(static_cast<int>(std::floor(fb)), resolution - 2);
    return {i0, j0, fa - i0, fb - j0};
}

}  // namespace

TriplaneSample sample_triplane(const FeatureTriplane& t, const Vec3& cube)
{
    for (int k = 0; k < 3; ++k) {
        if (!(cube(k) >= 0.0 && cube(k) <= 1.0)) throw DomainError("tri-plane lookup outside [0,1]^3");
    }
    const int C = t.channels;
    const int R = t.resolution;
    TriplaneSample out;
    out.feature.resize(3 * C);
    out.jacobian = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(3 * C, 3);
    constexpr int axes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int p = 0; p < 3; ++p) {
        const int ax = axes[p][0], ay = axes[p][1];
        const Bilinear g = locate(R, cube(ax), cube(ay));
        const int n00 = g.i0 * R + g.j0, n01 = n00 + 1, n10 = n00 + R, n11 = n10 + 1;
        const auto& P = t.planes[p];
        const Eigen::VectorXd f00 = P.row(n00).transpose(), f01 = P.row(n01).transpose(), f10 = P.row(n10).transpose(),
                              f11 = P.row(n11).transpose();
        const double s = g.s, r = g.t;
        out.feature.segment(p * C, C) = (1 - s) * (1 - r) * f00 + (1 - s) * r * f01 + s * (1 - r) * f10 + s * r * f11;
        out.jacobian.block(p * C, ax, C, 1) = (R - 1) * ((1 - r) * (f10 - f00) + r * (f11 - f01));
        out.jacobian.block(p * C, ay, C, 1) = (R - 1) * ((1 - s) * (f01 - f00) + s * (f11 - f10));
        out.taps[4 * p + 0] = {p, n00, (1 - s) * (1 - r)};
        out.taps[4 * p + 1] = {p, n01, (1 - s) * r};
        out.taps[4 * p + 2] = {p, n10, s * (1 - r)};
        out.taps[4 * p + 3] = {p, n11, s * r};
    }
    return out;
}

// ---------------------------------------------------------------------------
// MLPs
// ---------------------------------------------------------------------------

Activation activation_from_string(const std::string& name)
{
    if (name == "none" || name == "linear") return Activation::None;
    if (name == "relu") return Activation::Relu;
    if (name == "softplus") return Activation::Softplus;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw Error("unknown activation '" + name + "'");
}

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "none";
}

void validate(const MlpWeights& mlp)
{
    if (mlp.layers.empty()) throw DimensionError("MLP has no layers");
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        if (layer.bias.size() != layer.weight.rows()) {
            throw DimensionError("layer " + std::to_string(l) + " bias does not match its weight rows");
        }
        if (l > 0 && layer.weight.cols() != mlp.layers[l - 1].weight.rows()) {
            throw DimensionError("layer " + std::to_string(l) + " input does not match the previous layer");
        }
    }
}

namespace {

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

void activate(Activation a, const Eigen::VectorXd& z, Eigen::VectorXd& value, Eigen::VectorXd& slope)
{
    value.resize(z.size());
    slope.resize(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        switch (a) {
        case Activation::None:
            value(i) = z(i);
            slope(i) = 1.0;
            break;
        case Activation::Relu:
            value(i) = z(i) > 0.0 ? z(i) : 0.0;
            slope(i) = z(i) > 0.0 ? 1.0 : 0.0;
            break;
        case Activation::Softplus:
            value(i) = softplus(z(i));
            slope(i) = sigmoid(z(i));
            break;
        case Activation::Sigmoid:
            value(i) = sigmoid(z(i));
            slope(i) = value(i) * (1.0 - value(i));
            break;
        }
    }
}

void check_input(const MlpWeights& mlp, const Eigen::VectorXd& input)
{
    if (mlp.layers.empty()) throw DimensionError("MLP has no layers");
    if (input.size() != mlp.input_dim()) {
        throw DimensionError("MLP expects " + std::to_string(mlp.input_dim()) + " inputs, got " +
                             std::to_string(input.size()));
    }
}

}  // namespace

Eigen::VectorXd mlp_forward(const MlpWeights& mlp, const Eigen::VectorXd& input)
{
    check_input(mlp, input);
    Eigen::VectorXd h = input, value, slope;
    for (const auto& layer : mlp.layers) {
        activate(layer.activation, layer.weight * h + layer.bias, value, slope);
        h.swap(value);
    }
    return h;
}

MlpTangents mlp_forward_tangent(const MlpWeights& mlp, const Eigen::VectorXd& input, const Eigen::MatrixXd& tangent)
{
    check_input(mlp, input);
    if (tangent.rows() != input.size()) throw DimensionError("tangent rows must match the MLP input");
    MlpTangents out;
    Eigen::VectorXd h = input, value, slope;
    Eigen::MatrixXd T = tangent;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        if (l + 1 == mlp.layers.size()) {
            out.hidden = h;
            out.hidden_tangent = T;
        }
        activate(layer.activation, layer.weight * h + layer.bias, value, slope);
        T = slope.asDiagonal() * (layer.weight * T);
        h.swap(value);
    }
    out.output = std::move(h);
    out.output_tangent = std::move(T);
    return out;
}

Eigen::VectorXd mlp_input_gradient(const MlpWeights& mlp, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream)
{
    check_input(mlp, input);
    if (upstream.size() != mlp.output_dim()) throw DimensionError("upstream gradient must match the MLP output");
    std::vector<Eigen::VectorXd> slopes;
    slopes.reserve(mlp.layers.size());
    Eigen::VectorXd h = input, value, slope;
    for (const auto& layer : mlp.layers) {
        activate(layer.activation, layer.weight * h + layer.bias, value, slope);
        slopes.push_back(slope);
        h.swap(value);
    }
    Eigen::VectorXd g = upstream;
    for (std::size_t l = mlp.layers.size(); l-- > 0;) {
        g = mlp.layers[l].weight.transpose() * slopes[l].cwiseProduct(g);
    }
    return g;
}

MlpWeights random_mlp(const std::vector<int>& dims, Activation hidden, Activation output, std::mt19937_64& rng,
                      double scale)
{
    if (dims.size() < 2) throw DimensionError("an MLP needs input and output widths");
    MlpWeights mlp;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double limit = scale * std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer;
        layer.weight = Eigen::MatrixXd::NullaryExpr(dims[l + 1], dims[l], [&] { return dist(rng); });
        layer.bias = Eigen::VectorXd::NullaryExpr(dims[l + 1], [&] { return 0.1 * dist(rng); });
        layer.activation = l + 2 == dims.size() ? output : hidden;
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

int geometry_input_dim(int triplane_channels, int motion_code, const EncodingConfig& encoding)
{
    return 3 * triplane_channels + motion_code + 3 * (1 + 2 * encoding.position_frequencies);
}

int color_input_dim(int shape_code, const EncodingConfig& encoding)
{
    return shape_code + 1 + 3 + 3 * (1 + 2 * encoding.direction_frequencies) + 3;
}

namespace {

std::vector<int> widths(int input, int hidden_layers, int width, int output)
{
    std::vector<int> dims{input};
    for (int i = 0; i < hidden_layers; ++i) dims.push_back(width);
    dims.push_back(output);
    return dims;
}

}  // namespace

MlpWeights make_geometry_mlp(const NetworkShapes& shapes, int triplane_channels, const EncodingConfig& encoding,
                             std::mt19937_64& rng)
{
    return random_mlp(widths(geometry_input_dim(triplane_channels, shapes.motion_code, encoding),
                             shapes.geometry_layers - 1, shapes.geometry_width, 1 + shapes.shape_code),
                      Activation::Softplus, Activation::None, rng);
}

MlpWeights make_color_mlp(const NetworkShapes& shapes, const EncodingConfig& encoding, std::mt19937_64& rng)
{
    return random_mlp(widths(color_input_dim(shapes.shape_code, encoding), shapes.color_layers - 1, shapes.color_width, 3),
                      Activation::Relu, Activation::Sigmoid, rng);
}

MlpWeights make_motion_encoder(const NetworkShapes& shapes, int dof_count, int window, std::mt19937_64& rng)
{
    return random_mlp(widths(dof_count * window, shapes.motion_hidden_layers, shapes.motion_width, shapes.motion_code),
                      Activation::Relu, Activation::None, rng);
}

Eigen::VectorXd global_motion_code(const MlpWeights& encoder, const Skeleton& skeleton, const SkeletalMotion& motion)
{
    const SkeletalMotion normalized = normalize_motion(skeleton, motion);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = normalized.window;
    const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(rows.data(), rows.size());
    return mlp_forward(encoder, flat);
}

// ---------------------------------------------------------------------------
// SDF fields
// ---------------------------------------------------------------------------

void validate(const DecodedField& field)
{
    if (!field.mapping) throw Error("decoded field has no template mapping");
    if (!(field.d_max > 0.0)) throw DomainError("d_max must be positive");
    validate(field.triplane);
    validate(field.geometry);
    const int expected =
        geometry_input_dim(field.triplane.channels, static_cast<int>(field.motion_code.size()), field.encoding);
    if (field.geometry.input_dim() != expected) {
        throw DimensionError("geometry decoder expects " + std::to_string(field.geometry.input_dim()) +
                             " inputs but the field provides " + std::to_string(expected));
    }
    if (field.geometry.output_dim() < 1) throw DimensionError("geometry decoder must output the SDF");
    if (field.color) {
        validate(*field.color);
        if (field.color->input_dim() != color_input_dim(field.geometry.output_dim() - 1, field.encoding)) {
            throw DimensionError("appearance decoder input does not match the shape code");
        }
        if (field.color->output_dim() != 3) throw DimensionError("appearance decoder must output RGB");
    }
}

Eigen::VectorXd decoder_input(const DecodedField& field, const Vec3& cube, TriplaneSample* sample)
{
    TriplaneSample local = sample_triplane(field.triplane, cube);
    const Eigen::VectorXd pe = positional_encoding(cube, field.encoding.position_frequencies);
    const Eigen::Index fc = local.feature.size(), gc = field.motion_code.size();
    Eigen::VectorXd input(fc + gc + pe.size());
    input << local.feature, field.motion_code, pe;
    if (sample) *sample = std::move(local);
    return input;
}

SdfSample sdf_eval(const DecodedField& field, const UttsPoint& point)
{
    const Eigen::VectorXd out = mlp_forward(field.geometry, decoder_input(field, point.cube()));
    return {out(0), out.tail(out.size() - 1), true};
}

namespace {

double analytic_distance(const AnalyticSdf& a, const Vec3& x, Vec3* gradient)
{
    return std::visit(
        [&](const auto& shape) -> double {
            using T = std::decay_t<decltype(shape)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                const Vec3 r = x - shape.center;
                if (gradient) *gradient = a.scale * r.normalized();
                return a.scale * (r.norm() - shape.radius);
            } else if constexpr (std::is_same_v<T, Capsule>) {
                const Vec3 e = shape.b - shape.a;
                const double t = std::clamp(e.dot(x - shape.a) / e.squaredNorm(), 0.0, 1.0);
                const Vec3 r = x - (shape.a + t * e);
                if (gradient) *gradient = a.scale * r.normalized();
                return a.scale * (r.norm() - shape.radius);
            } else {
                if (gradient) *gradient = a.scale * shape.normal;
                return a.scale * (shape.normal.dot(x) + shape.offset);
            }
        },
        a.shape);
}

Vec3 distance_direction(const ClosestPointIndex& index, const MappingResult& r, const Vec3& x)
{
    if (r.distance < 1e-12) return index.pseudo_normal(r);
    const Vec3 dir = (x - r.closest) / r.distance;
    return r.signed_distance < 0.0 ? Vec3(-dir) : dir;
}

}  // namespace

SdfSample sdf_eval(const SdfField& field, const Vec3& x)
{
    return std::visit(
        [&](const auto& f) -> SdfSample {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, AnalyticSdf>) {
                return {analytic_distance(f, x, nullptr), {}, true};
            } else if constexpr (std::is_same_v<T, MeshSdf>) {
                return {f.index->signed_distance(x), {}, true};
            } else {
                const MappingResult r = map_to_utts(*f.mapping, x, f.d_max);
                if (r.out_of_range) return {0.0, {}, false};
                return sdf_eval(f, r.utts);
            }
        },
        field);
}

Mat3 mapping_jacobian(const ClosestPointIndex& index, const MappingResult& r, const Vec3& x)
{
    Mat3 J = Mat3::Zero();
    const Faces& faces = index.faces();
    const Positions& p = index.positions();
    const CornerUvs& uv = index.uv();
    switch (r.kind) {
    case ElementKind::Face: {
        const int f = r.face;
        const Vec3 va = p.row(faces(f, 0)), vb = p.row(faces(f, 1)), vc = p.row(faces(f, 2));
        const Vec3 n = index.face_normals().row(f);
        const double area2 = (vb - va).cross(vc - va).norm();
        const Vec3 grad_a = n.cross(vc - vb) / area2;
        const Vec3 grad_b = n.cross(va - vc) / area2;
        const Vec2 ua = uv.row(3 * f), ub = uv.row(3 * f + 1), uc = uv.row(3 * f + 2);
        J.topRows<2>() = (ua - uc) * grad_a.transpose() + (ub - uc) * grad_b.transpose();
        break;
    }
    case ElementKind::Edge: {
        const Vec3 a = p.row(r.vertex_a), b = p.row(r.vertex_b);
        const Vec3 e = b - a;
        Vec2 ua = Vec2::Zero(), ub = Vec2::Zero();
        for (int k = 0; k < 3; ++k) {
            if (faces(r.face, k) == r.vertex_a) ua = uv.row(3 * r.face + k);
            if (faces(r.face, k) == r.vertex_b) ub = uv.row(3 * r.face + k);
        }
        J.topRows<2>() = (ub - ua) * e.transpose() / e.squaredNorm();
        break;
    }
    case ElementKind::Vertex: break;
    }
    if (!r.out_of_range) J.row(2) = distance_direction(index, r, x).transpose() / (2.0 * r.utts.d_max);
    return J;
}

MlpTangents sdf_tangents(const DecodedField& f, const Vec3& x)
{
    const MappingResult r = map_to_utts(*f.mapping, x, f.d_max);
    if (r.out_of_range) throw DomainError("point is outside the UTTS shell");
    TriplaneSample sample;
    const Eigen::VectorXd input = decoder_input(f, r.utts.cube(), &sample);
    const Mat3 J = mapping_jacobian(*f.mapping, r, x);
    Eigen::MatrixXd tangent = Eigen::MatrixXd::Zero(input.size(), 3);
    const Eigen::Index fc = sample.feature.size(), gc = f.motion_code.size();
    tangent.topRows(fc) = sample.jacobian * J;
    tangent.bottomRows(input.size() - fc - gc) =
        positional_encoding_jacobian(r.utts.cube(), f.encoding.position_frequencies) * J;
    return mlp_forward_tangent(f.geometry, input, tangent);
}

Vec3 sdf_gradient(const SdfField& field, const Vec3& x)
{
    return std::visit(
        [&](const auto& f) -> Vec3 {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, AnalyticSdf>) {
                Vec3 g;
                analytic_distance(f, x, &g);
                return g;
            } else if constexpr (std::is_same_v<T, MeshSdf>) {
                const MappingResult r = map_to_utts(*f.index, x, std::numeric_limits<double>::max());
                return distance_direction(*f.index, r, x);
            } else {
                const MlpTangents t = sdf_tangents(f, x);
                return t.output_tangent.row(0).transpose();
            }
        },
        field);
}

Vec3 sdf_gradient_fd(const SdfField& field, const Vec3& x, double step)
{
    Vec3 g;
    for (int k = 0; k < 3; ++k) {
        Vec3 xp = x, xm = x;
        xp(k) += step;
        xm(k) -= step;
        const SdfSample sp = sdf_eval(field, xp), sm = sdf_eval(field, xm);
        if (!sp.valid || !sm.valid) throw DomainError("finite-difference stencil leaves the UTTS shell");
        g(k) = (sp.s - sm.s) / (2.0 * step);
    }
    return g;
}

Vec3 decode_color(const DecodedField& field, const SdfSample& sample, const Vec3& normal, const Vec3& view_direction)
{
    if (!field.color) throw Error("field has no appearance decoder");
    const Eigen::VectorXd pe = positional_encoding(view_direction, field.encoding.direction_frequencies);
    Eigen::VectorXd input(sample.shape_code.size() + 1 + 3 + pe.size() + 3);
    input << sample.shape_code, sample.s, normal, pe, field.global_position;
    const Eigen::VectorXd rgb = mlp_forward(*field.color, input);
    return rgb.head<3>();
}

// ---------------------------------------------------------------------------
// Weight files
// ---------------------------------------------------------------------------

MlpWeights load_mlp(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    const auto dir = path.parent_path();
    MlpWeights mlp;
    for (const auto& entry : j.at("layers")) {
        DenseLayer layer;
        layer.weight = to_matrix(read_tensor(dir / entry.at("weight").get<std::string>()));
        const Tensor bias = read_tensor(dir / entry.at("bias").get<std::string>());
        if (bias.dims.size() != 1) throw DimensionError("bias tensor must be 1-D");
        layer.bias = Eigen::Map<const Eigen::VectorXf>(bias.values.data(), static_cast<Eigen::Index>(bias.values.size()))
                         .cast<double>();
        layer.activation = activation_from_string(entry.value("activation", "none"));
        mlp.layers.push_back(std::move(layer));
    }
    validate(mlp);
    return mlp;
}

void save_mlp(const std::filesystem::path& path, const MlpWeights& mlp)
{
    validate(mlp);
    const auto dir = path.parent_path();
    const std::string stem = path.stem().string();
    json layers = json::array();
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        const auto& layer = mlp.layers[l];
        const std::string w = stem + ".l" + std::to_string(l) + ".weight.trit";
        const std::string b = stem + ".l" + std::to_string(l) + ".bias.trit";
        write_tensor(dir / w, to_tensor(layer.weight));
        Tensor bias;
        bias.dims = {static_cast<std::uint32_t>(layer.bias.size())};
        bias.values.assign(layer.bias.data(), layer.bias.data() + layer.bias.size());
        write_tensor(dir / b, bias);
        layers.push_back({{"weight", w}, {"bias", b}, {"activation", to_string(layer.activation)}});
    }
    atomic_write(path, json{{"layers", layers}}.dump(2));
}

FeatureTriplane load_triplane(const std::filesystem::path& path)
{
    const Tensor t = read_tensor(path);
    if (t.dims.size() != 4 || t.dims[0] != 3 || t.dims[1] != t.dims[2]) {
        throw DimensionError("tri-plane tensor must have shape [3, R, R, C]");
    }
    FeatureTriplane out = FeatureTriplane::constant(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[3]), 0.0);
    Eigen::VectorXd values(static_cast<Eigen::Index>(t.values.size()));
    for (std::size_t i = 0; i < t.values.size(); ++i) values(static_cast<Eigen::Index>(i)) = t.values[i];
    out.assign(values);
    return out;
}

void save_triplane(const std::filesystem::path& path, const FeatureTriplane& triplane)
{
    validate(triplane);
    Tensor t;
    t.dims = {3, static_cast<std::uint32_t>(triplane.resolution), static_cast<std::uint32_t>(triplane.resolution),
              static_cast<std::uint32_t>(triplane.channels)};
    const Eigen::VectorXd flat = triplane.flatten();
    t.values.assign(flat.data(), flat.data() + flat.size());
    write_tensor(path, t);
}

}  // namespace avatar
