#include "avatar/fixtures.hpp"
#include "avatar/losses.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace avatar {

namespace {

double uniform(std::mt19937_64& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }

Image random_image(int w, int h, int channels, std::mt19937_64& g)
{
    Image image(w, h, channels);
    for (Eigen::Index i = 0; i < image.data.size(); ++i) image.data.data()[i] = uniform(g, 0.0, 1.0);
    return image;
}

Eigen::VectorXd flat(const Eigen::ArrayXXd& a) { return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()); }
Eigen::VectorXd flat(const Positions& p) { return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()); }

Image with_data(Image image, const Eigen::VectorXd& v)
{
    image.data = Eigen::Map<const Eigen::ArrayXXd>(v.data(), image.data.rows(), image.data.cols());
    return image;
}

Positions as_positions(const Eigen::VectorXd& v) { return Eigen::Map<const Positions>(v.data(), v.size() / 3, 3); }

// Face-case points of the UTTS that stay clear of tri-plane cell boundaries,
// where the bilinear lookup is not differentiable.
std::vector<Vec3> smooth_points(const TriangleMesh& mesh, const ClosestPointIndex& index, double d_max, int resolution,
                                int count, std::mt19937_64& g)
{
    std::vector<Vec3> points;
    while (static_cast<int>(points.size()) < count) {
        const int f = std::uniform_int_distribution<int>(0, mesh.face_count() - 1)(g);
        Vec3 bary(uniform(g, 0.1, 1.0), uniform(g, 0.1, 1.0), uniform(g, 0.1, 1.0));
        bary /= bary.sum();
        const Vec3 a = mesh.position(mesh.faces(f, 0)), b = mesh.position(mesh.faces(f, 1)),
                   c = mesh.position(mesh.faces(f, 2));
        const Vec3 n = (b - a).cross(c - a).normalized();
        const Vec3 x = bary(0) * a + bary(1) * b + bary(2) * c + uniform(g, -0.6, 0.6) * d_max * n;
        const MappingResult r = map_to_utts(index, x, d_max);
        if (r.kind != ElementKind::Face || r.out_of_range) continue;
        bool near_cell_edge = false;
        for (int k = 0; k < 3; ++k) {
            const double s = r.utts.cube()(k) * (resolution - 1);
            near_cell_edge |= std::abs(s - std::round(s)) < 1e-3 * (resolution - 1);
        }
        if (!near_cell_edge) points.push_back(x);
    }
    return points;
}

}  // namespace

std::vector<GradientCheck> gradient_suite(std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::vector<GradientCheck> out;
    auto run = [&](const std::string& name, const LossFunction& loss, const Eigen::VectorXd& params) {
        const auto start = std::chrono::steady_clock::now();
        const double err = check_gradients(loss, params);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.push_back({name, err, static_cast<int>(params.size()), s});
    };

    // Image terms on a 9×7 frame.
    const Image gt = random_image(9, 7, 3, g), mask = random_image(9, 7, 1, g);
    const Image pred = random_image(9, 7, 3, g), opacity = random_image(9, 7, 1, g);
    run("L_col", [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        const ImageLosses l = image_losses(with_data(pred, x), opacity, gt, mask);
        if (grad) *grad = flat(l.color_gradient);
        return l.color;
    }, flat(pred.data));
    run("L_mask", [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        const ImageLosses l = image_losses(pred, with_data(opacity, x), gt, mask);
        if (grad) *grad = flat(l.opacity_gradient);
        return l.mask;
    }, flat(opacity.data));
    run("L_lappyr", [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        const ImageLosses l = image_losses(with_data(pred, x), opacity, gt, mask);
        if (grad) *grad = flat(l.pyramid_gradient);
        return l.pyramid;
    }, flat(pred.data));

    // Field terms on a decoded field over a 42-vertex sphere.
    const TriangleMesh sphere = fixtures::icosphere(1, 1.0);
    auto index = std::make_shared<ClosestPointIndex>(sphere, sphere.vertices);
    fixtures::DecodedFieldShape shape;
    shape.resolution = 6;
    const DecodedField field = fixtures::random_decoded_field(index, 0.1, shape, g);
    const std::vector<Vec3> eik_points = smooth_points(sphere, *index, 0.1, shape.resolution, 30, g);
    run("L_eik", [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        DecodedField f = field;
        f.geometry.layers.back().weight.row(0) = x.transpose();
        const EikonalResult r = eikonal_loss(SdfField{f}, eik_points);
        if (grad) *grad = r.weight_gradient;
        return r.value;
    }, field.geometry.layers.back().weight.row(0).transpose());

    const TriangleMesh tube = fixtures::cylinder(0.2, 1.0, 8, 3);
    auto tube_index = std::make_shared<ClosestPointIndex>(tube, tube.vertices);
    const DecodedField tube_field = fixtures::random_decoded_field(tube_index, 0.04, shape, g);
    const auto pairs = seam_sample_pairs(extract_seams(tube), 24, SeamSampling{}, 0.04, g);
    run("L_seam", [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        DecodedField f = tube_field;
        f.triplane.assign(x);
        const SeamResult r = seam_loss(f, pairs);
        if (grad) *grad = r.triplane_gradient;
        return r.value;
    }, tube_field.triplane.flatten());

    const std::vector<Vec3> sdf_points = smooth_points(sphere, *index, 0.1, shape.resolution, 60, g);
    Positions verts(static_cast<Eigen::Index>(sdf_points.size()), 3);
    for (std::size_t i = 0; i < sdf_points.size(); ++i) verts.row(static_cast<Eigen::Index>(i)) = sdf_points[i].transpose();
    const SdfField sdf{field};
    run("L_sdf", [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
        const VertexSdfResult r = sdf_vertex_loss(sdf, as_positions(x));
        if (grad) *grad = flat(r.gradient);
        return r.value;
    }, flat(verts));

    // Template regularizers between two jittered spheres.
    const TriangleMesh before = fixtures::jittered_sphere(g, 0.08, 1);
    const TriangleMesh after = fixtures::jittered_sphere(g, 0.08, 1);
    const char* names[] = {"L_reg", "L_zero", "L_normal", "L_area"};
    for (int term = 0; term < 4; ++term) {
        run(names[term], [&, term](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
            const SurfaceRegularizers r = surface_regularizers(before.faces, before.vertices, as_positions(x));
            const Positions* gradients[] = {&r.reg_gradient, &r.zero_gradient, &r.normal_gradient, &r.area_gradient};
            const double values[] = {r.reg, r.zero, r.normal, r.area};
            if (grad) *grad = flat(*gradients[term]);
            return values[term];
        }, flat(after.vertices));
    }
    return out;
}

}  // namespace avatar
