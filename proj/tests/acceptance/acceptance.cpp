// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Oracles here are written independently of the library code they check.

#include "avatar/config.hpp"
#include "avatar/deform.hpp"
#include "avatar/fixtures.hpp"
#include "avatar/losses.hpp"
#include "avatar/refine.hpp"
#include "avatar/render.hpp"
#include "avatar/scene.hpp"
#include "avatar/skeleton.hpp"
#include "avatar/utts.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace avatar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args)
{
    char buffer[512];
    std::snprintf(buffer, sizeof buffer, fmt, args...);
    return buffer;
}

// ---------------------------------------------------------------------------
// Closest point by exhaustive scan
// ---------------------------------------------------------------------------

struct Nearest {
    double distance = std::numeric_limits<double>::infinity();
    Vec3 point = Vec3::Zero();
    ElementKind kind = ElementKind::Face;
    int a = -1, b = -1;  // face id; sorted edge vertex ids; vertex id
};

Nearest brute_force(const TriangleMesh& mesh, const Vec3& x)
{
    Nearest best;
    for (int f = 0; f < mesh.face_count(); ++f) {
        const int id[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
        const Vec3 p[3] = {mesh.position(id[0]), mesh.position(id[1]), mesh.position(id[2])};
        const Vec3 n = (p[1] - p[0]).cross(p[2] - p[0]);
        const Vec3 q = x - n.dot(x - p[0]) / n.squaredNorm() * n;
        const bool inside = n.dot((p[2] - p[1]).cross(q - p[1])) > 0 && n.dot((p[0] - p[2]).cross(q - p[2])) > 0 &&
                            n.dot((p[1] - p[0]).cross(q - p[0])) > 0;
        Nearest cand;
        if (inside) {
            cand = {(x - q).norm(), q, ElementKind::Face, f, -1};
        } else {
            for (int e = 0; e < 3; ++e) {
                const Vec3 s = p[e], t = p[(e + 1) % 3];
                const double lambda = std::clamp((t - s).dot(x - s) / (t - s).squaredNorm(), 0.0, 1.0);
                const Vec3 c = s + lambda * (t - s);
                const double d = (x - c).norm();
                if (d >= cand.distance) continue;
                cand.distance = d;
                cand.point = c;
                const int i = id[e], j = id[(e + 1) % 3];
                if (lambda == 0.0 || lambda == 1.0) {
                    cand.kind = ElementKind::Vertex, cand.a = lambda == 0.0 ? i : j, cand.b = -1;
                } else {
                    cand.kind = ElementKind::Edge, cand.a = std::min(i, j), cand.b = std::max(i, j);
                }
            }
        }
        if (cand.distance < best.distance) best = cand;
    }
    return best;
}

bool same_element(const MappingResult& r, const Nearest& n)
{
    if (r.kind != n.kind) return false;
    switch (r.kind) {
    case ElementKind::Face: return r.face == n.a;
    case ElementKind::Edge: return std::min(r.vertex_a, r.vertex_b) == n.a && std::max(r.vertex_a, r.vertex_b) == n.b;
    case ElementKind::Vertex: return r.vertex_a == n.a;
    }
    return false;
}

TriangleMesh single_triangle()
{
    TriangleMesh m;
    m.vertices.resize(3, 3);
    m.vertices << 0, 0, 0, 1, 0, 0, 0.3, 0.8, 0.1;
    m.faces.resize(1, 3);
    m.faces << 0, 1, 2;
    m.uv.resize(3, 2);
    m.uv << 0, 0, 1, 0, 0, 1;
    return m;
}

Outcome closest_point_equivalence()
{
    std::mt19937_64 rng(101);
    const std::vector<TriangleMesh> meshes = {single_triangle(), fixtures::cylinder(0.3, 1.0, 20, 12),
                                              fixtures::jittered_sphere(rng, 0.03, 4)};
    const int queries = 10000;
    const auto start = Clock::now();
    double worst_point = 0.0, worst_distance = 0.0;
    int mismatches = 0;
    std::string faces;
    for (const TriangleMesh& m : meshes) {
        const ClosestPointIndex index(m, m.vertices);
        const Eigen::AlignedBox3d box = index.bounds();
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int q = 0; q < queries; ++q) {
            Vec3 x;
            for (int k = 0; k < 3; ++k) x(k) = box.min()(k) - 0.3 + unit(rng) * (box.sizes()(k) + 0.6);
            const Nearest oracle = brute_force(m, x);
            const MappingResult r = index.closest_point(x);
            worst_distance = std::max(worst_distance, std::abs(r.distance - oracle.distance));
            worst_point = std::max(worst_point, (r.closest - oracle.point).norm());
            mismatches += !same_element(r, oracle);
        }
        faces += (faces.empty() ? "" : "/") + std::to_string(m.face_count());
    }
    const double elapsed = seconds_since(start);
    return {mismatches == 0 && worst_point <= 1e-9 && worst_distance <= 1e-9 && elapsed < 30.0,
            format("faces %s, %d queries each: element mismatches %d, max point err %.2e, max distance err %.2e, %.2f s",
                   faces.c_str(), queries, mismatches, worst_point, worst_distance, elapsed)};
}

// ---------------------------------------------------------------------------
// Face-case round trips
// ---------------------------------------------------------------------------

Outcome face_case_bijectivity()
{
    std::mt19937_64 rng(202);
    const TriangleMesh m = fixtures::jittered_sphere(rng, 0.05, 3);
    const ClosestPointIndex index(m, m.vertices);
    const double d_max = config::kDmaxInitial;
    int round_trips = 0, failures = 0;
    double worst = 0.0;
    while (round_trips < 10000) {
        const Positions q = fixtures::lifted_samples(m, rng, 4000, -0.9 * d_max, 0.9 * d_max);
        for (int i = 0; i < q.rows() && round_trips < 10000; ++i) {
            const Vec3 x = q.row(i).transpose();
            const MappingResult r = map_to_utts(index, x, d_max);
            if (r.kind != ElementKind::Face || r.out_of_range) continue;
            ++round_trips;
            // Oracle reconstruction: barycentric point plus height along the face normal.
            const Vec3 a = m.position(m.faces(r.face, 0)), b = m.position(m.faces(r.face, 1)),
                       c = m.position(m.faces(r.face, 2));
            const Vec3 n = (b - a).cross(c - a).normalized();
            const double l2 = 1.0 - r.lambda_a - r.lambda_b;
            const Vec3 back = r.lambda_a * a + r.lambda_b * b + l2 * c + r.utts.d * n;
            const double err = std::max((back - x).norm(), (inverse_map(m, m.vertices, r) - x).norm());
            worst = std::max(worst, err);
            failures += err > 1e-9;
        }
    }
    return {failures == 0, format("%d face-case round trips: max error %.2e, failures %d", round_trips, worst, failures)};
}

// ---------------------------------------------------------------------------
// Collision study
// ---------------------------------------------------------------------------

Outcome collision_study()
{
    std::mt19937_64 rng(303);
    const TriangleMesh m = fixtures::deformed_cylinder();
    const ClosestPointIndex index(m, m.vertices);
    const Positions cloud = fixtures::lifted_samples(m, rng, 20000, -0.08, 0.08);
    std::vector<double> ratios;
    for (double d_max : {0.01, 0.02, 0.04, 0.08}) ratios.push_back(collision_ratio(index, cloud, d_max).collision_ratio());
    const bool monotone = std::is_sorted(ratios.begin(), ratios.end());
    const bool grows = ratios[3] >= 2.0 * ratios[0];
    return {monotone && grows, format("ratio at 1/2/4/8 cm: %.5f %.5f %.5f %.5f", ratios[0], ratios[1], ratios[2], ratios[3])};
}

// ---------------------------------------------------------------------------
// Analytic sphere render
// ---------------------------------------------------------------------------

Outcome unbiased_rendering()
{
    const int size = 128;
    Scene scene;
    scene.mesh = fixtures::icosphere(5, 0.5);
    scene.positions = scene.mesh.vertices;
    scene.field = AnalyticSdf{Sphere{Vec3::Zero(), 0.5}};
    scene.camera = Camera::look_at(Vec3(0, 0, 2.5), Vec3::Zero(), Vec3::UnitY(), 30.0 * std::numbers::pi / 180.0, size,
                                   size);
    scene.settings.z = 1e4;
    scene.settings.d_max = config::kDmaxInitial;
    scene.settings.profile = RenderProfile::training();

    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto start = Clock::now();
    const RenderOutput out = render_image(scene);
    const double elapsed = seconds_since(start);
    omp_set_num_threads(threads);

    const RasterBuffer raster = rasterize_depth(scene.mesh, scene.positions, scene.camera);
    int both = 0, either = 0;
    std::vector<double> errors;
    for (int i = 0; i < size * size; ++i) {
        const bool rendered = out.opacity.data(i, 0) > 0.5, covered = raster.covered(i);
        both += rendered && covered;
        either += rendered || covered;
        if (rendered && covered) errors.push_back(std::abs(out.depth.data(i, 0) - raster.depth[i]));
    }
    const double iou = either ? double(both) / either : 1.0;
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    const double median = errors.empty() ? std::numeric_limits<double>::infinity() : errors[errors.size() / 2];
    // Samples span the band [hit − d_max, hit + d_max] with n − 1 gaps.
    const double half_spacing = 0.5 * 2.0 * scene.settings.d_max / (scene.settings.profile.samples - 1);
    return {iou >= 0.98 && median <= half_spacing && elapsed < 10.0,
            format("IoU %.4f, median depth error %.2e (limit %.2e), %.2f s on 1 thread", iou, median, half_spacing,
                   elapsed)};
}

// ---------------------------------------------------------------------------
// Opacity point check
// ---------------------------------------------------------------------------

Outcome alpha_point_check()
{
    const double s[2] = {0.1, -0.1}, z = 10.0;
    // Logistic Φ(x) = 1 / (1 + exp(−z·x)); α = (Φ(s_i) − Φ(s_{i+1})) / Φ(s_i).
    const auto phi = [z](double x) { return 1.0 / (1.0 + std::exp(-z * x)); };
    const double oracle = (phi(s[0]) - phi(s[1])) / phi(s[0]);
    const double alpha = sdf_to_alpha(std::span<const double>(s, 2), z).at(0);
    return {std::abs(alpha - 0.632121) <= 1e-6 && std::abs(alpha - oracle) <= 1e-12,
            format("alpha %.9f, oracle %.9f, target 0.632121", alpha, oracle)};
}

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

Outcome gradient_checks()
{
    const auto start = Clock::now();
    const std::vector<GradientCheck> checks = gradient_suite();
    const double elapsed = seconds_since(start);
    double worst = 0.0;
    std::string worst_name = "none";
    bool all_pass = !checks.empty();
    for (const GradientCheck& c : checks) {
        all_pass = all_pass && c.max_relative_error <= 1e-5;  // false for NaN as well
        if (c.max_relative_error >= worst) worst = c.max_relative_error, worst_name = c.loss;
    }
    return {all_pass && elapsed < 60.0,
            format("%zu losses, worst %s at %.2e relative, %.2f s", checks.size(), worst_name.c_str(), worst, elapsed)};
}

// ---------------------------------------------------------------------------
// Deformation identities
// ---------------------------------------------------------------------------

SkinWeights random_skin(std::mt19937_64& rng, int n, int joints)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Eigen::Triplet<double>> t;
    for (int v = 0; v < n; ++v) {
        Eigen::VectorXd w(joints);
        for (int j = 0; j < joints; ++j) w(j) = unit(rng);
        w /= w.sum();
        for (int j = 0; j < joints; ++j) t.emplace_back(v, j, w(j));
    }
    SkinWeights s(n, joints);
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

Outcome deformation_identities()
{
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    const auto random_vec = [&](double scale) { return Vec3(sym(rng), sym(rng), sym(rng)) * scale; };

    const fixtures::LegAvatar leg = fixtures::leg_avatar(16, 12, 4);
    const Positions& M = leg.mesh.vertices;
    const int K = leg.graph.node_count(), N = leg.mesh.vertex_count();
    double identity = (embedded_deform(M, leg.graph, GraphParams::identity(K, N)) - M).cwiseAbs().maxCoeff();

    GraphParams shifted = GraphParams::identity(K, N);
    const Vec3 t = random_vec(0.5);
    shifted.translations.rowwise() = t.transpose();
    double translation = (embedded_deform(M, leg.graph, shifted) - (M.rowwise() + t.transpose())).cwiseAbs().maxCoeff();

    double rigid = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Vec3 angles = random_vec(3.0);
        // Rx · Ry · Rz built from axis-angle factors.
        const Mat3 R = (Eigen::AngleAxisd(angles.x(), Vec3::UnitX()) * Eigen::AngleAxisd(angles.y(), Vec3::UnitY()) *
                        Eigen::AngleAxisd(angles.z(), Vec3::UnitZ()))
                           .toRotationMatrix();
        GraphParams p = GraphParams::identity(K, N);
        for (int k = 0; k < K; ++k) {
            const Vec3 g = leg.graph.nodes.row(k).transpose();
            p.rotations.row(k) = angles.transpose();
            p.translations.row(k) = (R * g - g).transpose();
        }
        rigid = std::max(rigid, (embedded_deform(M, leg.graph, p) - (R * M.transpose()).transpose()).cwiseAbs().maxCoeff());
    }

    Positions y(60, 3);
    for (int i = 0; i < y.rows(); ++i) y.row(i) = random_vec(1.0).transpose();
    const SkinWeights w = random_skin(rng, 60, 4);
    double skin_identity = (dq_skin(y, w, std::vector<DualQuat>(4)) - y).cwiseAbs().maxCoeff();
    double skin_rigid = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Quaterniond r(Eigen::AngleAxisd(3.0 * sym(rng), random_vec(1.0).normalized()));
        const Vec3 shift = random_vec(2.0);
        const Positions v = dq_skin(y, w, std::vector<DualQuat>(4, DualQuat::from_rotation_translation(r, shift)));
        const Positions oracle = ((r.toRotationMatrix() * y.transpose()).colwise() + shift).transpose();
        skin_rigid = std::max(skin_rigid, (v - oracle).cwiseAbs().maxCoeff());
    }
    const double worst = std::max({identity, translation, rigid, skin_identity, skin_rigid});
    return {worst <= 1e-12,
            format("graph identity %.1e, translation %.1e, rigid %.1e; skin identity %.1e, rigid %.1e", identity,
                   translation, rigid, skin_identity, skin_rigid)};
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

Outcome refinement()
{
    const TriangleMesh mesh = fixtures::icosphere(2, 1.0);
    const SdfField target{AnalyticSdf{Sphere{Vec3::Zero(), 1.1}, 1.0}};
    RefineConfig config;
    const EmbossResult embossed = emboss_mesh(mesh, mesh.vertices, target, config);
    const double radial = (embossed.positions.rowwise().norm().array() - 1.1).abs().maxCoeff();

    const OptimizeResult r = optimize_template(mesh, mesh.vertices, target, config);
    bool non_increasing = !r.trace.empty();
    for (std::size_t i = 1; i < r.trace.size(); ++i) non_increasing = non_increasing && r.trace[i].total() <= r.trace[i - 1].total();
    return {config.emboss_iterations == 2 && radial <= 1e-3 && non_increasing,
            format("%d emboss iterations: max radial error %.2e; optimize trace of %zu entries %s, %.3e -> %.3e",
                   config.emboss_iterations, radial, r.trace.size(), non_increasing ? "non-increasing" : "INCREASES",
                   r.trace.front().total(), r.trace.back().total())};
}

// ---------------------------------------------------------------------------
// Defaults
// ---------------------------------------------------------------------------

Outcome constants()
{
    std::vector<std::string> wrong;
    const auto expect = [&](const std::string& what, bool ok) {
        if (!ok) wrong.push_back(what);
    };
    expect("training samples", RenderProfile::training().samples == 64 && RenderProfile{}.samples == 64);
    expect("interactive samples", RenderProfile::interactive().samples == 20);
    expect("ray batch", config::kRayBatch == 4096);
    const RefineConfig refine;
    expect("d_max schedule", refine.d_max_schedule == std::vector<double>{0.04, 0.02});
    expect("initial d_max", RenderSettings{}.d_max == 0.04);
    expect("motion texture resolution", MotionTextureOptions{}.resolution == 256);
    const auto weights = [](Stage s) {
        std::vector<double> w;
        for (const auto& [name, value] : stage_weights(s)) w.push_back(value);
        return w;
    };
    expect("stage 1 weights", weights(Stage::One) == std::vector<double>{1.0, 0.1, 0.1, 1.0});
    expect("stage 2 weights", weights(Stage::Two) == std::vector<double>{1.0, 0.15, 0.005, 0.005, 5.0});
    expect("stage 3 weights", weights(Stage::Three) == std::vector<double>{1.0, 0.1, 0.1, 1.0, 1.0, 0.5});
    expect("refine weights", std::vector<double>(refine.weights.begin(), refine.weights.end()) == weights(Stage::Two));
    std::string detail = wrong.empty() ? "all defaults match" : "mismatched:";
    for (const std::string& w : wrong) detail += " " + w + ";";
    return {wrong.empty(), detail};
}

// ---------------------------------------------------------------------------
// Mapping throughput
// ---------------------------------------------------------------------------

Outcome throughput()
{
    const fixtures::LegAvatar leg = fixtures::leg_avatar(72, 68, 8);
    SceneDescription scene;
    scene.mesh = leg.mesh;
    scene.skeleton = leg.skeleton;
    scene.graph = leg.graph;
    scene.motion = leg.motion;
    const int frame = 5;
    const Eigen::VectorXd pose = leg.motion.frames.row(frame).transpose();

    auto start = Clock::now();
    const Positions posed = pose_template(scene, pose_window(scene, pose, frame));
    const double pose_ms = 1e3 * seconds_since(start);

    TriangleMesh posed_mesh = scene.mesh;
    posed_mesh.vertices = posed;
    // A training batch: rays through random surface points, each sampled
    // evenly across the shell, stored ray after ray.
    std::mt19937_64 rng(505);
    std::normal_distribution<double> gauss;
    const int rays = config::kRayBatch, samples = config::kTrainingSamplesPerRay, points = rays * samples;
    const double d_max = config::kDmaxInitial;
    const Positions hits = fixtures::lifted_samples(posed_mesh, rng, rays, 0.0, 0.0);
    Positions cloud(points, 3);
    for (int r = 0; r < rays; ++r) {
        const Vec3 dir = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
        for (int k = 0; k < samples; ++k) {
            const double t = -d_max + 2.0 * d_max * k / (samples - 1);
            cloud.row(r * samples + k) = hits.row(r) + t * dir.transpose();
        }
    }

    start = Clock::now();
    const ClosestPointIndex index(scene.mesh, posed);
    const double index_ms = 1e3 * seconds_since(start);
    start = Clock::now();
    const std::vector<MappingResult> mapped = map_to_utts_batch(index, cloud, d_max);
    const double map_ms = 1e3 * seconds_since(start);

    std::size_t in_range = 0;
    for (const MappingResult& m : mapped) in_range += !m.out_of_range;
    const double total = index_ms + map_ms;
    return {total < 300.0 && mapped.size() == static_cast<std::size_t>(points),
            format("%d rays x %d samples vs %d vertices on %d thread(s): pose %.1f ms, index %.1f ms, map %.1f ms, "
                   "index+map %.1f ms (budget 300 ms on 8 cores), %.1f%% in range",
                   rays, samples, int(posed.rows()), omp_get_max_threads(), pose_ms, index_ms, map_ms,
                   total, 100.0 * double(in_range) / double(mapped.size()))};
}

}  // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"closest-point oracle equivalence", closest_point_equivalence},
        {"UTTS face-case bijectivity", face_case_bijectivity},
        {"collision study", collision_study},
        {"unbiased rendering", unbiased_rendering},
        {"opacity point check", alpha_point_check},
        {"gradient suite", gradient_checks},
        {"deformation identities", deformation_identities},
        {"refinement convergence", refinement},
        {"constants in defaults", constants},
        {"mapping throughput", throughput},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
