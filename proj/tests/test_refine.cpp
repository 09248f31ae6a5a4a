#include "avatar/error.hpp"
#include "avatar/fixtures.hpp"
#include "avatar/refine.hpp"
#include "support.hpp"

using namespace avatar;

namespace {

SdfField sphere_field(double radius) { return AnalyticSdf{Sphere{Vec3::Zero(), radius}, 1.0}; }

}  // namespace

TEST_CASE("refine config validation")
{
    const RefineConfig defaults;
    CHECK(defaults.emboss_iterations == 2);
    CHECK(defaults.iterations == 200);
    CHECK(defaults.step == 1e-3);
    CHECK(defaults.max_halvings == 10);
    CHECK(defaults.weights == std::array<double, 5>{1.0, 0.15, 0.005, 0.005, 5.0});
    CHECK(defaults.d_max_schedule == std::vector<double>{0.04, 0.02});
    CHECK_NOTHROW(validate(defaults));

    RefineConfig bad;
    bad.iterations = 0;
    CHECK_THROWS_AS(validate(bad), DomainError);
    bad = {};
    bad.step = 0.0;
    CHECK_THROWS_AS(validate(bad), DomainError);
    bad = {};
    bad.d_max_schedule = {0.04, -0.01};
    CHECK_THROWS_AS(validate(bad), DomainError);
}

TEST_CASE("emboss: a mesh is a fixed point of its own distance field")
{
    const TriangleMesh mesh = fixtures::deformed_cylinder(16, 8);
    const SdfField own{MeshSdf{std::make_shared<ClosestPointIndex>(mesh, mesh.vertices)}};
    const EmbossResult r = emboss_mesh(mesh, mesh.vertices, own);
    CHECK((r.positions - mesh.vertices).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(r.frozen.empty());
    CHECK(r.mesh.faces == mesh.faces);
}

TEST_CASE("emboss: unit sphere onto a sphere of radius 1.1")
{
    const TriangleMesh mesh = fixtures::icosphere(2, 1.0);
    REQUIRE(mesh.face_count() == 320);
    const EmbossResult r = emboss_mesh(mesh, mesh.vertices, sphere_field(1.1));
    const Eigen::VectorXd radii = r.positions.rowwise().norm();
    CHECK((radii.array() - 1.1).abs().maxCoeff() <= 1e-3);

    RefineConfig once;
    once.emboss_iterations = 1;
    const Eigen::VectorXd one = emboss_mesh(mesh, mesh.vertices, sphere_field(1.1), once).positions.rowwise().norm();
    CHECK((radii.array() - 1.1).abs().maxCoeff() <= (one.array() - 1.1).abs().maxCoeff());

    RefineConfig sub;
    sub.subdivide = true;
    const EmbossResult s = emboss_mesh(mesh, mesh.vertices, sphere_field(1.1), sub);
    CHECK(s.mesh.face_count() == 1280);
    CHECK(s.positions.rows() == s.mesh.vertex_count());
    CHECK((s.positions.rowwise().norm().array() - 1.1).abs().maxCoeff() <= 1e-3);
}

TEST_CASE("emboss: vertices outside the shell are frozen and reported")
{
    const TriangleMesh mapping = fixtures::icosphere(2, 1.0);
    auto index = std::make_shared<ClosestPointIndex>(mapping, mapping.vertices);
    auto g = testing::rng(201);
    const SdfField field{fixtures::height_field(index, 0.04, 0.0, {}, g)};
    Positions start = mapping.vertices * 1.01;
    start.row(5) *= 1.2;
    const EmbossResult r = emboss_mesh(mapping, start, field);
    CHECK(r.frozen == std::vector<int>{5});
    CHECK(r.positions.row(5) == start.row(5));
}

TEST_CASE("property: embossing preserves topology and descends the SDF")
{
    auto g = testing::rng(202);
    for (int trial = 0; trial < 10; ++trial) {
        const TriangleMesh mesh = fixtures::jittered_sphere(g, 0.03, 2);
        const double radius = testing::uniform(g, 0.9, 1.1);
        const SdfField field = sphere_field(radius);
        const EmbossResult r = emboss_mesh(mesh, mesh.vertices, field);
        CHECK(r.mesh.faces == mesh.faces);
        double before = 0.0, after = 0.0;
        for (int v = 0; v < mesh.vertex_count(); ++v) {
            before += std::abs(mesh.vertices.row(v).norm() - radius);
            after += std::abs(r.positions.row(v).norm() - radius);
        }
        CHECK(after < before);
    }
}

TEST_CASE("d_max schedule: converged template stays inside the narrower shell")
{
    const TriangleMesh mapping = fixtures::icosphere(3, 1.0);
    auto index = std::make_shared<ClosestPointIndex>(mapping, mapping.vertices);
    auto g = testing::rng(203);
    const TriangleMesh coarse = fixtures::icosphere(2, 1.015);
    const RefineConfig config;
    Positions current = coarse.vertices;
    for (double d_max : config.d_max_schedule) {
        const SdfField field{fixtures::height_field(index, d_max, 0.0, {}, g)};
        const EmbossResult r = emboss_mesh(coarse, current, field, config);
        CHECK(r.frozen.empty());
        current = r.positions;
    }
    for (int v = 0; v < current.rows(); ++v) {
        CHECK_FALSE(map_to_utts(*index, current.row(v).transpose(), config.d_max_schedule.back()).out_of_range);
    }
}

TEST_CASE("template loss combines the stage-2 terms")
{
    auto g = testing::rng(204);
    const TriangleMesh mesh = fixtures::jittered_sphere(g, 0.05, 1);
    const LossReport r = template_loss(mesh.faces, mesh.vertices, mesh.vertices, sphere_field(1.0),
                                       config::kStage2Weights);
    CHECK(r.values.at("L_reg") == 0.0);
    const double expected = r.values.at("L_sdf") + 0.15 * r.values.at("L_reg") + 0.005 * r.values.at("L_zero") +
                            0.005 * r.values.at("L_normal") + 5.0 * r.values.at("L_area");
    CHECK(r.total() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(r.total_gradient().size() == mesh.vertices.size());
}

TEST_CASE("optimize: global optimum needs no step")
{
    const TriangleMesh grid = fixtures::equilateral_grid(5, 5, 0.1);
    const SdfField plane{AnalyticSdf{Plane{Vec3::UnitZ(), 0.0}, 1.0}};
    RefineConfig config;
    config.weights[2] = 0.0;  // a bounded flat grid keeps boundary Laplacians
    const OptimizeResult r = optimize_template(grid, grid.vertices, plane, config);
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.positions == grid.vertices);
    CHECK(r.trace.size() == 1);
    CHECK(r.trace.front().total() <= 1e-15);
}

TEST_CASE("optimize: noisy sphere approaches the field")
{
    auto g = testing::rng(205);
    const TriangleMesh mesh = fixtures::jittered_sphere(g, 0.02, 2);
    RefineConfig config;
    config.iterations = 40;
    const OptimizeResult r = optimize_template(mesh, mesh.vertices, sphere_field(1.0), config);
    REQUIRE(r.trace.size() >= 11);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].total() <= r.trace[i - 1].total());
    for (std::size_t i = 1; i <= 10; ++i) CHECK(r.trace[i].values.at("L_sdf") < r.trace[i - 1].values.at("L_sdf"));
}

TEST_CASE("optimize: flat start keeps face orientation")
{
    auto g = testing::rng(206);
    TriangleMesh grid = fixtures::planar_grid(6, 6, 0.1);
    for (int v = 0; v < grid.vertex_count(); ++v) grid.vertices(v, 2) += testing::uniform(g, -0.004, 0.004);
    const SdfField plane{AnalyticSdf{Plane{Vec3::UnitZ(), -0.01}, 1.0}};
    RefineConfig config;
    config.iterations = 60;
    config.weights[3] = 1.0;
    const FaceGeometry start = face_geometry(grid.faces, grid.vertices);
    const OptimizeResult r = optimize_template(grid, grid.vertices, plane, config);
    const FaceGeometry end = face_geometry(grid.faces, r.positions);
    for (int f = 0; f < grid.face_count(); ++f) CHECK(start.normals.row(f).dot(end.normals.row(f)) > 0.0);
    CHECK(r.trace.back().total() < r.trace.front().total());
}

TEST_CASE("optimize: non-finite loss is reported with its trace")
{
    const TriangleMesh mesh = fixtures::icosphere(1, 1.0);
    const SdfField runaway{AnalyticSdf{Sphere{Vec3::Zero(), 0.5}, std::numeric_limits<double>::infinity()}};
    try {
        optimize_template(mesh, mesh.vertices, runaway);
        FAIL("expected an OptimizationError");
    } catch (const OptimizationError& e) {
        CHECK(e.trace().size() == 1);
    }
}
