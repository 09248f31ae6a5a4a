#include "avatar/error.hpp"
#include "avatar/fixtures.hpp"
#include "avatar/io.hpp"
#include "avatar/mesh.hpp"
#include "support.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace avatar;

namespace {

const char* kTriangleObj = R"(# one triangle
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
f 1/1 2/2 3/3
)";

// Second, deliberately naive reader: counts records by their leading token.
std::pair<int, int> count_records(const std::filesystem::path& path)
{
    std::ifstream in(path);
    std::string line;
    int v = 0, f = 0;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") ++v;
        if (tag == "f") ++f;
    }
    return {v, f};
}

Eigen::MatrixXd dense_umbrella(const TriangleMesh& mesh)
{
    const int n = mesh.vertex_count();
    std::vector<std::set<int>> ring(n);
    for (int f = 0; f < mesh.face_count(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int a = mesh.faces(f, k), b = mesh.faces(f, (k + 1) % 3);
            ring[a].insert(b);
            ring[b].insert(a);
        }
    }
    Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n);
    for (int v = 0; v < n; ++v) {
        for (int u : ring[v]) L(v, u) -= 1.0 / static_cast<double>(ring[v].size());
    }
    return L;
}

double total_area(const TriangleMesh& mesh)
{
    double a = 0.0;
    for (int f = 0; f < mesh.face_count(); ++f) {
        const Vec3 p = mesh.position(mesh.faces(f, 0)), q = mesh.position(mesh.faces(f, 1)),
                   r = mesh.position(mesh.faces(f, 2));
        a += 0.5 * (q - p).cross(r - p).norm();
    }
    return a;
}

TriangleMesh single_triangle(const Vec3& a, const Vec3& b, const Vec3& c)
{
    TriangleMesh m;
    m.vertices.resize(3, 3);
    m.vertices << a.transpose(), b.transpose(), c.transpose();
    m.faces.resize(1, 3);
    m.faces << 0, 1, 2;
    m.uv.resize(3, 2);
    m.uv << 0, 0, 1, 0, 0, 1;
    return m;
}

}  // namespace

TEST_CASE("single-triangle OBJ loads")
{
    const TriangleMesh m = parse_obj(kTriangleObj);
    CHECK(m.face_count() == 1);
    CHECK(m.vertex_count() == 3);
    CHECK(m.corner_uv(0, 1).isApprox(Vec2(1, 0)));
}

TEST_CASE("OBJ face index 0 or past the vertex count is a parse error with its line")
{
    const std::string zero = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 0/1 2/1 3/1\n";
    const std::string past = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\n\nf 1/1 2/1 4/1\n";
    try {
        parse_obj(zero);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
    }
    try {
        parse_obj(past);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 6);
    }
}

TEST_CASE("OBJ face without vt references is a missing-UV error")
{
    const std::string text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
    CHECK_THROWS_WITH_AS(parse_obj(text), doctest::Contains("missing UV"), ParseError);
}

TEST_CASE("OBJ with quads is rejected")
{
    const std::string text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 4/1\n";
    CHECK_THROWS_AS(parse_obj(text), ParseError);
}

TEST_CASE("5120-face icosphere OBJ matches an independent record count")
{
    const auto dir = testing::scratch_dir("ico");
    const TriangleMesh ico = fixtures::icosphere(4);
    REQUIRE(ico.face_count() == 5120);
    save_obj(dir / "ico.obj", ico);
    const TriangleMesh loaded = load_obj(dir / "ico.obj");
    const auto [v, f] = count_records(dir / "ico.obj");
    CHECK(loaded.vertex_count() == v);
    CHECK(loaded.face_count() == f);
    CHECK(loaded.face_count() == 5120);
}

TEST_CASE("OBJ write-back round trip is idempotent")
{
    auto g = testing::rng(3);
    const auto dir = testing::scratch_dir("roundtrip");
    const TriangleMesh m = fixtures::jittered_sphere(g, 0.1, 2);
    save_obj(dir / "a.obj", m);
    const TriangleMesh once = load_obj(dir / "a.obj");
    save_obj(dir / "b.obj", once);
    const TriangleMesh twice = load_obj(dir / "b.obj");
    CHECK((once.vertices - m.vertices).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((twice.vertices - once.vertices).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(twice.faces == m.faces);
    CHECK((twice.uv - m.uv).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("face_geometry on axis-aligned triangles")
{
    const TriangleMesh m = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    const FaceGeometry g = face_geometry(m);
    CHECK(g.normals.row(0).transpose().isApprox(Vec3(0, 0, 1)));
    CHECK(g.areas(0) == doctest::Approx(0.5));

    const TriangleMesh r = single_triangle({0, 0, 0}, {0, 1, 0}, {1, 0, 0});
    CHECK(face_geometry(r).normals.row(0).transpose().isApprox(Vec3(0, 0, -1)));
}

TEST_CASE("face_geometry area equals half the cross-product norm and normals flip under winding reversal")
{
    auto g = testing::rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 a = testing::random_vec3(g), b = testing::random_vec3(g), c = testing::random_vec3(g);
        const double oracle = 0.5 * (b - a).cross(c - a).norm();
        if (oracle < 1e-6) continue;
        const FaceGeometry fg = face_geometry(single_triangle(a, b, c));
        const FaceGeometry rev = face_geometry(single_triangle(a, c, b));
        CHECK(fg.areas(0) == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(std::abs(fg.normals.row(0).norm() - 1.0) <= 1e-9);
        CHECK((fg.normals.row(0) + rev.normals.row(0)).norm() <= 1e-12);
    }
}

TEST_CASE("face_geometry lists degenerate faces")
{
    TriangleMesh m = fixtures::planar_grid(2, 1, 1.0);
    m.vertices.row(m.faces(3, 2)) = m.vertices.row(m.faces(3, 0));
    try {
        face_geometry(m);
        FAIL("expected a degenerate-face error");
    } catch (const DegenerateFaceError& e) {
        CHECK(std::find(e.faces().begin(), e.faces().end(), 3) != e.faces().end());
    }
}

TEST_CASE("umbrella Laplacian vanishes on a regular grid interior and equals an out-of-plane offset")
{
    TriangleMesh m = fixtures::planar_grid(4, 4, 0.5);
    Positions L = vertex_laplacian(m, m.vertices);
    const int center = 2 * 5 + 2;
    CHECK(L.row(center).norm() <= 1e-12);

    const double delta = 0.123;
    Positions lifted = m.vertices;
    lifted(center, 2) = delta;
    L = vertex_laplacian(m, lifted);
    CHECK(L.row(center).transpose().isApprox(Vec3(0, 0, delta)));
}

TEST_CASE("vertex_laplacian matches a dense assembled operator and is linear")
{
    auto g = testing::rng(5);
    const TriangleMesh m = fixtures::jittered_sphere(g, 0.1, 2);
    const Eigen::MatrixXd L = dense_umbrella(m);
    const Positions x = Positions::Random(m.vertex_count(), 3), y = Positions::Random(m.vertex_count(), 3);
    const Positions oracle = L * x;
    CHECK((vertex_laplacian(m, x) - oracle).cwiseAbs().maxCoeff() <= 1e-12);

    const double a = testing::uniform(g, -2, 2), b = testing::uniform(g, -2, 2);
    const Positions lhs = vertex_laplacian(m, a * x + b * y);
    const Positions rhs = a * vertex_laplacian(m, x) + b * vertex_laplacian(m, y);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("vertex_laplacian rejects isolated vertices")
{
    TriangleMesh m = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    m.vertices.conservativeResize(4, 3);
    m.vertices.row(3) = Vec3(5, 5, 5).transpose();
    CHECK_THROWS_AS(vertex_laplacian(m, m.vertices), TopologyError);
}

TEST_CASE("subdivide_once counts")
{
    const TriangleMesh one = subdivide_once(single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0}));
    CHECK(one.face_count() == 4);
    CHECK(one.vertex_count() == 6);

    const TriangleMesh ico = fixtures::icosphere(0);
    REQUIRE(ico.face_count() == 20);
    REQUIRE(ico.vertex_count() == 12);
    const TriangleMesh sub = subdivide_once(ico);
    CHECK(sub.face_count() == 80);
    CHECK(sub.vertex_count() == 42);
}

TEST_CASE("subdivide_once preserves planar area and keeps midpoint UVs on the original UV edges")
{
    auto g = testing::rng(8);
    TriangleMesh m = fixtures::planar_grid(3, 2, 0.3);
    for (int v = 0; v < m.vertex_count(); ++v) {
        m.vertices(v, 0) += testing::uniform(g, -0.05, 0.05);
        m.vertices(v, 1) += testing::uniform(g, -0.05, 0.05);
    }
    const TriangleMesh s = subdivide_once(m);
    CHECK(std::abs(total_area(s) - total_area(m)) <= 1e-12);

    for (int f = 0; f < m.face_count(); ++f) {
        const Vec2 ua = m.corner_uv(f, 0), ub = m.corner_uv(f, 1), uc = m.corner_uv(f, 2);
        // Child 3 is the middle triangle; its corners are the three edge midpoints.
        const Vec2 mids[3] = {s.corner_uv(4 * f + 3, 0), s.corner_uv(4 * f + 3, 1), s.corner_uv(4 * f + 3, 2)};
        const std::pair<Vec2, Vec2> edges[3] = {{ua, ub}, {ub, uc}, {uc, ua}};
        for (int k = 0; k < 3; ++k) {
            const Vec2 e = edges[k].second - edges[k].first, r = mids[k] - edges[k].first;
            CHECK(std::abs(e.x() * r.y() - e.y() * r.x()) <= 1e-15);
        }
    }
}

TEST_CASE("cylinder cut along a generator has one seam pair per vertical cut edge")
{
    const int rings = 7;
    const TriangleMesh c = fixtures::cylinder(0.2, 1.0, 12, rings);
    const SeamEdgeList seams = extract_seams(c);
    CHECK(seams.size() == static_cast<std::size_t>(rings));
    for (const SeamEdge& s : seams) {
        // Both endpoints sit on the cut (angle 0: x = r, z = 0).
        CHECK(std::abs(c.vertices(s.v0, 2)) <= 1e-12);
        CHECK(std::abs(c.vertices(s.v1, 2)) <= 1e-12);
        CHECK(s.edge_a.norm() > 0.0);
        CHECK(s.edge_b.norm() > 0.0);
        CHECK(std::abs(s.normal_a.norm() - 1.0) <= 1e-12);
    }
}

TEST_CASE("single-chart planar mesh has no seams")
{
    CHECK(extract_seams(fixtures::planar_grid(5, 3, 0.1)).empty());
}

TEST_CASE("two-chart sphere seams lie exactly on the equator")
{
    const int segments = 16;
    const TriangleMesh s = fixtures::two_chart_sphere(segments, 4);
    const SeamEdgeList seams = extract_seams(s);
    CHECK(seams.size() == static_cast<std::size_t>(segments));
    for (const SeamEdge& e : seams) {
        CHECK(std::abs(s.vertices(e.v0, 1)) <= 1e-12);
        CHECK(std::abs(s.vertices(e.v1, 1)) <= 1e-12);
    }
}

TEST_CASE("seam side normals point into their faces")
{
    const TriangleMesh c = fixtures::cylinder(0.2, 1.0, 10, 3);
    for (const SeamEdge& s : extract_seams(c)) {
        for (int side = 0; side < 2; ++side) {
            const int f = side == 0 ? s.face_a : s.face_b;
            const Vec2 start = side == 0 ? s.start_a : s.start_b;
            const Vec2 n = side == 0 ? s.normal_a : s.normal_b;
            const Vec2 centroid = (c.corner_uv(f, 0) + c.corner_uv(f, 1) + c.corner_uv(f, 2)) / 3.0;
            CHECK(n.dot(centroid - start) > 0.0);
        }
    }
}

TEST_CASE("non-manifold edges are reported")
{
    TriangleMesh m = fixtures::tent(2.0);
    m.vertices.conservativeResize(5, 3);
    m.vertices.row(4) = Vec3(0.0, 0.5, 1.0).transpose();
    m.faces.conservativeResize(3, 3);
    m.faces.row(2) << 0, 1, 4;
    m.uv.conservativeResize(9, 2);
    m.uv.bottomRows(3) << 0.1, 0.1, 0.2, 0.1, 0.1, 0.2;
    CHECK_THROWS_AS(extract_seams(m), TopologyError);
}

TEST_CASE("mesh validation rejects bad indices, repeated corners and UVs outside the unit square")
{
    TriangleMesh m = single_triangle({0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    TriangleMesh bad = m;
    bad.faces(0, 2) = 3;
    CHECK_THROWS(validate(bad));
    bad = m;
    bad.faces(0, 2) = 0;
    CHECK_THROWS(validate(bad));
    bad = m;
    bad.uv(1, 0) = 1.5;
    CHECK_THROWS(validate(bad));
}

TEST_CASE("procedural fixtures are outward oriented")
{
    for (const TriangleMesh& m : {fixtures::icosphere(2), fixtures::cube(0.5), fixtures::two_chart_sphere(12, 5)}) {
        const FaceGeometry g = face_geometry(m);
        for (int f = 0; f < m.face_count(); ++f) {
            const Vec3 centroid =
                (m.position(m.faces(f, 0)) + m.position(m.faces(f, 1)) + m.position(m.faces(f, 2))) / 3.0;
            CHECK(g.normals.row(f).dot(centroid) > 0.0);
        }
    }
}
