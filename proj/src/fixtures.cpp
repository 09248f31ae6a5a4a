#include "avatar/fixtures.hpp"

#include "avatar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace avatar::fixtures {

namespace {

constexpr double kPi = std::numbers::pi;

/// Accumulates faces with per-corner UVs.
struct MeshBuilder {
    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::vector<Vec2> uvs;

    int vertex(const Vec3& p)
    {
        vertices.push_back(p);
        return static_cast<int>(vertices.size()) - 1;
    }

    void face(int a, int b, int c, const Vec2& ua, const Vec2& ub, const Vec2& uc)
    {
        faces.emplace_back(a, b, c);
        uvs.push_back(ua);
        uvs.push_back(ub);
        uvs.push_back(uc);
    }

    /// Adds the face wound so that its normal points away from `inside`.
    void outward_face(int a, int b, int c, const Vec2& ua, const Vec2& ub, const Vec2& uc, const Vec3& inside)
    {
        const Vec3 n = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
        const Vec3 centroid = (vertices[a] + vertices[b] + vertices[c]) / 3.0;
        if (n.dot(centroid - inside) >= 0.0) {
            face(a, b, c, ua, ub, uc);
        } else {
            face(a, c, b, ua, uc, ub);
        }
    }

    TriangleMesh build() const
    {
        TriangleMesh m;
        m.vertices.resize(static_cast<Eigen::Index>(vertices.size()), 3);
        for (std::size_t i = 0; i < vertices.size(); ++i) m.vertices.row(static_cast<Eigen::Index>(i)) = vertices[i];
        m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
        for (std::size_t i = 0; i < faces.size(); ++i) m.faces.row(static_cast<Eigen::Index>(i)) = faces[i];
        m.uv.resize(static_cast<Eigen::Index>(uvs.size()), 2);
        for (std::size_t i = 0; i < uvs.size(); ++i) m.uv.row(static_cast<Eigen::Index>(i)) = uvs[i];
        validate(m);
        return m;
    }
};

}  // namespace

TriangleMesh icosphere(int level, double radius)
{
    if (level < 0) throw DomainError("icosphere level must be non-negative");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    const double base[12][3] = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    const int tris[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    MeshBuilder b;
    for (const auto& p : base) b.vertex(Vec3(p[0], p[1], p[2]).normalized() * radius);
    for (int f = 0; f < 20; ++f) {
        const double x0 = 0.2 * (f % 5), y0 = 0.25 * (f / 5);
        b.face(tris[f][0], tris[f][1], tris[f][2], Vec2(x0 + 0.02, y0 + 0.02), Vec2(x0 + 0.18, y0 + 0.02),
               Vec2(x0 + 0.10, y0 + 0.23));
    }
    TriangleMesh mesh = b.build();
    for (int i = 0; i < level; ++i) {
        mesh = subdivide_once(mesh);
        mesh.vertices.rowwise().normalize();
        mesh.vertices *= radius;
    }
    return mesh;
}

namespace {

/// Tube vertices on rings × segments, atlas (j/segments, v0 + i/rings·(v1−v0)).
void add_tube(MeshBuilder& b, int segments, int rings, double v0, double v1, const auto& position)
{
    const int first = static_cast<int>(b.vertices.size());
    for (int i = 0; i <= rings; ++i) {
        for (int j = 0; j < segments; ++j) {
            b.vertex(position(2.0 * kPi * j / segments, static_cast<double>(i) / rings));
        }
    }
    auto id = [&](int i, int j) { return first + i * segments + (j % segments); };
    auto uv = [&](int i, int j) {
        return Vec2(static_cast<double>(j) / segments, v0 + (v1 - v0) * static_cast<double>(i) / rings);
    };
    for (int i = 0; i < rings; ++i) {
        for (int j = 0; j < segments; ++j) {
            b.face(id(i, j), id(i + 1, j + 1), id(i, j + 1), uv(i, j), uv(i + 1, j + 1), uv(i, j + 1));
            b.face(id(i, j), id(i + 1, j), id(i + 1, j + 1), uv(i, j), uv(i + 1, j), uv(i + 1, j + 1));
        }
    }
}

}  // namespace

TriangleMesh cylinder(double radius, double height, int segments, int rings)
{
    if (segments < 3 || rings < 1) throw DomainError("cylinder needs at least 3 segments and 1 ring");
    MeshBuilder b;
    add_tube(b, segments, rings, 0.0, 1.0, [&](double theta, double s) {
        return Vec3(radius * std::cos(theta), height * s, radius * std::sin(theta));
    });
    return b.build();
}

TriangleMesh deformed_cylinder(int segments, int rings)
{
    const double radius = 0.1, length = 1.0, bend = 0.8;
    MeshBuilder b;
    add_tube(b, segments, rings, 0.0, 1.0, [&](double theta, double s) {
        const double r = radius * (1.0 + 0.25 * std::cos(3.0 * theta));
        const double phi = s * length / bend;
        const Vec3 center(bend * (1.0 - std::cos(phi)), bend * std::sin(phi), 0.0);
        const Vec3 normal(std::cos(phi), -std::sin(phi), 0.0);
        return Vec3(center + r * std::cos(theta) * normal + r * std::sin(theta) * Vec3::UnitZ());
    });
    return b.build();
}

TriangleMesh two_chart_sphere(int segments, int rings_per_hemisphere)
{
    if (segments < 3 || rings_per_hemisphere < 1) throw DomainError("sphere needs at least 3 segments and 1 ring");
    const int m = rings_per_hemisphere;
    MeshBuilder b;
    auto at = [](double phi, double theta) {
        return Vec3(std::sin(phi) * std::cos(theta), std::cos(phi), std::sin(phi) * std::sin(theta));
    };
    // Rings k = 0 (north pole) .. 2m (south pole); poles are single vertices.
    std::vector<std::vector<int>> ring(2 * m + 1);
    for (int k = 0; k <= 2 * m; ++k) {
        const double phi = kPi * k / (2.0 * m);
        if (k == 0 || k == 2 * m) {
            ring[k].push_back(b.vertex(at(phi, 0.0)));
            continue;
        }
        for (int j = 0; j < segments; ++j) ring[k].push_back(b.vertex(at(phi, 2.0 * kPi * j / segments)));
    }
    auto uv = [&](int k, int j, bool north) {
        const double theta = 2.0 * kPi * j / segments;
        const double phi = kPi * k / (2.0 * m);
        const double rho = 0.24 * (north ? phi : kPi - phi) / (kPi / 2.0);
        const Vec2 center = north ? Vec2(0.25, 0.5) : Vec2(0.75, 0.5);
        return Vec2(center + rho * Vec2(std::cos(theta), std::sin(theta)));
    };
    auto id = [&](int k, int j) { return ring[k].size() == 1 ? ring[k][0] : ring[k][j % segments]; };
    const Vec3 origin = Vec3::Zero();
    for (int k = 0; k < 2 * m; ++k) {
        const bool north = k < m;
        for (int j = 0; j < segments; ++j) {
            const int a = id(k, j), bq = id(k, j + 1), c = id(k + 1, j), d = id(k + 1, j + 1);
            if (k > 0) b.outward_face(a, bq, d, uv(k, j, north), uv(k, j + 1, north), uv(k + 1, j + 1, north), origin);
            if (k + 1 < 2 * m) b.outward_face(a, d, c, uv(k, j, north), uv(k + 1, j + 1, north), uv(k + 1, j, north), origin);
        }
    }
    return b.build();
}

TriangleMesh planar_grid(int nx, int ny, double spacing)
{
    if (nx < 1 || ny < 1) throw DomainError("grid needs at least one cell");
    MeshBuilder b;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) b.vertex(Vec3(i * spacing, j * spacing, 0.0));
    }
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };
    auto uv = [&](int i, int j) { return Vec2(static_cast<double>(i) / nx, static_cast<double>(j) / ny); };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            b.face(id(i, j), id(i + 1, j), id(i + 1, j + 1), uv(i, j), uv(i + 1, j), uv(i + 1, j + 1));
            b.face(id(i, j), id(i + 1, j + 1), id(i, j + 1), uv(i, j), uv(i + 1, j + 1), uv(i, j + 1));
        }
    }
    return b.build();
}

TriangleMesh equilateral_grid(int nx, int ny, double edge)
{
    if (nx < 1 || ny < 1) throw DomainError("grid needs at least one cell");
    const double h = edge * std::sqrt(3.0) / 2.0;
    MeshBuilder b;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) b.vertex(Vec3(i * edge + (j % 2 ? 0.5 * edge : 0.0), j * h, 0.0));
    }
    const double width = (nx + 0.5) * edge, height = ny * h;
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };
    auto uv = [&](int v) { return Vec2(b.vertices[v].x() / width, b.vertices[v].y() / height); };
    auto tri = [&](int a, int c, int d) { b.face(a, c, d, uv(a), uv(c), uv(d)); };
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            if (j % 2 == 0) {
                tri(id(i, j), id(i + 1, j), id(i, j + 1));
                tri(id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            } else {
                tri(id(i, j), id(i + 1, j), id(i + 1, j + 1));
                tri(id(i, j), id(i + 1, j + 1), id(i, j + 1));
            }
        }
    }
    return b.build();
}

TriangleMesh tent(double theta)
{
    MeshBuilder b;
    b.vertex(Vec3(0.0, 0.0, 0.0));
    b.vertex(Vec3(0.0, 1.0, 0.0));
    b.vertex(Vec3(1.0, 0.5, 0.0));
    b.vertex(Vec3(std::cos(theta), 0.5, std::sin(theta)));
    b.face(0, 1, 2, Vec2(0.5, 0.0), Vec2(0.5, 1.0), Vec2(1.0, 0.5));
    b.face(1, 0, 3, Vec2(0.5, 1.0), Vec2(0.5, 0.0), Vec2(0.0, 0.5));
    return b.build();
}

TriangleMesh cube(double half)
{
    MeshBuilder b;
    for (int k = 0; k < 8; ++k) {
        b.vertex(Vec3(k & 1 ? half : -half, k & 2 ? half : -half, k & 4 ? half : -half));
    }
    // Each side is one chart in a 3 × 2 grid of atlas cells.
    const int sides[6][4] = {{0, 2, 6, 4}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 5, 7, 6}};
    for (int s = 0; s < 6; ++s) {
        const Vec2 o(0.33 * (s % 3) + 0.01, 0.5 * (s / 3) + 0.01);
        const Vec2 q[4] = {o, o + Vec2(0.3, 0.0), o + Vec2(0.3, 0.45), o + Vec2(0.0, 0.45)};
        const int* v = sides[s];
        b.outward_face(v[0], v[1], v[2], q[0], q[1], q[2], Vec3::Zero());
        b.outward_face(v[0], v[2], v[3], q[0], q[2], q[3], Vec3::Zero());
    }
    return b.build();
}

TriangleMesh jittered_sphere(std::mt19937_64& rng, double jitter, int level)
{
    TriangleMesh mesh = icosphere(level);
    std::uniform_real_distribution<double> dist(-jitter, jitter);
    for (int v = 0; v < mesh.vertex_count(); ++v) mesh.vertices.row(v) *= 1.0 + dist(rng);
    return mesh;
}

Positions lifted_samples(const TriangleMesh& mesh, std::mt19937_64& g, int n, double h_lo, double h_hi,
                         std::vector<int>* faces)
{
    if (n < 0 || !(h_lo <= h_hi)) throw DomainError("lifted_samples needs n >= 0 and h_lo <= h_hi");
    auto uniform = [](std::mt19937_64& r, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(r); };
    const FaceGeometry fg = face_geometry(mesh);
    std::vector<double> cdf(mesh.face_count());
    std::partial_sum(fg.areas.data(), fg.areas.data() + fg.areas.size(), cdf.begin());
    Positions out(n, 3);
    for (int i = 0; i < n; ++i) {
        const double pick = uniform(g, 0.0, cdf.back());
        const int f = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
        double r1 = uniform(g, 0, 1), r2 = uniform(g, 0, 1);
        if (r1 + r2 > 1) r1 = 1 - r1, r2 = 1 - r2;
        const Vec3 a = mesh.position(mesh.faces(f, 0)), b = mesh.position(mesh.faces(f, 1)),
                   c = mesh.position(mesh.faces(f, 2));
        const Vec3 p = a + r1 * (b - a) + r2 * (c - a);
        out.row(i) = (p + uniform(g, h_lo, h_hi) * fg.normals.row(f).transpose()).transpose();
        if (faces) faces->push_back(f);
    }
    return out;
}

int dof_index(const Skeleton& skeleton, const std::string& name)
{
    for (int i = 0; i < skeleton.dof_count(); ++i) {
        if (skeleton.dofs[i].name == name) return i;
    }
    return -1;
}

namespace {

Skeleton leg_skeleton()
{
    Skeleton s;
    auto joint = [&](const std::string& name, int parent, const Vec3& offset) {
        Joint j;
        j.name = name;
        j.parent = parent;
        j.rest = Isometry::Identity();
        j.rest.translation() = offset;
        s.joints.push_back(j);
    };
    joint("pelvis", -1, Vec3(0.0, 1.0, 0.0));
    joint("hip", 0, Vec3(0.0, -0.05, 0.0));
    joint("knee", 1, Vec3(0.0, -0.45, 0.0));
    joint("ankle", 2, Vec3(0.0, -0.42, 0.0));
    auto dof = [&](int joint_index, const Vec3& axis, DofType type, double lo, double hi, const std::string& name) {
        s.dofs.push_back({joint_index, axis, type, lo, hi, name});
    };
    dof(0, Vec3::UnitX(), DofType::Translational, -2.0, 2.0, "root_tx");
    dof(0, Vec3::UnitY(), DofType::Translational, -2.0, 2.0, "root_ty");
    dof(0, Vec3::UnitZ(), DofType::Translational, -2.0, 2.0, "root_tz");
    dof(0, Vec3::UnitY(), DofType::Rotational, -kPi, kPi, "root_ry");
    dof(1, Vec3::UnitX(), DofType::Rotational, -1.5, 1.5, "hip_rx");
    dof(1, Vec3::UnitZ(), DofType::Rotational, -0.8, 0.8, "hip_rz");
    dof(2, Vec3::UnitX(), DofType::Rotational, 0.0, 2.4, "knee_rx");
    dof(3, Vec3::UnitX(), DofType::Rotational, -0.8, 0.8, "ankle_rx");
    validate(s);
    return s;
}

/// Piecewise-linear blend of joint weights by height along the leg.
std::vector<std::pair<int, double>> leg_weights(double y)
{
    auto ramp = [](double x, double lo, double hi) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); };
    if (y >= 0.9) {
        const double t = ramp(y, 0.9, 1.0);
        return {{0, t}, {1, 1.0 - t}};
    }
    if (y >= 0.45) {
        const double t = ramp(y, 0.45, 0.55);
        return {{1, t}, {2, 1.0 - t}};
    }
    const double t = ramp(y, 0.04, 0.12);
    return {{2, t}, {3, 1.0 - t}};
}

}  // namespace

LegAvatar leg_avatar(int segments, int rings, int frames)
{
    if (segments < 3 || rings < 2 || frames < 1) throw DomainError("leg avatar needs segments ≥ 3, rings ≥ 2, frames ≥ 1");
    const double radius = 0.06, bottom = 0.05, top = 1.0;
    MeshBuilder b;
    add_tube(b, segments, rings, 0.0, 0.7, [&](double theta, double s) {
        // Slight taper towards the ankle.
        const double r = radius * (0.75 + 0.25 * s);
        return Vec3(r * std::cos(theta), bottom + (top - bottom) * s, r * std::sin(theta));
    });
    // Caps: fans around a center vertex, each in its own disk chart.
    const Vec3 inside(0.0, 0.5 * (bottom + top), 0.0);
    for (int cap = 0; cap < 2; ++cap) {
        const int ring = cap == 0 ? 0 : rings;
        const double y = cap == 0 ? bottom : top;
        const int center = b.vertex(Vec3(0.0, y, 0.0));
        const Vec2 c(cap == 0 ? 0.25 : 0.75, 0.85);
        auto uv = [&](int j) {
            const double theta = 2.0 * kPi * j / segments;
            return Vec2(c + 0.12 * Vec2(std::cos(theta), std::sin(theta)));
        };
        for (int j = 0; j < segments; ++j) {
            const int a = ring * segments + j, n = ring * segments + (j + 1) % segments;
            b.outward_face(center, a, n, c, uv(j), uv(j + 1), inside);
        }
    }

    LegAvatar avatar;
    avatar.mesh = b.build();
    avatar.skeleton = leg_skeleton();

    const int nv = avatar.mesh.vertex_count();
    std::vector<Eigen::Triplet<double>> triplets;
    for (int v = 0; v < nv; ++v) {
        for (const auto& [joint, w] : leg_weights(avatar.mesh.vertices(v, 1))) {
            if (w > 0.0) triplets.emplace_back(v, joint, w);
        }
    }
    SkinWeights skin(nv, avatar.skeleton.joint_count());
    skin.setFromTriplets(triplets.begin(), triplets.end());
    avatar.mesh.skin = std::move(skin);

    // Graph nodes: four vertices on every fourth ring, linked around and along.
    EmbeddedGraph& g = avatar.graph;
    const int step = std::max(1, rings / 6);
    std::vector<int> ring_ids;
    for (int i = 0; i <= rings; i += step) ring_ids.push_back(i);
    if (ring_ids.back() != rings) ring_ids.push_back(rings);
    for (std::size_t r = 0; r < ring_ids.size(); ++r) {
        for (int q = 0; q < 4; ++q) {
            const int node = static_cast<int>(g.anchors.size());
            g.anchors.push_back(ring_ids[r] * segments + q * segments / 4);
            g.edges.emplace_back(node, static_cast<int>(r) * 4 + (q + 1) % 4);
            if (r > 0) g.edges.emplace_back(node, node - 4);
        }
    }
    g.nodes.resize(static_cast<Eigen::Index>(g.anchors.size()), 3);
    for (std::size_t k = 0; k < g.anchors.size(); ++k) {
        g.nodes.row(static_cast<Eigen::Index>(k)) = avatar.mesh.vertices.row(g.anchors[k]);
    }
    g.weights = geodesic_weights(avatar.mesh, g.anchors, kDefaultGraphInfluences);

    MotionSequence& motion = avatar.motion;
    motion.fps = 25.0;
    motion.frames = Eigen::MatrixXd::Zero(frames, avatar.skeleton.dof_count());
    for (int f = 0; f < frames; ++f) {
        const double p = 2.0 * kPi * f / std::max(frames, 1);
        motion.frames(f, 1) = 0.02 * std::sin(2.0 * p);
        motion.frames(f, 2) = 0.4 * f / std::max(frames, 1);
        motion.frames(f, 3) = 0.1 * std::sin(p);
        motion.frames(f, 4) = 0.5 * std::sin(p);
        motion.frames(f, 5) = 0.05 * std::sin(p);
        motion.frames(f, 6) = 0.6 * (1.0 - std::cos(p));
        motion.frames(f, 7) = 0.2 * std::sin(p);
    }
    return avatar;
}

}  // namespace avatar::fixtures

namespace avatar::fixtures {

DecodedField random_decoded_field(std::shared_ptr<const ClosestPointIndex> mapping, double d_max,
                                  const DecodedFieldShape& shape, std::mt19937_64& rng)
{
    DecodedField f;
    f.mapping = std::move(mapping);
    f.d_max = d_max;
    f.encoding = shape.encoding;
    f.triplane = FeatureTriplane::random(shape.resolution, shape.channels, 0.5, rng);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    f.motion_code = Eigen::VectorXd::NullaryExpr(shape.motion_code, [&] { return unit(rng); });
    std::vector<int> dims{geometry_input_dim(shape.channels, shape.motion_code, shape.encoding)};
    for (int i = 0; i < shape.hidden_layers; ++i) dims.push_back(shape.width);
    dims.push_back(1 + shape.shape_code);
    f.geometry = random_mlp(dims, Activation::Softplus, Activation::None, rng);
    if (shape.color) {
        std::vector<int> cdims{color_input_dim(shape.shape_code, shape.encoding), shape.width, 3};
        f.color = random_mlp(cdims, Activation::Relu, Activation::Sigmoid, rng);
    }
    f.global_position = Vec3(unit(rng), unit(rng), unit(rng));
    validate(f);
    return f;
}

DecodedField height_field(std::shared_ptr<const ClosestPointIndex> mapping, double d_max, double noise,
                          const DecodedFieldShape& shape, std::mt19937_64& rng)
{
    DecodedField f = random_decoded_field(std::move(mapping), d_max, shape, rng);
    // Raw d̂ sits right after the tri-plane feature and motion code.
    const int dhat = 3 * shape.channels + shape.motion_code + 2;
    auto& layers = f.geometry.layers;
    // First layer: neurons 0/1 compute ±d = ±2·d_max·(d̂ − 1/2).
    layers[0].weight.topRows<2>().setZero();
    layers[0].weight(0, dhat) = 2.0 * d_max;
    layers[0].weight(1, dhat) = -2.0 * d_max;
    layers[0].bias(0) = -d_max;
    layers[0].bias(1) = d_max;
    // Hidden layers: neurons 0/1 rebuild ±d from the previous pair.
    for (std::size_t l = 1; l + 1 < layers.size(); ++l) {
        layers[l].weight.topRows<2>().setZero();
        layers[l].weight(0, 0) = 1.0;
        layers[l].weight(0, 1) = -1.0;
        layers[l].weight(1, 0) = -1.0;
        layers[l].weight(1, 1) = 1.0;
        layers[l].bias.head<2>().setZero();
        layers[l].weight.block(2, 0, layers[l].weight.rows() - 2, 2).setZero();
    }
    // Output: s = pair difference + noise · (random read-out of the other neurons).
    auto& out = layers.back();
    out.weight.row(0) *= noise;
    out.weight(0, 0) = 1.0;
    out.weight(0, 1) = -1.0;
    out.bias(0) *= noise;
    out.weight.block(1, 0, out.weight.rows() - 1, 2).setZero();
    return f;
}

}  // namespace avatar::fixtures
