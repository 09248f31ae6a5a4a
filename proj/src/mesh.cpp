#include "avatar/mesh.hpp"

#include "avatar/error.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace avatar {

namespace {

constexpr double kMinFaceArea = 1e-12;

std::uint64_t edge_key(int a, int b)
{
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

std::string join(const std::vector<int>& values, std::size_t limit = 16)
{
    std::ostringstream out;
    for (std::size_t i = 0; i < values.size() && i < limit; ++i) {
        if (i) out << ", ";
        out << values[i];
    }
    if (values.size() > limit) out << ", ... (" << values.size() << " total)";
    return out.str();
}

}  // namespace

DegenerateFaceError::DegenerateFaceError(std::vector<int> faces)
    : Error("degenerate faces (area <= 1e-12): " + join(faces)), faces_(std::move(faces))
{}

void validate(const TriangleMesh& mesh)
{
    const int n = mesh.vertex_count();
    if (mesh.uv.rows() != 3 * mesh.faces.rows()) {
        throw DimensionError("uv must have one row per face corner");
    }
    for (int f = 0; f < mesh.face_count(); ++f) {
        const auto face = mesh.faces.row(f);
        for (int k = 0; k < 3; ++k) {
            if (face(k) < 0 || face(k) >= n) {
                throw TopologyError("face " + std::to_string(f) + " references vertex " +
                                    std::to_string(face(k)) + " of " + std::to_string(n));
            }
        }
        if (face(0) == face(1) || face(1) == face(2) || face(0) == face(2)) {
            throw TopologyError("face " + std::to_string(f) + " repeats a vertex index");
        }
    }
    if ((mesh.uv.array() < 0.0).any() || (mesh.uv.array() > 1.0).any() || !mesh.uv.allFinite()) {
        throw DomainError("uv coordinates must lie in [0,1]^2");
    }
    if (!mesh.vertices.allFinite()) throw DomainError("non-finite vertex position");
    if (mesh.skin) {
        const SkinWeights& w = *mesh.skin;
        if (w.rows() != n) throw DimensionError("skin weights need one row per vertex");
        for (int v = 0; v < n; ++v) {
            double sum = 0.0;
            for (SkinWeights::InnerIterator it(w, v); it; ++it) {
                if (it.value() < 0.0) throw DomainError("negative skin weight at vertex " + std::to_string(v));
                sum += it.value();
            }
            if (std::abs(sum - 1.0) > 1e-6) {
                throw DomainError("skin weights of vertex " + std::to_string(v) + " sum to " + std::to_string(sum));
            }
        }
    }
}

void require_vertex_array(const TriangleMesh& mesh, const Positions& positions)
{
    if (positions.rows() != mesh.vertices.rows()) {
        throw DimensionError("expected " + std::to_string(mesh.vertices.rows()) + " positions, got " +
                             std::to_string(positions.rows()));
    }
}

FaceGeometry face_geometry(const Faces& faces, const Positions& positions)
{
    FaceGeometry geo;
    geo.normals.resize(faces.rows(), 3);
    geo.areas.resize(faces.rows());
    std::vector<int> degenerate;
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Vec3 a = positions.row(faces(f, 0));
        const Vec3 b = positions.row(faces(f, 1));
        const Vec3 c = positions.row(faces(f, 2));
        const Vec3 cross = (b - a).cross(c - a);
        const double norm = cross.norm();
        geo.areas(f) = 0.5 * norm;
        if (!(geo.areas(f) > kMinFaceArea)) {
            degenerate.push_back(static_cast<int>(f));
            geo.normals.row(f).setZero();
            continue;
        }
        geo.normals.row(f) = cross / norm;
    }
    if (!degenerate.empty()) throw DegenerateFaceError(std::move(degenerate));
    return geo;
}

FaceGeometry face_geometry(const TriangleMesh& mesh) { return face_geometry(mesh.faces, mesh.vertices); }

std::vector<std::vector<int>> vertex_neighbors(const Faces& faces, int vertex_count)
{
    std::vector<std::vector<int>> rings(vertex_count);
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const int v = faces(f, k);
            rings[v].push_back(faces(f, (k + 1) % 3));
            rings[v].push_back(faces(f, (k + 2) % 3));
        }
    }
    for (auto& ring : rings) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
    return rings;
}

Eigen::SparseMatrix<double> uniform_laplacian(const Faces& faces, int vertex_count)
{
    const auto rings = vertex_neighbors(faces, vertex_count);
    std::vector<Eigen::Triplet<double>> triplets;
    for (int v = 0; v < vertex_count; ++v) {
        if (rings[v].empty()) throw TopologyError("isolated vertex " + std::to_string(v) + " has no neighbors");
        const double w = 1.0 / static_cast<double>(rings[v].size());
        triplets.emplace_back(v, v, 1.0);
        for (int u : rings[v]) triplets.emplace_back(v, u, -w);
    }
    Eigen::SparseMatrix<double> L(vertex_count, vertex_count);
    L.setFromTriplets(triplets.begin(), triplets.end());
    return L;
}

Positions vertex_laplacian(const TriangleMesh& mesh, const Positions& positions)
{
    require_vertex_array(mesh, positions);
    const auto rings = vertex_neighbors(mesh.faces, mesh.vertex_count());
    Positions out(positions.rows(), 3);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        if (rings[v].empty()) throw TopologyError("isolated vertex " + std::to_string(v) + " has no neighbors");
        Vec3 mean = Vec3::Zero();
        for (int u : rings[v]) mean += positions.row(u).transpose();
        mean /= static_cast<double>(rings[v].size());
        out.row(v) = positions.row(v) - mean.transpose();
    }
    return out;
}

TriangleMesh subdivide_once(const TriangleMesh& mesh)
{
    const int n = mesh.vertex_count();
    const int nf = mesh.face_count();
    std::unordered_map<std::uint64_t, int> midpoint;
    std::vector<std::pair<int, int>> new_edges;
    auto mid = [&](int a, int b) {
        auto [it, inserted] = midpoint.try_emplace(edge_key(a, b), n + static_cast<int>(new_edges.size()));
        if (inserted) new_edges.emplace_back(a, b);
        return it->second;
    };

    TriangleMesh out;
    out.faces.resize(4 * nf, 3);
    out.uv.resize(12 * nf, 2);
    for (int f = 0; f < nf; ++f) {
        const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        const Vec2 ua = mesh.corner_uv(f, 0), ub = mesh.corner_uv(f, 1), uc = mesh.corner_uv(f, 2);
        const Vec2 uab = 0.5 * (ua + ub), ubc = 0.5 * (ub + uc), uca = 0.5 * (uc + ua);
        const int base = 4 * f;
        out.faces.row(base + 0) << a, ab, ca;
        out.faces.row(base + 1) << ab, b, bc;
        out.faces.row(base + 2) << ca, bc, c;
        out.faces.row(base + 3) << ab, bc, ca;
        const Vec2 corners[4][3] = {{ua, uab, uca}, {uab, ub, ubc}, {uca, ubc, uc}, {uab, ubc, uca}};
        for (int t = 0; t < 4; ++t) {
            for (int k = 0; k < 3; ++k) out.uv.row(3 * (base + t) + k) = corners[t][k].transpose();
        }
    }

    const int total = n + static_cast<int>(new_edges.size());
    out.vertices.resize(total, 3);
    out.vertices.topRows(n) = mesh.vertices;
    for (std::size_t e = 0; e < new_edges.size(); ++e) {
        const auto [a, b] = new_edges[e];
        out.vertices.row(n + static_cast<int>(e)) = 0.5 * (mesh.vertices.row(a) + mesh.vertices.row(b));
    }

    if (mesh.skin) {
        const SkinWeights& w = *mesh.skin;
        std::vector<Eigen::Triplet<double>> triplets;
        for (int v = 0; v < n; ++v) {
            for (SkinWeights::InnerIterator it(w, v); it; ++it) triplets.emplace_back(v, it.col(), it.value());
        }
        for (std::size_t e = 0; e < new_edges.size(); ++e) {
            const auto [a, b] = new_edges[e];
            const int row = n + static_cast<int>(e);
            for (SkinWeights::InnerIterator it(w, a); it; ++it) triplets.emplace_back(row, it.col(), 0.5 * it.value());
            for (SkinWeights::InnerIterator it(w, b); it; ++it) triplets.emplace_back(row, it.col(), 0.5 * it.value());
        }
        SkinWeights sw(total, w.cols());
        sw.setFromTriplets(triplets.begin(), triplets.end());
        out.skin = std::move(sw);
    }
    return out;
}

Positions vertex_normals(const Faces& faces, const Positions& positions)
{
    Positions normals = Positions::Zero(positions.rows(), 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Vec3 a = positions.row(faces(f, 0));
        const Vec3 b = positions.row(faces(f, 1));
        const Vec3 c = positions.row(faces(f, 2));
        const Vec3 weighted = (b - a).cross(c - a);
        for (int k = 0; k < 3; ++k) normals.row(faces(f, k)) += weighted.transpose();
    }
    normals.rowwise().normalize();
    return normals;
}

Positions angle_weighted_normals(const Faces& faces, const Positions& positions)
{
    Positions normals = Positions::Zero(positions.rows(), 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        Vec3 p[3];
        for (int k = 0; k < 3; ++k) p[k] = positions.row(faces(f, k));
        const Vec3 cross = (p[1] - p[0]).cross(p[2] - p[0]);
        const double norm = cross.norm();
        if (norm == 0.0) continue;
        const Vec3 n = cross / norm;
        for (int k = 0; k < 3; ++k) {
            const Vec3 e1 = p[(k + 1) % 3] - p[k];
            const Vec3 e2 = p[(k + 2) % 3] - p[k];
            const double angle = std::atan2(e1.cross(e2).norm(), e1.dot(e2));
            normals.row(faces(f, k)) += angle * n.transpose();
        }
    }
    normals.rowwise().normalize();
    return normals;
}

SeamEdgeList extract_seams(const TriangleMesh& mesh, double tolerance)
{
    struct Side {
        int face;
        int corner;  // corner index of the edge's first vertex in face order
    };
    std::map<std::uint64_t, std::vector<Side>> edges;
    for (int f = 0; f < mesh.face_count(); ++f) {
        for (int k = 0; k < 3; ++k) {
            edges[edge_key(mesh.faces(f, k), mesh.faces(f, (k + 1) % 3))].push_back({f, k});
        }
    }

    auto corner_of = [&](int face, int vertex) {
        for (int k = 0; k < 3; ++k) {
            if (mesh.faces(face, k) == vertex) return k;
        }
        return -1;
    };
    auto inward_normal = [&](int face, int c0, int c1) {
        const Vec2 p0 = mesh.corner_uv(face, c0);
        const Vec2 edge = mesh.corner_uv(face, c1) - p0;
        const Vec2 opposite = mesh.corner_uv(face, 3 - c0 - c1) - p0;
        Vec2 n(-edge.y(), edge.x());
        if (n.dot(opposite) < 0.0) n = -n;
        const double len = n.norm();
        return len > 0.0 ? Vec2(n / len) : Vec2::Zero();
    };

    SeamEdgeList seams;
    for (const auto& [key, sides] : edges) {
        if (sides.size() > 2) {
            const int v0 = static_cast<int>(key >> 32), v1 = static_cast<int>(key & 0xffffffffu);
            throw TopologyError("non-manifold edge (" + std::to_string(v0) + ", " + std::to_string(v1) + ") has " +
                                std::to_string(sides.size()) + " faces");
        }
        if (sides.size() < 2) continue;
        const int v0 = static_cast<int>(key >> 32);
        const int v1 = static_cast<int>(key & 0xffffffffu);
        const int fa = sides[0].face, fb = sides[1].face;
        const int a0 = corner_of(fa, v0), a1 = corner_of(fa, v1);
        const int b0 = corner_of(fb, v0), b1 = corner_of(fb, v1);
        const bool differs = (mesh.corner_uv(fa, a0) - mesh.corner_uv(fb, b0)).norm() > tolerance ||
                             (mesh.corner_uv(fa, a1) - mesh.corner_uv(fb, b1)).norm() > tolerance;
        if (!differs) continue;

        SeamEdge seam;
        seam.v0 = v0;
        seam.v1 = v1;
        seam.face_a = fa;
        seam.face_b = fb;
        seam.start_a = mesh.corner_uv(fa, a0);
        seam.start_b = mesh.corner_uv(fb, b0);
        seam.edge_a = mesh.corner_uv(fa, a1) - seam.start_a;
        seam.edge_b = mesh.corner_uv(fb, b1) - seam.start_b;
        if (!(seam.edge_a.norm() > 0.0) || !(seam.edge_b.norm() > 0.0)) {
            throw DomainError("seam edge (" + std::to_string(v0) + ", " + std::to_string(v1) +
                              ") has zero UV length");
        }
        seam.normal_a = inward_normal(fa, a0, a1);
        seam.normal_b = inward_normal(fb, b0, b1);
        seams.push_back(seam);
    }
    return seams;
}

}  // namespace avatar
