#pragma once

#include "avatar/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace avatar {

/// Triangle mesh with a per-corner (wedge) UV atlas.
///
/// Wedge UVs let a vertex carry different atlas coordinates in different
/// faces, which is how texture seams are represented.
struct TriangleMesh {
    Positions vertices;
    Faces faces;
    CornerUvs uv;
    std::optional<SkinWeights> skin;

    int vertex_count() const { return static_cast<int>(vertices.rows()); }
    int face_count() const { return static_cast<int>(faces.rows()); }

    Vec2 corner_uv(int face, int corner) const { return uv.row(3 * face + corner).transpose(); }
    Vec3 position(int v) const { return vertices.row(v).transpose(); }
};

/// Throws if any TriangleMesh invariant is violated.
void validate(const TriangleMesh& mesh);

/// Checks that `positions` is a per-vertex array for `mesh`.
void require_vertex_array(const TriangleMesh& mesh, const Positions& positions);

TriangleMesh load_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(std::string_view text, const std::string& source = "<memory>");

/// Writes `v`/`vt`/`f v/vt` records; identical wedge UVs are shared.
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh, const Positions& positions);

struct FaceGeometry {
    Positions normals;  // unit, F×3
    Eigen::VectorXd areas;
};

FaceGeometry face_geometry(const TriangleMesh& mesh);
FaceGeometry face_geometry(const Faces& faces, const Positions& positions);

/// Vertex one-rings as sorted, deduplicated neighbor lists.
std::vector<std::vector<int>> vertex_neighbors(const Faces& faces, int vertex_count);

/// Uniform (umbrella) Laplacian: L_v = x_v - mean of the one-ring.
Eigen::SparseMatrix<double> uniform_laplacian(const Faces& faces, int vertex_count);

Positions vertex_laplacian(const TriangleMesh& mesh, const Positions& positions);

/// Splits every face into four at edge midpoints. Positions, UVs and skin
/// weights are midpoint-interpolated; shared edges share the new vertex.
TriangleMesh subdivide_once(const TriangleMesh& mesh);

/// Area-weighted vertex normals.
Positions vertex_normals(const Faces& faces, const Positions& positions);

/// Angle-weighted vertex pseudo-normals.
Positions angle_weighted_normals(const Faces& faces, const Positions& positions);

/// A mesh edge whose two faces disagree on the UV of at least one endpoint.
///
/// Side a belongs to `face_a`, side b to `face_b`. Both sides start at the
/// same mesh vertex `v0` and run towards `v1`; `normal_*` is the unit UV
/// perpendicular pointing into the respective face.
struct SeamEdge {
    int v0 = -1;
    int v1 = -1;
    int face_a = -1;
    int face_b = -1;
    Vec2 start_a, start_b;
    Vec2 edge_a, edge_b;
    Vec2 normal_a, normal_b;
};

using SeamEdgeList = std::vector<SeamEdge>;

/// Pairs the two sides of every UV seam. Throws TopologyError on an edge
/// shared by more than two faces.
SeamEdgeList extract_seams(const TriangleMesh& mesh, double tolerance = 1e-9);

}  // namespace avatar
