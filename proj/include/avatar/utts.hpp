#pragma once

#include "avatar/closest_point.hpp"
#include "avatar/config.hpp"
#include "avatar/mesh.hpp"

#include <Eigen/Geometry>

#include <random>
#include <span>
#include <utility>
#include <vector>

namespace avatar {

/// A point of the undeformed tri-plane texture space: atlas coordinate plus
/// signed height over the template surface.
struct UttsPoint {
    Vec2 u = Vec2::Zero();
    double d = 0.0;
    double d_max = 1.0;

    /// Height mapped to [0, 1]: (d / d_max + 1) / 2.
    double normalized_height() const { return 0.5 * (d / d_max + 1.0); }
    /// (u_x, u_y, normalized height); the cube the tri-planes are sampled in.
    Vec3 cube() const { return {u.x(), u.y(), normalized_height()}; }
};

struct MappingResult {
    UttsPoint utts;
    ElementKind kind = ElementKind::Face;
    int face = -1;      // face whose corner UVs were used
    int vertex_a = -1;  // vertex case: the vertex; edge case: lower global index
    int vertex_b = -1;  // edge case: higher global index
    double lambda_a = 0.0;  // face case: weight of the face's corner 0
    double lambda_b = 0.0;  // face case: weight of corner 1
    double lambda = 0.0;    // edge case: 0 at vertex_a, 1 at vertex_b
    Vec3 closest = Vec3::Zero();
    double distance = 0.0;         // unsigned
    double signed_distance = 0.0;  // sign from the element's pseudo-normal
    bool out_of_range = false;
    bool collision_prone = false;
};

/// Exact nearest-element queries over a posed triangle mesh.
///
/// Immutable after construction; queries are safe from any number of threads.
class ClosestPointIndex {
public:
    struct Node {
        Eigen::AlignedBox3d box;
        int first = 0;  // leaf: offset into face order; inner: right child
        int count = 0;  // 0 for inner nodes; left child is the next node
    };

    ClosestPointIndex(const TriangleMesh& mesh, const Positions& positions, int leaf_size = 4);

    /// Nearest element; `utts.d` and `signed_distance` carry the unsigned
    /// distance until map_to_utts signs them. `hint_face` seeds the search bound.
    MappingResult closest_point(const Vec3& x, int hint_face = -1) const;

    /// Signed distance to the surface (negative inside).
    double signed_distance(const Vec3& x) const;

    int face_count() const { return static_cast<int>(faces_.rows()); }
    const Faces& faces() const { return faces_; }
    const Positions& positions() const { return positions_; }
    const CornerUvs& uv() const { return uv_; }
    const Positions& face_normals() const { return face_normals_; }
    const Eigen::VectorXd& face_areas() const { return face_areas_; }
    const Positions& vertex_normals() const { return vertex_normals_; }
    Vec3 edge_normal(int face, int local_edge) const { return edge_normals_.row(3 * face + local_edge).transpose(); }
    Vec3 pseudo_normal(const MappingResult& result) const;
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<int>& face_order() const { return order_; }
    Eigen::AlignedBox3d bounds() const { return nodes_.front().box; }

private:
    struct Candidate {
        double squared_distance;
        ElementKind kind;
        int local;  // corner or local edge
    };
    Candidate evaluate(int face, const Vec3& x) const;
    int build(int begin, int end, int leaf_size, const std::vector<Vec3>& centroids);
    MappingResult finish(int face, const Candidate& c, const Vec3& x) const;

    Faces faces_;
    Positions positions_;
    CornerUvs uv_;
    Positions face_normals_;
    Eigen::VectorXd face_areas_;
    Positions vertex_normals_;
    Positions edge_normals_;  // 3F rows, one per face edge
    std::vector<Node> nodes_;
    std::vector<int> order_;
};

MappingResult closest_point(const ClosestPointIndex& index, const Vec3& x);

/// Closest point plus signed height, range and collision flags. Out-of-range
/// results keep the raw height in `signed_distance` and clamp `utts.d`.
MappingResult map_to_utts(const ClosestPointIndex& index, const Vec3& x, double d_max, int hint_face = -1);

/// Batch mapping; consecutive points reuse the previous result as a search hint.
std::vector<MappingResult> map_to_utts_batch(const ClosestPointIndex& index, const Positions& points, double d_max);

/// Face-case inverse: barycentric point on the face lifted by d along its normal.
Vec3 inverse_map(const TriangleMesh& mesh, const Positions& positions, const MappingResult& result);
Vec3 inverse_map(const ClosestPointIndex& index, const MappingResult& result);

/// Surface point of `face` whose atlas coordinate is `u` (affine in the UV triangle).
Vec3 surface_point_at_uv(const TriangleMesh& mesh, const Positions& positions, int face, const Vec2& u);

struct CollisionStats {
    std::size_t samples = 0;
    std::size_t in_range = 0;
    double face_fraction = 0.0;    // of in-range samples
    double edge_fraction = 0.0;    // of in-range samples
    double vertex_fraction = 0.0;  // of in-range samples
    double out_of_range_fraction = 0.0;  // of all samples

    /// Share of in-range samples that hit an edge or vertex.
    double collision_ratio() const { return edge_fraction + vertex_fraction; }
};

CollisionStats collision_ratio(const ClosestPointIndex& index, const Positions& samples, double d_max);

struct SeamSamplePair {
    int seam = -1;
    double alpha = 0.0;
    double h = 0.0;
    UttsPoint a;
    UttsPoint b;
};

struct SeamSampling {
    double epsilon = config::kSeamEpsilon;
    std::pair<double, double> height_range{-config::kSeamHeight, config::kSeamHeight};
};

/// Mirrored samples on both sides of UV seams. Each pair shares the edge
/// parameter α and the height h; atlas coordinates are clamped to [0,1]².
/// The height range is intersected with [-d_max, d_max].
std::vector<SeamSamplePair> seam_sample_pairs(const SeamEdgeList& seams, int count, const SeamSampling& sampling,
                                              double d_max, std::mt19937_64& rng);

}  // namespace avatar
