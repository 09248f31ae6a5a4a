#pragma once

#include "avatar/mesh.hpp"
#include "avatar/skeleton.hpp"

#include <filesystem>
#include <utility>
#include <vector>

#include <json.hpp>

namespace avatar {

/// Coarse node graph that drives the template through per-vertex node weights.
struct EmbeddedGraph {
    Positions nodes;                         // rest positions G_k
    std::vector<int> anchors;                // mesh vertex nearest to each node
    std::vector<std::pair<int, int>> edges;  // node connectivity
    SkinWeights weights;                     // N × K_nodes, at most `max_influences` nonzeros per row

    int node_count() const { return static_cast<int>(nodes.rows()); }
};

/// Per-node Euler angles (XYZ, radians) and translations, plus per-vertex displacements.
struct GraphParams {
    Positions rotations;
    Positions translations;
    Positions displacements;

    static GraphParams identity(int nodes, int vertices);
};

constexpr int kDefaultGraphInfluences = 4;

/// Rotation for intrinsic XYZ Euler angles: Rx(a) · Ry(b) · Rz(c).
Mat3 euler_xyz(const Vec3& angles);

/// Geodesic skinning of vertices to graph nodes.
///
/// Distances are Dijkstra over the edge-length graph. Each vertex keeps its
/// `k` nearest nodes with weight (1 − d/d_ref)², normalized. d_ref is the
/// distance to the (k+1)-th node, or twice the largest kept distance when
/// fewer than k+1 nodes are reachable. A vertex that is itself an anchor is
/// bound to that node alone.
SkinWeights geodesic_weights(const TriangleMesh& mesh, const std::vector<int>& anchors, int k = kDefaultGraphInfluences);

void validate(const EmbeddedGraph& graph, int vertex_count);

Positions embedded_deform(const Positions& rest, const EmbeddedGraph& graph, const GraphParams& params);

/// Full posed model: skinning of the embedded-deformed template at the
/// window's current pose.
Positions deformable_model(const TriangleMesh& mesh, const EmbeddedGraph& graph, const GraphParams& params,
                           const Skeleton& skeleton, const SkeletalMotion& motion);

EmbeddedGraph graph_from_json(const nlohmann::json& json, const TriangleMesh& mesh);
nlohmann::json to_json(const EmbeddedGraph& graph);
GraphParams params_from_json(const nlohmann::json& json, int nodes, int vertices);
nlohmann::json to_json(const GraphParams& params);

}  // namespace avatar
