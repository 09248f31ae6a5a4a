#include "avatar/deform.hpp"

#include "avatar/error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace avatar {

using nlohmann::json;

GraphParams GraphParams::identity(int nodes, int vertices)
{
    return {Positions::Zero(nodes, 3), Positions::Zero(nodes, 3), Positions::Zero(vertices, 3)};
}

Mat3 euler_xyz(const Vec3& a)
{
    return (Eigen::AngleAxisd(a.x(), Vec3::UnitX()) * Eigen::AngleAxisd(a.y(), Vec3::UnitY()) *
            Eigen::AngleAxisd(a.z(), Vec3::UnitZ()))
        .toRotationMatrix();
}

namespace {

std::vector<double> dijkstra(const std::vector<std::vector<std::pair<int, double>>>& adjacency, int source)
{
    std::vector<double> dist(adjacency.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[source] = 0.0;
    queue.emplace(0.0, source);
    while (!queue.empty()) {
        const auto [d, v] = queue.top();
        queue.pop();
        if (d > dist[v]) continue;
        for (const auto& [u, w] : adjacency[v]) {
            if (d + w < dist[u]) {
                dist[u] = d + w;
                queue.emplace(dist[u], u);
            }
        }
    }
    return dist;
}

}  // namespace

SkinWeights geodesic_weights(const TriangleMesh& mesh, const std::vector<int>& anchors, int k)
{
    if (k < 1) throw DomainError("need at least one graph influence per vertex");
    if (anchors.empty()) throw DimensionError("embedded graph has no nodes");
    const int n = mesh.vertex_count();
    for (int a : anchors) {
        if (a < 0 || a >= n) throw TopologyError("graph node anchored to missing vertex " + std::to_string(a));
    }

    const auto rings = vertex_neighbors(mesh.faces, n);
    std::vector<std::vector<std::pair<int, double>>> adjacency(n);
    for (int v = 0; v < n; ++v) {
        for (int u : rings[v]) adjacency[v].emplace_back(u, (mesh.vertices.row(v) - mesh.vertices.row(u)).norm());
    }

    const int nodes = static_cast<int>(anchors.size());
    std::vector<std::vector<double>> dist(nodes);
    for (int node = 0; node < nodes; ++node) dist[node] = dijkstra(adjacency, anchors[node]);

    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<std::pair<double, int>> order(nodes);
    for (int v = 0; v < n; ++v) {
        for (int node = 0; node < nodes; ++node) order[node] = {dist[node][v], node};
        std::sort(order.begin(), order.end());
        if (!std::isfinite(order.front().first)) {
            throw TopologyError("vertex " + std::to_string(v) + " is disconnected from every graph node");
        }
        if (order.front().first == 0.0) {
            triplets.emplace_back(v, order.front().second, 1.0);
            continue;
        }
        int kept = 0;
        while (kept < k && kept < nodes && std::isfinite(order[kept].first)) ++kept;
        const double reference = (kept < nodes && std::isfinite(order[kept].first)) ? order[kept].first
                                                                                      : 2.0 * order[kept - 1].first;
        double total = 0.0;
        std::vector<double> w(kept);
        for (int i = 0; i < kept; ++i) {
            const double t = 1.0 - order[i].first / reference;
            w[i] = t * t;
            total += w[i];
        }
        if (!(total > 0.0)) {
            // All kept nodes tie with the reference distance.
            std::fill(w.begin(), w.end(), 1.0);
            total = kept;
        }
        for (int i = 0; i < kept; ++i) {
            if (w[i] > 0.0) triplets.emplace_back(v, order[i].second, w[i] / total);
        }
    }
    SkinWeights weights(n, nodes);
    weights.setFromTriplets(triplets.begin(), triplets.end());
    return weights;
}

void validate(const EmbeddedGraph& graph, int vertex_count)
{
    if (graph.weights.rows() != vertex_count || graph.weights.cols() != graph.node_count()) {
        throw DimensionError("graph weights must be vertices × nodes");
    }
    for (int v = 0; v < vertex_count; ++v) {
        double sum = 0.0;
        for (SkinWeights::InnerIterator it(graph.weights, v); it; ++it) {
            if (it.value() < 0.0) throw DomainError("negative graph weight at vertex " + std::to_string(v));
            sum += it.value();
        }
        if (std::abs(sum - 1.0) > 1e-6) throw DomainError("graph weights of vertex " + std::to_string(v) + " do not sum to 1");
    }
}

Positions embedded_deform(const Positions& rest, const EmbeddedGraph& graph, const GraphParams& params)
{
    const int nodes = graph.node_count();
    if (params.rotations.rows() != nodes || params.translations.rows() != nodes) {
        throw DimensionError("graph params need one rotation and translation per node");
    }
    if (params.displacements.rows() != rest.rows() || graph.weights.rows() != rest.rows()) {
        throw DimensionError("displacements and graph weights need one row per vertex");
    }
    std::vector<Mat3> rotation(nodes);
    for (int k = 0; k < nodes; ++k) rotation[k] = euler_xyz(params.rotations.row(k).transpose());

    Positions out(rest.rows(), 3);
#pragma omp parallel for schedule(static)
    for (Eigen::Index v = 0; v < rest.rows(); ++v) {
        const Vec3 m = rest.row(v).transpose();
        Vec3 y = params.displacements.row(v).transpose();
        for (SkinWeights::InnerIterator it(graph.weights, v); it; ++it) {
            const Eigen::Index k = it.col();
            const Vec3 g = graph.nodes.row(k).transpose();
            y += it.value() * (rotation[k] * (m - g) + g + params.translations.row(k).transpose());
        }
        out.row(v) = y.transpose();
    }
    return out;
}

Positions deformable_model(const TriangleMesh& mesh, const EmbeddedGraph& graph, const GraphParams& params,
                           const Skeleton& skeleton, const SkeletalMotion& motion)
{
    if (!mesh.skin) throw Error("template has no skinning weights");
    const Positions canonical = embedded_deform(mesh.vertices, graph, params);
    return dq_skin(canonical, *mesh.skin, forward_kinematics(skeleton, motion.current()));
}

EmbeddedGraph graph_from_json(const json& j, const TriangleMesh& mesh)
{
    EmbeddedGraph g;
    g.anchors = j.at("anchors").get<std::vector<int>>();
    if (j.contains("nodes")) {
        g.nodes = detail::rows3(j["nodes"]);
    } else {
        g.nodes.resize(static_cast<Eigen::Index>(g.anchors.size()), 3);
        for (std::size_t i = 0; i < g.anchors.size(); ++i) {
            g.nodes.row(static_cast<Eigen::Index>(i)) = mesh.vertices.row(g.anchors[i]);
        }
    }
    if (g.nodes.rows() != static_cast<Eigen::Index>(g.anchors.size())) throw DimensionError("one anchor per graph node");
    for (const auto& e : j.value("edges", json::array())) g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    if (j.contains("weights")) {
        const auto& indices = j["weights"].at("indices");
        const auto& values = j["weights"].at("values");
        std::vector<Eigen::Triplet<double>> triplets;
        for (std::size_t v = 0; v < indices.size(); ++v) {
            for (std::size_t i = 0; i < indices[v].size(); ++i) {
                triplets.emplace_back(static_cast<int>(v), indices[v][i].get<int>(), values[v][i].get<double>());
            }
        }
        g.weights.resize(mesh.vertex_count(), g.node_count());
        g.weights.setFromTriplets(triplets.begin(), triplets.end());
    } else {
        g.weights = geodesic_weights(mesh, g.anchors, j.value("k", kDefaultGraphInfluences));
    }
    validate(g, mesh.vertex_count());
    return g;
}

json to_json(const EmbeddedGraph& g)
{
    json edges = json::array();
    for (const auto& [a, b] : g.edges) edges.push_back({a, b});
    json indices = json::array(), values = json::array();
    for (int v = 0; v < g.weights.rows(); ++v) {
        json iv = json::array(), vv = json::array();
        for (SkinWeights::InnerIterator it(g.weights, v); it; ++it) {
            iv.push_back(it.col());
            vv.push_back(it.value());
        }
        indices.push_back(iv);
        values.push_back(vv);
    }
    return {{"nodes", detail::to_json(g.nodes)},
            {"anchors", g.anchors},
            {"edges", edges},
            {"weights", {{"indices", indices}, {"values", values}}}};
}

GraphParams params_from_json(const json& j, int nodes, int vertices)
{
    GraphParams p = GraphParams::identity(nodes, vertices);
    if (j.contains("rotations")) p.rotations = detail::rows3(j["rotations"]);
    if (j.contains("translations")) p.translations = detail::rows3(j["translations"]);
    if (j.contains("displacements")) p.displacements = detail::rows3(j["displacements"]);
    if (p.rotations.rows() != nodes || p.translations.rows() != nodes || p.displacements.rows() != vertices) {
        throw DimensionError("graph params do not match the graph and template sizes");
    }
    return p;
}

json to_json(const GraphParams& p)
{
    return {{"rotations", detail::to_json(p.rotations)},
            {"translations", detail::to_json(p.translations)},
            {"displacements", detail::to_json(p.displacements)}};
}

}  // namespace avatar
