#include "avatar/utts.hpp"

#include "avatar/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace avatar {

ClosestPointIndex::ClosestPointIndex(const TriangleMesh& mesh, const Positions& positions, int leaf_size)
    : faces_(mesh.faces), positions_(positions), uv_(mesh.uv)
{
    require_vertex_array(mesh, positions);
    if (mesh.face_count() == 0) throw DimensionError("cannot index a mesh without faces");
    const FaceGeometry geo = face_geometry(mesh.faces, positions);
    face_normals_ = geo.normals;
    face_areas_ = geo.areas;
    vertex_normals_ = angle_weighted_normals(mesh.faces, positions);

    // Edge pseudo-normal: area-weighted mean of the adjacent face normals.
    const int nf = face_count();
    edge_normals_.resize(3 * nf, 3);
    std::vector<std::pair<std::uint64_t, int>> keyed;
    keyed.reserve(3 * nf);
    for (int f = 0; f < nf; ++f) {
        for (int e = 0; e < 3; ++e) {
            std::uint64_t a = static_cast<std::uint32_t>(faces_(f, e)), b = static_cast<std::uint32_t>(faces_(f, (e + 1) % 3));
            if (a > b) std::swap(a, b);
            keyed.emplace_back((a << 32) | b, 3 * f + e);
        }
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < keyed.size();) {
        std::size_t j = i;
        Vec3 sum = Vec3::Zero();
        while (j < keyed.size() && keyed[j].first == keyed[i].first) {
            const int f = keyed[j].second / 3;
            sum += face_areas_(f) * face_normals_.row(f).transpose();
            ++j;
        }
        const double norm = sum.norm();
        for (std::size_t k = i; k < j; ++k) {
            const int f = keyed[k].second / 3;
            const Vec3 n = norm > 0.0 ? Vec3(sum / norm) : Vec3(face_normals_.row(f).transpose());
            edge_normals_.row(keyed[k].second) = n.transpose();
        }
        i = j;
    }

    std::vector<Vec3> centroids(nf);
    for (int f = 0; f < nf; ++f) {
        centroids[f] = (positions_.row(faces_(f, 0)) + positions_.row(faces_(f, 1)) + positions_.row(faces_(f, 2))) / 3.0;
    }
    order_.resize(nf);
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * nf / std::max(1, leaf_size) + 2);
    build(0, nf, std::max(1, leaf_size), centroids);
}

int ClosestPointIndex::build(int begin, int end, int leaf_size, const std::vector<Vec3>& centroids)
{
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Eigen::AlignedBox3d box, centroid_box;
    for (int i = begin; i < end; ++i) {
        const int f = order_[i];
        for (int k = 0; k < 3; ++k) box.extend(positions_.row(faces_(f, k)).transpose());
        centroid_box.extend(centroids[f]);
    }
    nodes_[index].box = box;
    if (end - begin <= leaf_size) {
        nodes_[index].first = begin;
        nodes_[index].count = end - begin;
        return index;
    }
    int axis;
    centroid_box.sizes().maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroids[a](axis) < centroids[b](axis); });
    build(begin, mid, leaf_size, centroids);
    const int right = build(mid, end, leaf_size, centroids);
    nodes_[index].first = right;
    nodes_[index].count = 0;
    return index;
}

ClosestPointIndex::Candidate ClosestPointIndex::evaluate(int face, const Vec3& x) const
{
    const Vec3 p[3] = {positions_.row(faces_(face, 0)), positions_.row(faces_(face, 1)), positions_.row(faces_(face, 2))};
    const auto r = closest_point_on_triangle<double>(x, p[0], p[1], p[2]);
    if (r.kind == ElementKind::Face) return {r.squared_distance, ElementKind::Face, -1};
    if (r.kind == ElementKind::Vertex) return {(x - p[r.corner]).squaredNorm(), ElementKind::Vertex, r.corner};

    // Evaluate shared edges in global vertex order so both faces agree bitwise.
    int c0 = r.edge, c1 = (r.edge + 1) % 3;
    if (faces_(face, c0) > faces_(face, c1)) std::swap(c0, c1);
    const Vec3 e = p[c1] - p[c0];
    const double t = e.dot(x - p[c0]) / e.squaredNorm();
    if (t <= 0.0) return {(x - p[c0]).squaredNorm(), ElementKind::Vertex, c0};
    if (t >= 1.0) return {(x - p[c1]).squaredNorm(), ElementKind::Vertex, c1};
    return {(x - (p[c0] + t * e)).squaredNorm(), ElementKind::Edge, r.edge};
}

MappingResult ClosestPointIndex::finish(int face, const Candidate& c, const Vec3& x) const
{
    MappingResult m;
    m.face = face;
    m.kind = c.kind;
    const int g[3] = {faces_(face, 0), faces_(face, 1), faces_(face, 2)};
    const Vec3 va = positions_.row(g[0]), vb = positions_.row(g[1]), vc = positions_.row(g[2]);
    const Vec2 ua = uv_.row(3 * face), ub = uv_.row(3 * face + 1), uc = uv_.row(3 * face + 2);

    switch (c.kind) {
    case ElementKind::Face: {
        const Vec3 n = face_normals_.row(face);
        const Vec3 p = x - n.dot(x - va) * n;
        const double area2 = (vc - vb).cross(va - vb).norm();
        m.lambda_a = (vc - vb).cross(p - vb).norm() / area2;
        m.lambda_b = (va - vc).cross(p - vc).norm() / area2;
        m.closest = p;
        m.utts.u = m.lambda_a * ua + m.lambda_b * ub + (1.0 - m.lambda_a - m.lambda_b) * uc;
        break;
    }
    case ElementKind::Edge: {
        int c0 = c.local, c1 = (c.local + 1) % 3;
        if (g[c0] > g[c1]) std::swap(c0, c1);
        const Vec3 a = positions_.row(g[c0]), b = positions_.row(g[c1]);
        const double lambda = (b - a).dot(x - a) / (b - a).squaredNorm();
        m.vertex_a = g[c0];
        m.vertex_b = g[c1];
        m.lambda = lambda;
        m.closest = a + lambda * (b - a);
        m.utts.u = (1.0 - lambda) * uv_.row(3 * face + c0).transpose() + lambda * uv_.row(3 * face + c1).transpose();
        break;
    }
    case ElementKind::Vertex:
        m.vertex_a = g[c.local];
        m.closest = positions_.row(g[c.local]);
        m.utts.u = uv_.row(3 * face + c.local).transpose();
        break;
    }
    m.distance = (x - m.closest).norm();
    m.signed_distance = m.distance;
    m.utts.d = m.distance;
    m.collision_prone = c.kind != ElementKind::Face;
    return m;
}

MappingResult ClosestPointIndex::closest_point(const Vec3& x, int hint_face) const
{
    int best_face = -1;
    Candidate best{std::numeric_limits<double>::infinity(), ElementKind::Face, -1};
    if (hint_face >= 0 && hint_face < face_count()) {
        best = evaluate(hint_face, x);
        best_face = hint_face;
    }

    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.box.squaredExteriorDistance(x) > best.squared_distance) continue;
        if (node.count > 0) {
            for (int i = node.first; i < node.first + node.count; ++i) {
                const int f = order_[i];
                const Candidate c = evaluate(f, x);
                if (c.squared_distance < best.squared_distance ||
                    (c.squared_distance == best.squared_distance && f < best_face)) {
                    best = c;
                    best_face = f;
                }
            }
            continue;
        }
        const int left = static_cast<int>(&node - nodes_.data()) + 1;
        const int right = node.first;
        const double dl = nodes_[left].box.squaredExteriorDistance(x);
        const double dr = nodes_[right].box.squaredExteriorDistance(x);
        if (dl <= dr) {
            stack[top++] = right;
            stack[top++] = left;
        } else {
            stack[top++] = left;
            stack[top++] = right;
        }
    }
    return finish(best_face, best, x);
}

Vec3 ClosestPointIndex::pseudo_normal(const MappingResult& r) const
{
    switch (r.kind) {
    case ElementKind::Face: return face_normals_.row(r.face).transpose();
    case ElementKind::Edge: {
        for (int e = 0; e < 3; ++e) {
            const int a = faces_(r.face, e), b = faces_(r.face, (e + 1) % 3);
            if (std::min(a, b) == r.vertex_a && std::max(a, b) == r.vertex_b) return edge_normal(r.face, e);
        }
        return face_normals_.row(r.face).transpose();
    }
    case ElementKind::Vertex: return vertex_normals_.row(r.vertex_a).transpose();
    }
    return Vec3::Zero();
}

double ClosestPointIndex::signed_distance(const Vec3& x) const
{
    const MappingResult r = closest_point(x);
    return pseudo_normal(r).dot(x - r.closest) < 0.0 ? -r.distance : r.distance;
}

MappingResult closest_point(const ClosestPointIndex& index, const Vec3& x) { return index.closest_point(x); }

MappingResult map_to_utts(const ClosestPointIndex& index, const Vec3& x, double d_max, int hint_face)
{
    if (!(d_max > 0.0)) throw DomainError("d_max must be positive");
    MappingResult r = index.closest_point(x, hint_face);
    const double sign = index.pseudo_normal(r).dot(x - r.closest) < 0.0 ? -1.0 : 1.0;
    r.signed_distance = sign * r.distance;
    r.out_of_range = r.distance > d_max;
    r.utts.d = std::clamp(r.signed_distance, -d_max, d_max);
    r.utts.d_max = d_max;
    return r;
}

std::vector<MappingResult> map_to_utts_batch(const ClosestPointIndex& index, const Positions& points, double d_max)
{
    if (!(d_max > 0.0)) throw DomainError("d_max must be positive");
    const Eigen::Index n = points.rows();
    std::vector<MappingResult> out(static_cast<std::size_t>(n));
#pragma omp parallel
    {
        int hint = -1;
#pragma omp for schedule(static)
        for (Eigen::Index i = 0; i < n; ++i) {
            out[i] = map_to_utts(index, points.row(i).transpose(), d_max, hint);
            hint = out[i].face;
        }
    }
    return out;
}

Vec3 inverse_map(const TriangleMesh& mesh, const Positions& positions, const MappingResult& r)
{
    if (r.kind != ElementKind::Face) throw DomainError("inverse_map is only defined for the face case");
    require_vertex_array(mesh, positions);
    const Vec3 va = positions.row(mesh.faces(r.face, 0)), vb = positions.row(mesh.faces(r.face, 1)),
               vc = positions.row(mesh.faces(r.face, 2));
    const Vec3 n = (vb - va).cross(vc - va).normalized();
    return r.lambda_a * va + r.lambda_b * vb + (1.0 - r.lambda_a - r.lambda_b) * vc + r.signed_distance * n;
}

Vec3 inverse_map(const ClosestPointIndex& index, const MappingResult& r)
{
    if (r.kind != ElementKind::Face) throw DomainError("inverse_map is only defined for the face case");
    const Positions& p = index.positions();
    const Faces& f = index.faces();
    const Vec3 va = p.row(f(r.face, 0)), vb = p.row(f(r.face, 1)), vc = p.row(f(r.face, 2));
    return r.lambda_a * va + r.lambda_b * vb + (1.0 - r.lambda_a - r.lambda_b) * vc +
           r.signed_distance * index.face_normals().row(r.face).transpose();
}

Vec3 surface_point_at_uv(const TriangleMesh& mesh, const Positions& positions, int face, const Vec2& u)
{
    const Vec2 ua = mesh.corner_uv(face, 0), ub = mesh.corner_uv(face, 1), uc = mesh.corner_uv(face, 2);
    Eigen::Matrix2d m;
    m.col(0) = ub - ua;
    m.col(1) = uc - ua;
    const Vec2 w = m.partialPivLu().solve(u - ua);
    const Vec3 va = positions.row(mesh.faces(face, 0)), vb = positions.row(mesh.faces(face, 1)),
               vc = positions.row(mesh.faces(face, 2));
    return va + w.x() * (vb - va) + w.y() * (vc - va);
}

CollisionStats collision_ratio(const ClosestPointIndex& index, const Positions& samples, double d_max)
{
    if (samples.rows() == 0) throw DimensionError("collision_ratio needs at least one sample");
    const auto results = map_to_utts_batch(index, samples, d_max);
    CollisionStats s;
    s.samples = results.size();
    std::size_t counts[3] = {0, 0, 0};
    std::size_t out = 0;
    for (const auto& r : results) {
        if (r.out_of_range) {
            ++out;
            continue;
        }
        ++counts[static_cast<int>(r.kind)];
    }
    s.in_range = s.samples - out;
    s.out_of_range_fraction = static_cast<double>(out) / static_cast<double>(s.samples);
    if (s.in_range > 0) {
        const double total = static_cast<double>(s.in_range);
        s.face_fraction = counts[0] / total;
        s.edge_fraction = counts[1] / total;
        s.vertex_fraction = counts[2] / total;
    }
    return s;
}

std::vector<SeamSamplePair> seam_sample_pairs(const SeamEdgeList& seams, int count, const SeamSampling& sampling,
                                              double d_max, std::mt19937_64& rng)
{
    if (seams.empty()) throw DimensionError("no seam edges to sample");
    if (count < 0) throw DomainError("negative seam sample count");
    if (sampling.epsilon < 0.0) throw DomainError("seam offset must be non-negative");
    if (!(d_max > 0.0)) throw DomainError("d_max must be positive");
    const double h_lo = std::max(sampling.height_range.first, -d_max);
    const double h_hi = std::min(sampling.height_range.second, d_max);
    if (h_lo > h_hi) throw DomainError("seam height range does not intersect [-d_max, d_max]");

    std::uniform_int_distribution<int> pick(0, static_cast<int>(seams.size()) - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto clamp01 = [](Vec2 u) { return Vec2(u.cwiseMax(0.0).cwiseMin(1.0)); };

    std::vector<SeamSamplePair> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SeamSamplePair p;
        p.seam = pick(rng);
        p.alpha = unit(rng);
        p.h = h_lo + (h_hi - h_lo) * unit(rng);
        const SeamEdge& s = seams[p.seam];
        p.a.u = clamp01(s.start_a + p.alpha * s.edge_a + sampling.epsilon * s.normal_a);
        p.b.u = clamp01(s.start_b + p.alpha * s.edge_b + sampling.epsilon * s.normal_b);
        p.a.d = p.b.d = p.h;
        p.a.d_max = p.b.d_max = d_max;
        pairs.push_back(p);
    }
    return pairs;
}

}  // namespace avatar
