#pragma once

#include <Eigen/Core>

namespace avatar {

/// Which feature of a triangle holds the closest point.
enum class ElementKind { Face = 0, Edge = 1, Vertex = 2 };

/// Closest point on triangle (a, b, c) to x.
///
/// `corner` is the vertex index (0..2) for the vertex case; `edge` is the
/// local edge (0: ab, 1: bc, 2: ca) for the edge case. Barycentric weights
/// are relative to (a, b, c).
template <typename Scalar>
struct TriangleClosestPoint {
    using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

    ElementKind kind = ElementKind::Face;
    int corner = -1;
    int edge = -1;
    Vec3 point;
    Vec3 barycentric;
    Scalar squared_distance = Scalar(0);
};

/// Voronoi-region walk over the triangle's features (vertices, edges, interior).
template <typename Scalar>
TriangleClosestPoint<Scalar> closest_point_on_triangle(const Eigen::Matrix<Scalar, 3, 1>& x,
                                                       const Eigen::Matrix<Scalar, 3, 1>& a,
                                                       const Eigen::Matrix<Scalar, 3, 1>& b,
                                                       const Eigen::Matrix<Scalar, 3, 1>& c)
{
    using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
    TriangleClosestPoint<Scalar> r;
    auto vertex = [&](int k, const Vec3& p) {
        r.kind = ElementKind::Vertex;
        r.corner = k;
        r.point = p;
        r.barycentric = Vec3::Zero();
        r.barycentric(k) = Scalar(1);
    };
    auto edge = [&](int e, const Vec3& p0, const Vec3& p1, Scalar t) {
        r.kind = ElementKind::Edge;
        r.edge = e;
        r.point = p0 + t * (p1 - p0);
        r.barycentric = Vec3::Zero();
        r.barycentric(e) = Scalar(1) - t;
        r.barycentric((e + 1) % 3) = t;
    };

    const Vec3 ab = b - a, ac = c - a, ax = x - a;
    const Scalar d1 = ab.dot(ax), d2 = ac.dot(ax);
    if (d1 <= Scalar(0) && d2 <= Scalar(0)) {
        vertex(0, a);
    } else {
        const Vec3 bx = x - b;
        const Scalar d3 = ab.dot(bx), d4 = ac.dot(bx);
        const Vec3 cx = x - c;
        const Scalar d5 = ab.dot(cx), d6 = ac.dot(cx);
        const Scalar vc = d1 * d4 - d3 * d2;
        const Scalar vb = d5 * d2 - d1 * d6;
        const Scalar va = d3 * d6 - d5 * d4;
        if (d3 >= Scalar(0) && d4 <= d3) {
            vertex(1, b);
        } else if (d6 >= Scalar(0) && d5 <= d6) {
            vertex(2, c);
        } else if (vc <= Scalar(0) && d1 >= Scalar(0) && d3 <= Scalar(0)) {
            edge(0, a, b, d1 / (d1 - d3));
        } else if (vb <= Scalar(0) && d2 >= Scalar(0) && d6 <= Scalar(0)) {
            edge(2, c, a, Scalar(1) - d2 / (d2 - d6));
        } else if (va <= Scalar(0) && (d4 - d3) >= Scalar(0) && (d5 - d6) >= Scalar(0)) {
            edge(1, b, c, (d4 - d3) / ((d4 - d3) + (d5 - d6)));
        } else {
            const Scalar denom = Scalar(1) / (va + vb + vc);
            const Scalar v = vb * denom, w = vc * denom;
            r.kind = ElementKind::Face;
            r.point = a + v * ab + w * ac;
            r.barycentric = Vec3(Scalar(1) - v - w, v, w);
        }
    }
    r.squared_distance = (x - r.point).squaredNorm();
    return r;
}

}  // namespace avatar
