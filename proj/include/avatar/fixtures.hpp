#pragma once

#include "avatar/deform.hpp"
#include "avatar/field.hpp"
#include "avatar/mesh.hpp"
#include "avatar/skeleton.hpp"

#include <random>

namespace avatar::fixtures {

/// Icosahedron refined `level` times and projected onto the sphere.
/// The atlas gives each of the 20 base faces its own chart, so the UV map
/// is injective; face count is 20·4^level.
TriangleMesh icosphere(int level, double radius = 1.0);

/// Open cylinder along +y with its atlas cut along the generator at angle 0.
/// `segments` around, `rings` along the axis; the cut carries `rings` seam edges.
TriangleMesh cylinder(double radius, double height, int segments, int rings);

/// The cylinder bent along a circular arc and given a lobed cross-section;
/// a generic shape with concave and convex regions for the collision study.
TriangleMesh deformed_cylinder(int segments = 24, int rings = 16);

/// UV sphere whose northern and southern hemispheres occupy separate disk
/// charts; every seam edge lies on the equator.
TriangleMesh two_chart_sphere(int segments, int rings_per_hemisphere);

/// Planar grid in z = 0 with one chart; nx × ny quads of size `spacing`.
TriangleMesh planar_grid(int nx, int ny, double spacing);

/// Planar grid of equilateral triangles (rows offset by half an edge).
TriangleMesh equilateral_grid(int nx, int ny, double edge);

/// Two triangles sharing the edge along the y axis; the faces meet at the
/// dihedral angle `theta` (π = flat).
TriangleMesh tent(double theta);

/// Axis-aligned closed cube of half-extent `half`, outward winding.
TriangleMesh cube(double half);

/// Random small closed mesh: icosphere level 1 with vertices jittered radially.
TriangleMesh jittered_sphere(std::mt19937_64& rng, double jitter = 0.05, int level = 1);

/// Skinned single-leg character: closed tube from pelvis to ankle driven by
/// root (3 translations, 1 yaw), hip (2), knee (1) and ankle (1) DoFs.
struct LegAvatar {
    TriangleMesh mesh;  // carries skinning weights
    Skeleton skeleton;
    EmbeddedGraph graph;
    MotionSequence motion;
};

LegAvatar leg_avatar(int segments = 24, int rings = 24, int frames = 50);

/// Sizes for small decoded fields used in tests and demos.
struct DecodedFieldShape {
    int resolution = 8;
    int channels = 4;
    int width = 32;
    int hidden_layers = 2;
    int shape_code = 4;
    int motion_code = 4;
    EncodingConfig encoding{2, 2};
    bool color = true;
};

/// Decoded field with random tri-plane, decoder weights and motion code.
DecodedField random_decoded_field(std::shared_ptr<const ClosestPointIndex> mapping, double d_max,
                                  const DecodedFieldShape& shape, std::mt19937_64& rng);

/// Decoded field whose SDF is the signed height d plus `noise` times a random
/// smooth perturbation. The geometry decoder carries d through its softplus
/// layers as the pair softplus(z) − softplus(−z) = z, so the zero set follows
/// the template when noise is small.
DecodedField height_field(std::shared_ptr<const ClosestPointIndex> mapping, double d_max, double noise,
                          const DecodedFieldShape& shape, std::mt19937_64& rng);

/// Area-uniform surface samples lifted along their face normal by heights
/// drawn uniformly from [h_lo, h_hi]. `faces` receives the source face of each sample.
Positions lifted_samples(const TriangleMesh& mesh, std::mt19937_64& rng, int n, double h_lo, double h_hi,
                         std::vector<int>* faces = nullptr);

/// Index of the named DoF, or -1.
int dof_index(const Skeleton& skeleton, const std::string& name);

}  // namespace avatar::fixtures
