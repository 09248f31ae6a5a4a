#pragma once

#include "avatar/config.hpp"
#include "avatar/field.hpp"
#include "avatar/image.hpp"
#include "avatar/mesh.hpp"

#include <Eigen/Geometry>

#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace avatar {

// ---------------------------------------------------------------------------
// Camera and rays
// ---------------------------------------------------------------------------

/// Pinhole camera. Camera space looks down +z with x right and y down;
/// pixel (i, j) covers [i, i+1) × [j, j+1) and is sampled at its center.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;
    Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();

    /// Camera at `eye` looking at `target`; `fov_y` in radians, principal
    /// point at the image center.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, int width, int height);

    Vec3 center() const { return world_to_camera.inverse().translation(); }
    /// Image-plane position (pixels) of a world point in front of the camera.
    Vec2 project(const Vec3& world) const;
};

void validate(const Camera& camera);

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();  // unit length

    Vec3 at(double t) const { return origin + t * direction; }
};

/// Rays through the centers of the given pixels.
std::vector<Ray> generate_rays(const Camera& camera, std::span<const Eigen::Vector2i> pixels);
/// Rays through every pixel, row by row.
std::vector<Ray> generate_rays(const Camera& camera);

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

/// Z-buffer result. Depth is the distance along the pixel's unit ray
/// (so it can seed ray samples directly); background pixels hold +∞ and face −1.
struct RasterBuffer {
    int width = 0;
    int height = 0;
    std::vector<double> depth;
    std::vector<int> face;
    std::vector<Vec3> barycentric;  // perspective-correct, per pixel

    bool covered(int pixel) const { return face[pixel] >= 0; }
    Image mask() const;
    Image depth_image() const;
};

/// Tiled software rasterizer with perspective-correct interpolation and the
/// top-left fill rule. Triangles with a vertex behind the near plane are skipped.
RasterBuffer rasterize(const Faces& faces, const Positions& positions, const Camera& camera, double near = 1e-3);
inline RasterBuffer rasterize_depth(const TriangleMesh& mesh, const Positions& positions, const Camera& camera)
{
    return rasterize(mesh.faces, positions, camera);
}

// ---------------------------------------------------------------------------
// Ray samples and volume integration
// ---------------------------------------------------------------------------

struct RaySamples {
    Ray ray;
    std::vector<double> t;  // strictly increasing
    bool foreground = false;

    Vec3 point(std::size_t i) const { return ray.at(t[i]); }
};

using RaySampleBatch = std::vector<RaySamples>;

struct SampleOptions {
    int samples = config::kTrainingSamplesPerRay;
    double d_max = config::kDmaxInitial;
    bool jitter = false;  // stratified offsets inside each interval
    std::uint64_t seed = 0;
};

/// Samples in [t_hit − d_max, t_hit + d_max] for rays with a finite hit depth.
/// Without jitter the samples include both ends, spaced 2·d_max/(n − 1).
RaySampleBatch filter_samples(std::span<const Ray> rays, std::span<const double> hit_depth, const SampleOptions& options);

/// Fallback without a depth map: samples between the ray's entry and exit of
/// `box` inflated by d_max. Rays missing the box get no samples.
RaySampleBatch box_samples(std::span<const Ray> rays, const Eigen::AlignedBox3d& box, const SampleOptions& options);

/// Φ(s) = 1 / (1 + exp(−z·s)).
double logistic_cdf(double s, double z);

/// α_i = max((Φ(s_i) − Φ(s_{i+1})) / Φ(s_i), 0) for consecutive samples;
/// n values give n − 1 alphas. Evaluated in log space so large z stays finite.
std::vector<double> sdf_to_alpha(std::span<const double> sdf, double z);

struct IntegratedRay {
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    double depth = std::numeric_limits<double>::infinity();  // +∞ when opacity is 0
};

/// c = Σ T_i α_i c_i with T_i = Π_{j<i}(1 − α_j); depth = Σ T_i α_i t_i / opacity.
IntegratedRay volume_integrate(std::span<const double> alphas, const Eigen::Ref<const Eigen::MatrixX3d>& colors,
                               std::span<const double> depths);

// ---------------------------------------------------------------------------
// Image rendering
// ---------------------------------------------------------------------------

struct RenderProfile {
    int samples = config::kTrainingSamplesPerRay;
    bool jitter = false;

    static RenderProfile training() { return {config::kTrainingSamplesPerRay, false}; }
    static RenderProfile interactive() { return {config::kInteractiveSamplesPerRay, false}; }
};

struct RenderSettings {
    double z = 1000.0;  // sharpness of Φ
    double d_max = config::kDmaxInitial;
    RenderProfile profile;
    Vec3 flat_color = Vec3::Ones();  // used when the field has no appearance decoder
    std::uint64_t seed = 0;
};

/// Everything one image needs: the posed template (for the depth filter),
/// the field and the camera.
struct Scene {
    TriangleMesh mesh;
    Positions positions;
    SdfField field;
    Camera camera;
    RenderSettings settings;
};

/// Wall-clock milliseconds per pipeline stage plus sample counts.
struct RenderStats {
    double raster_ms = 0.0;
    double map_ms = 0.0;
    double field_ms = 0.0;
    double integrate_ms = 0.0;
    std::size_t foreground_rays = 0;
    std::size_t samples = 0;
    std::size_t out_of_range = 0;  // samples outside the UTTS shell (zero density)
};

struct RenderOutput {
    Image color;    // 3 channels
    Image opacity;  // 1 channel
    Image depth;    // 1 channel, +∞ where opacity is 0
    RenderStats stats;
};

RenderOutput render_image(const Scene& scene);

// ---------------------------------------------------------------------------
// Motion textures and texture editing
// ---------------------------------------------------------------------------

/// Atlas-space maps of the posed template for one frame. Row j of each image
/// holds texels with v = (j + ½)/R.
struct MotionTextureSet {
    int resolution = 0;
    Image position;      // T_p, 3 channels
    Image velocity;      // T_v
    Image acceleration;  // T_a
    Image uv;            // T_u, the texel's own atlas coordinate
    Image normal;        // T_n, unit on covered texels
    Image coverage;      // 1 on covered texels
    double scale = 1.0;  // applied after subtracting the root
};

struct MotionTextureOptions {
    int resolution = config::kMotionTextureResolution;
    double scale = 0.0;  // 0 picks 1 / max |coordinate| of the normalized window
};

/// `frames` holds the posed vertices of the last k ≥ 3 frames (oldest first)
/// and `root` the matching root translations. Every frame is expressed
/// relative to the current frame's root before scaling.
MotionTextureSet bake_motion_textures(const TriangleMesh& mesh, std::span<const Positions> frames,
                                      std::span<const Vec3> root, const MotionTextureOptions& options = {});

/// Alpha-blends an RGBA atlas image, rasterized through the posed template
/// with depth testing, over a rendered color image. Texels are looked up
/// nearest-neighbor so that opaque texels replace the render exactly.
Image composite_texture_edit(const Image& render, const TriangleMesh& mesh, const Positions& positions,
                             const Camera& camera, const Image& edit_texture);

/// Bilinear lookup of an atlas image at (u, v), clamped to the border.
Eigen::VectorXd sample_atlas(const Image& texture, const Vec2& uv);

}  // namespace avatar
