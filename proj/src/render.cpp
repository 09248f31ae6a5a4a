#include "avatar/render.hpp"

#include "avatar/error.hpp"
#include "avatar/utts.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace avatar {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double edge_function(const Vec2& a, const Vec2& b, const Vec2& p)
{
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// With y pointing down and the triangle oriented so that interior points
/// have positive edge functions, top edges run in +x and left edges in −y.
bool top_left(const Vec2& a, const Vec2& b)
{
    const Vec2 d = b - a;
    return d.y() < 0.0 || (d.y() == 0.0 && d.x() > 0.0);
}

/// Visits every pixel center (x + ½, y + ½) inside the screen triangle,
/// restricted to [x0, x1) × [y0, y1). Pixels on a shared edge go to exactly
/// one of the two triangles. `visit(x, y, barycentric)` receives weights in
/// the caller's vertex order.
template <typename Visit>
void scan_triangle(Vec2 s0, Vec2 s1, Vec2 s2, int x0, int x1, int y0, int y1, Visit&& visit)
{
    double area = edge_function(s0, s1, s2);
    if (area == 0.0 || !std::isfinite(area)) return;
    bool swapped = false;
    if (area < 0.0) {
        std::swap(s1, s2);
        area = -area;
        swapped = true;
    }
    const double min_x = std::min({s0.x(), s1.x(), s2.x()}), max_x = std::max({s0.x(), s1.x(), s2.x()});
    const double min_y = std::min({s0.y(), s1.y(), s2.y()}), max_y = std::max({s0.y(), s1.y(), s2.y()});
    const int px0 = std::max(x0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int px1 = std::min(x1, static_cast<int>(std::floor(max_x - 0.5)) + 1);
    const int py0 = std::max(y0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int py1 = std::min(y1, static_cast<int>(std::floor(max_y - 0.5)) + 1);
    const bool tl0 = top_left(s1, s2), tl1 = top_left(s2, s0), tl2 = top_left(s0, s1);
    auto inside = [](double w, bool tl) { return w > 0.0 || (w == 0.0 && tl); };
    for (int y = py0; y < py1; ++y) {
        for (int x = px0; x < px1; ++x) {
            const Vec2 p(x + 0.5, y + 0.5);
            const double w0 = edge_function(s1, s2, p), w1 = edge_function(s2, s0, p), w2 = edge_function(s0, s1, p);
            if (!inside(w0, tl0) || !inside(w1, tl1) || !inside(w2, tl2)) continue;
            Vec3 b(w0 / area, w1 / area, w2 / area);
            if (swapped) std::swap(b(1), b(2));
            visit(x, y, b);
        }
    }
}

constexpr int kTile = 16;

void check_samples(const SampleOptions& options)
{
    if (options.samples < 2) throw DomainError("at least two samples per ray are required");
    if (!(options.d_max > 0.0)) throw DomainError("d_max must be positive");
}

std::vector<double> spaced(double t0, double t1, const SampleOptions& options, std::size_t ray)
{
    const int n = options.samples;
    std::vector<double> t(n);
    if (options.jitter) {
        std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ULL + ray);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double h = (t1 - t0) / n;
        for (int k = 0; k < n; ++k) t[k] = t0 + (k + unit(rng)) * h;
    } else {
        const double h = (t1 - t0) / (n - 1);
        for (int k = 0; k < n; ++k) t[k] = t0 + k * h;
        t[n - 1] = t1;
    }
    return t;
}

/// log Φ for Φ the logistic sigmoid, without overflow.
double log_sigmoid(double x)
{
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

// ---------------------------------------------------------------------------
// Camera
// ---------------------------------------------------------------------------

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y, int width, int height)
{
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up);
    if (!(right.norm() > 1e-12)) throw DomainError("look_at: up vector is parallel to the viewing direction");
    const Vec3 x = right.normalized();
    const Vec3 y = forward.cross(x);
    Mat3 camera_to_world;
    camera_to_world << x, y, forward;
    Camera c;
    c.width = width;
    c.height = height;
    c.fy = 0.5 * height / std::tan(0.5 * fov_y);
    c.fx = c.fy;
    c.cx = 0.5 * width;
    c.cy = 0.5 * height;
    c.world_to_camera.linear() = camera_to_world.transpose();
    c.world_to_camera.translation() = -(camera_to_world.transpose() * eye);
    validate(c);
    return c;
}

Vec2 Camera::project(const Vec3& world) const
{
    const Vec3 p = world_to_camera * world;
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

void validate(const Camera& c)
{
    if (!(c.fx > 0.0) || !(c.fy > 0.0)) throw DomainError("camera focal lengths must be positive");
    if (c.width < 1 || c.height < 1) throw DomainError("camera image size must be at least 1×1");
}

std::vector<Ray> generate_rays(const Camera& camera, std::span<const Eigen::Vector2i> pixels)
{
    validate(camera);
    const Mat3 to_world = camera.world_to_camera.linear().transpose();
    const Vec3 origin = camera.center();
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (const Eigen::Vector2i& px : pixels) {
        if (px.x() < 0 || px.y() < 0 || px.x() >= camera.width || px.y() >= camera.height) {
            throw DomainError("pixel (" + std::to_string(px.x()) + ", " + std::to_string(px.y()) +
                              ") is outside the image");
        }
        const Vec3 d((px.x() + 0.5 - camera.cx) / camera.fx, (px.y() + 0.5 - camera.cy) / camera.fy, 1.0);
        rays.push_back({origin, (to_world * d).normalized()});
    }
    return rays;
}

std::vector<Ray> generate_rays(const Camera& camera)
{
    std::vector<Eigen::Vector2i> pixels;
    pixels.reserve(static_cast<std::size_t>(camera.width) * camera.height);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) pixels.emplace_back(x, y);
    }
    return generate_rays(camera, pixels);
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

Image RasterBuffer::mask() const
{
    Image m(width, height, 1);
    for (std::size_t i = 0; i < face.size(); ++i) m.data(static_cast<Eigen::Index>(i), 0) = face[i] >= 0 ? 1.0 : 0.0;
    return m;
}

Image RasterBuffer::depth_image() const
{
    Image d(width, height, 1);
    for (std::size_t i = 0; i < depth.size(); ++i) d.data(static_cast<Eigen::Index>(i), 0) = depth[i];
    return d;
}

RasterBuffer rasterize(const Faces& faces, const Positions& positions, const Camera& camera, double near)
{
    validate(camera);
    const int W = camera.width, H = camera.height;
    RasterBuffer out;
    out.width = W;
    out.height = H;
    out.depth.assign(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());
    out.face.assign(out.depth.size(), -1);
    out.barycentric.assign(out.depth.size(), Vec3::Zero());

    const Eigen::Index N = positions.rows();
    std::vector<Vec3> cam(N);
    std::vector<Vec2> screen(N);
    for (Eigen::Index v = 0; v < N; ++v) {
        cam[v] = camera.world_to_camera * Vec3(positions.row(v).transpose());
        screen[v] = Vec2(camera.fx * cam[v].x() / cam[v].z() + camera.cx, camera.fy * cam[v].y() / cam[v].z() + camera.cy);
    }

    // Bin faces into screen tiles, keeping face order inside each bin.
    const int tiles_x = (W + kTile - 1) / kTile, tiles_y = (H + kTile - 1) / kTile;
    std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (int f = 0; f < faces.rows(); ++f) {
        const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
        if (cam[a].z() < near || cam[b].z() < near || cam[c].z() < near) continue;
        const double min_x = std::min({screen[a].x(), screen[b].x(), screen[c].x()});
        const double max_x = std::max({screen[a].x(), screen[b].x(), screen[c].x()});
        const double min_y = std::min({screen[a].y(), screen[b].y(), screen[c].y()});
        const double max_y = std::max({screen[a].y(), screen[b].y(), screen[c].y()});
        if (max_x < 0.0 || max_y < 0.0 || min_x > W || min_y > H) continue;
        const int tx0 = std::clamp(static_cast<int>(min_x) / kTile, 0, tiles_x - 1);
        const int tx1 = std::clamp(static_cast<int>(max_x) / kTile, 0, tiles_x - 1);
        const int ty0 = std::clamp(static_cast<int>(min_y) / kTile, 0, tiles_y - 1);
        const int ty1 = std::clamp(static_cast<int>(max_y) / kTile, 0, tiles_y - 1);
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(f);
        }
    }

#pragma omp parallel for schedule(dynamic)
    for (int tile = 0; tile < tiles_x * tiles_y; ++tile) {
        const int tx = tile % tiles_x, ty = tile / tiles_x;
        const int x0 = tx * kTile, y0 = ty * kTile;
        const int x1 = std::min(W, x0 + kTile), y1 = std::min(H, y0 + kTile);
        for (int f : bins[tile]) {
            const int v[3] = {faces(f, 0), faces(f, 1), faces(f, 2)};
            const Vec3 inv_z(1.0 / cam[v[0]].z(), 1.0 / cam[v[1]].z(), 1.0 / cam[v[2]].z());
            scan_triangle(screen[v[0]], screen[v[1]], screen[v[2]], x0, x1, y0, y1, [&](int x, int y, const Vec3& b) {
                const Vec3 q = b.cwiseProduct(inv_z);
                const double z = 1.0 / q.sum();
                const Vec3 ray((x + 0.5 - camera.cx) / camera.fx, (y + 0.5 - camera.cy) / camera.fy, 1.0);
                const double t = z * ray.norm();
                const std::size_t i = static_cast<std::size_t>(y) * W + x;
                if (t < out.depth[i]) {
                    out.depth[i] = t;
                    out.face[i] = f;
                    out.barycentric[i] = q * z;
                }
            });
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Samples and integration
// ---------------------------------------------------------------------------

RaySampleBatch filter_samples(std::span<const Ray> rays, std::span<const double> hit_depth, const SampleOptions& options)
{
    check_samples(options);
    if (rays.size() != hit_depth.size()) throw DimensionError("one hit depth per ray is required");
    RaySampleBatch batch(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) {
        batch[i].ray = rays[i];
        if (!std::isfinite(hit_depth[i])) continue;
        batch[i].foreground = true;
        const double t0 = std::max(hit_depth[i] - options.d_max, 0.0);
        batch[i].t = spaced(t0, hit_depth[i] + options.d_max, options, i);
    }
    return batch;
}

RaySampleBatch box_samples(std::span<const Ray> rays, const Eigen::AlignedBox3d& box, const SampleOptions& options)
{
    check_samples(options);
    const Vec3 lo = box.min().array() - options.d_max, hi = box.max().array() + options.d_max;
    RaySampleBatch batch(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) {
        const Ray& r = rays[i];
        batch[i].ray = r;
        double t_near = 0.0, t_far = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 3; ++k) {
            const double inv = 1.0 / r.direction(k);
            double a = (lo(k) - r.origin(k)) * inv, b = (hi(k) - r.origin(k)) * inv;
            if (std::isnan(a) || std::isnan(b)) {
                // Parallel to the slab and on its boundary plane.
                a = -std::numeric_limits<double>::infinity();
                b = std::numeric_limits<double>::infinity();
            }
            if (a > b) std::swap(a, b);
            t_near = std::max(t_near, a);
            t_far = std::min(t_far, b);
        }
        if (!(t_far > t_near)) continue;
        batch[i].foreground = true;
        batch[i].t = spaced(t_near, t_far, options, i);
    }
    return batch;
}

double logistic_cdf(double s, double z)
{
    return std::exp(log_sigmoid(z * s));
}

std::vector<double> sdf_to_alpha(std::span<const double> sdf, double z)
{
    if (sdf.size() < 2) throw DomainError("sdf_to_alpha needs at least two samples");
    if (!(z > 0.0)) throw DomainError("sharpness z must be positive");
    std::vector<double> alpha(sdf.size() - 1);
    double log_prev = log_sigmoid(z * sdf[0]);
    for (std::size_t i = 0; i + 1 < sdf.size(); ++i) {
        const double log_next = log_sigmoid(z * sdf[i + 1]);
        alpha[i] = std::clamp(-std::expm1(log_next - log_prev), 0.0, 1.0);
        log_prev = log_next;
    }
    return alpha;
}

IntegratedRay volume_integrate(std::span<const double> alphas, const Eigen::Ref<const Eigen::MatrixX3d>& colors,
                               std::span<const double> depths)
{
    if (static_cast<std::size_t>(colors.rows()) != alphas.size() || depths.size() != alphas.size()) {
        throw DimensionError("volume_integrate: alphas, colors and depths must have equal lengths");
    }
    IntegratedRay out;
    double transmittance = 1.0, depth_sum = 0.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const double w = transmittance * alphas[i];
        out.color += w * colors.row(static_cast<Eigen::Index>(i)).transpose();
        out.opacity += w;
        depth_sum += w * depths[i];
        transmittance *= 1.0 - alphas[i];
    }
    if (out.opacity > 0.0) out.depth = depth_sum / out.opacity;
    return out;
}

// ---------------------------------------------------------------------------
// render_image
// ---------------------------------------------------------------------------

RenderOutput render_image(const Scene& scene)
{
    const Camera& camera = scene.camera;
    const RenderSettings& settings = scene.settings;
    validate(camera);
    if (!(settings.z > 0.0)) throw DomainError("sharpness z must be positive");
    require_vertex_array(scene.mesh, scene.positions);

    RenderOutput out;
    out.color = Image(camera.width, camera.height, 3);
    out.opacity = Image(camera.width, camera.height, 1);
    out.depth = Image(camera.width, camera.height, 1, std::numeric_limits<double>::infinity());
    RenderStats& stats = out.stats;

    auto start = Clock::now();
    const RasterBuffer raster = rasterize(scene.mesh.faces, scene.positions, camera);
    const std::vector<Ray> rays = generate_rays(camera);
    SampleOptions options;
    options.samples = settings.profile.samples;
    options.d_max = settings.d_max;
    options.jitter = settings.profile.jitter;
    options.seed = settings.seed;
    const RaySampleBatch batch = filter_samples(rays, raster.depth, options);
    std::vector<int> foreground;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].foreground) foreground.push_back(static_cast<int>(i));
    }
    stats.raster_ms = elapsed_ms(start);
    stats.foreground_rays = foreground.size();

    const int n = options.samples;
    const int R = static_cast<int>(foreground.size());
    const DecodedField* decoded = std::get_if<DecodedField>(&scene.field);

    // Stage 2: UTTS mapping of every sample (decoded fields only).
    start = Clock::now();
    std::vector<MappingResult> mapped;
    if (decoded) {
        mapped.resize(static_cast<std::size_t>(R) * n);
#pragma omp parallel for schedule(dynamic, 16)
        for (int r = 0; r < R; ++r) {
            const RaySamples& rs = batch[foreground[r]];
            int hint = -1;
            for (int k = 0; k < n; ++k) {
                MappingResult m = map_to_utts(*decoded->mapping, rs.point(k), decoded->d_max, hint);
                hint = m.face;
                mapped[static_cast<std::size_t>(r) * n + k] = std::move(m);
            }
        }
    }
    stats.map_ms = elapsed_ms(start);

    // Stage 3: SDF values, opacities and colors of the samples that matter.
    start = Clock::now();
    std::vector<double> alphas(static_cast<std::size_t>(R) * (n - 1), 0.0);
    Eigen::MatrixX3d colors = Eigen::MatrixX3d::Zero(static_cast<Eigen::Index>(R) * (n - 1), 3);
    std::vector<std::size_t> out_of_range(R, 0);
#pragma omp parallel for schedule(dynamic, 16)
    for (int r = 0; r < R; ++r) {
        const RaySamples& rs = batch[foreground[r]];
        std::vector<double> s(n, 0.0);
        std::vector<char> valid(n, 1);
        std::vector<SdfSample> samples(decoded ? n : 0);
        for (int k = 0; k < n; ++k) {
            if (decoded) {
                const MappingResult& m = mapped[static_cast<std::size_t>(r) * n + k];
                if (m.out_of_range) {
                    valid[k] = 0;
                    ++out_of_range[r];
                    continue;
                }
                samples[k] = sdf_eval(*decoded, m.utts);
                s[k] = samples[k].s;
            } else {
                s[k] = sdf_eval(scene.field, rs.point(k)).s;
            }
        }
        const std::vector<double> a = sdf_to_alpha(s, settings.z);
        double transmittance = 1.0;
        for (int k = 0; k + 1 < n; ++k) {
            const std::size_t slot = static_cast<std::size_t>(r) * (n - 1) + k;
            const double alpha = valid[k] && valid[k + 1] ? a[k] : 0.0;
            alphas[slot] = alpha;
            const double w = transmittance * alpha;
            transmittance *= 1.0 - alpha;
            Vec3 c = settings.flat_color;
            if (decoded && decoded->color) {
                // Decoding appearance needs the normal; skip samples that cannot show.
                if (w <= 1e-6) continue;
                const Vec3 x = rs.point(k);
                const Vec3 g = sdf_gradient(scene.field, x);
                const Vec3 normal = g.norm() > 0.0 ? Vec3(g.normalized()) : Vec3::Zero();
                c = decode_color(*decoded, samples[k], normal, rs.ray.direction);
            }
            colors.row(static_cast<Eigen::Index>(slot)) = c.transpose();
        }
    }
    stats.field_ms = elapsed_ms(start);

    // Stage 4: integration along each ray.
    start = Clock::now();
    std::vector<double> mid(n - 1);
    for (int r = 0; r < R; ++r) {
        const RaySamples& rs = batch[foreground[r]];
        for (int k = 0; k + 1 < n; ++k) mid[k] = 0.5 * (rs.t[k] + rs.t[k + 1]);
        const std::size_t first = static_cast<std::size_t>(r) * (n - 1);
        const IntegratedRay ray = volume_integrate(std::span<const double>(alphas).subspan(first, n - 1),
                                                   colors.middleRows(static_cast<Eigen::Index>(first), n - 1), mid);
        const Eigen::Index pixel = foreground[r];
        out.color.data.row(pixel) = ray.color.transpose().array();
        out.opacity.data(pixel, 0) = ray.opacity;
        out.depth.data(pixel, 0) = ray.depth;
        stats.out_of_range += out_of_range[r];
    }
    stats.samples = static_cast<std::size_t>(R) * n;
    stats.integrate_ms = elapsed_ms(start);
    return out;
}

// ---------------------------------------------------------------------------
// Motion textures and texture editing
// ---------------------------------------------------------------------------

MotionTextureSet bake_motion_textures(const TriangleMesh& mesh, std::span<const Positions> frames,
                                      std::span<const Vec3> root, const MotionTextureOptions& options)
{
    if (frames.size() < 3) throw DimensionError("motion textures need a window of at least 3 frames");
    if (root.size() != frames.size()) throw DimensionError("one root translation per frame is required");
    if (options.resolution < 1) throw DomainError("texture resolution must be positive");
    for (const Positions& p : frames) require_vertex_array(mesh, p);

    const std::size_t f = frames.size() - 1;
    std::array<Positions, 3> P;
    double max_coord = 0.0;
    for (int j = 0; j < 3; ++j) {
        P[j] = frames[f - 2 + j].rowwise() - root[f].transpose();
        max_coord = std::max(max_coord, P[j].cwiseAbs().maxCoeff());
    }
    double scale = options.scale;
    if (scale == 0.0) scale = max_coord > 0.0 ? 1.0 / max_coord : 1.0;
    for (Positions& p : P) p *= scale;
    const Positions velocity = P[2] - P[1];
    const Positions acceleration = velocity - (P[1] - P[0]);
    const Positions normals = vertex_normals(mesh.faces, frames[f]);

    const int R = options.resolution;
    MotionTextureSet out;
    out.resolution = R;
    out.scale = scale;
    out.position = Image(R, R, 3);
    out.velocity = Image(R, R, 3);
    out.acceleration = Image(R, R, 3);
    out.uv = Image(R, R, 2);
    out.normal = Image(R, R, 3);
    out.coverage = Image(R, R, 1);

    for (int face = 0; face < mesh.face_count(); ++face) {
        const Vec2 s0 = mesh.corner_uv(face, 0) * R, s1 = mesh.corner_uv(face, 1) * R, s2 = mesh.corner_uv(face, 2) * R;
        const int v[3] = {mesh.faces(face, 0), mesh.faces(face, 1), mesh.faces(face, 2)};
        auto interp = [&](const Positions& m, const Vec3& b) {
            return Vec3(b(0) * m.row(v[0]) + b(1) * m.row(v[1]) + b(2) * m.row(v[2]));
        };
        scan_triangle(s0, s1, s2, 0, R, 0, R, [&](int x, int y, const Vec3& b) {
            const Eigen::Index i = out.coverage.index(x, y);
            if (out.coverage.data(i, 0) != 0.0) return;  // first face wins
            out.coverage.data(i, 0) = 1.0;
            out.position.data.row(i) = interp(P[2], b).transpose().array();
            out.velocity.data.row(i) = interp(velocity, b).transpose().array();
            out.acceleration.data.row(i) = interp(acceleration, b).transpose().array();
            out.uv.data.row(i) = Eigen::Array2d((x + 0.5) / R, (y + 0.5) / R).transpose();
            const Vec3 n = interp(normals, b);
            if (n.norm() > 0.0) out.normal.data.row(i) = n.normalized().transpose().array();
        });
    }
    return out;
}

Eigen::VectorXd sample_atlas(const Image& texture, const Vec2& uv)
{
    const double x = std::clamp(uv.x() * texture.width - 0.5, 0.0, texture.width - 1.0);
    const double y = std::clamp(uv.y() * texture.height - 0.5, 0.0, texture.height - 1.0);
    const int x0 = std::min(static_cast<int>(x), texture.width - 1), y0 = std::min(static_cast<int>(y), texture.height - 1);
    const int x1 = std::min(x0 + 1, texture.width - 1), y1 = std::min(y0 + 1, texture.height - 1);
    const double fx = x - x0, fy = y - y0;
    const auto row = [&](int xx, int yy) { return texture.data.row(texture.index(xx, yy)).transpose().matrix(); };
    return (1 - fx) * (1 - fy) * row(x0, y0) + fx * (1 - fy) * row(x1, y0) + (1 - fx) * fy * row(x0, y1) +
           fx * fy * row(x1, y1);
}

Image composite_texture_edit(const Image& render, const TriangleMesh& mesh, const Positions& positions,
                             const Camera& camera, const Image& edit_texture)
{
    if (render.width != camera.width || render.height != camera.height || render.channels() != 3) {
        throw DimensionError("rendered image must be an RGB image of the camera's size");
    }
    if (edit_texture.channels() != 4) throw DimensionError("edit texture must be RGBA");
    require_vertex_array(mesh, positions);
    const RasterBuffer raster = rasterize(mesh.faces, positions, camera);
    Image out = render;
    for (int i = 0; i < camera.width * camera.height; ++i) {
        if (!raster.covered(i)) continue;
        const int f = raster.face[i];
        const Vec3& b = raster.barycentric[i];
        const Vec2 uv = b(0) * mesh.corner_uv(f, 0) + b(1) * mesh.corner_uv(f, 1) + b(2) * mesh.corner_uv(f, 2);
        // Nearest texel, so opaque texels replace the render exactly.
        const int tx = std::clamp(static_cast<int>(uv.x() * edit_texture.width), 0, edit_texture.width - 1);
        const int ty = std::clamp(static_cast<int>(uv.y() * edit_texture.height), 0, edit_texture.height - 1);
        const Eigen::VectorXd rgba = edit_texture.data.row(edit_texture.index(tx, ty)).transpose();
        const double a = std::clamp(rgba(3), 0.0, 1.0);
        if (a == 0.0) continue;
        out.data.row(i) = a * rgba.head<3>().transpose().array() + (1.0 - a) * render.data.row(i);
    }
    return out;
}

}  // namespace avatar
