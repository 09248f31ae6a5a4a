// Command-line front end: one subcommand per kernel operation plus `serve`.
// Usage errors exit with 2, data errors with 1 and a message on stderr.

#include "avatar/error.hpp"
#include "avatar/fixtures.hpp"
#include "avatar/io.hpp"
#include "avatar/losses.hpp"
#include "avatar/refine.hpp"
#include "avatar/scene.hpp"
#include "avatar/serve.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <sstream>

using namespace avatar;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

Tensor image_tensor(const Image& image)
{
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(image.height), static_cast<std::uint32_t>(image.width),
              static_cast<std::uint32_t>(image.channels())};
    t.values.reserve(image.data.size());
    for (Eigen::Index p = 0; p < image.data.rows(); ++p) {
        for (Eigen::Index c = 0; c < image.data.cols(); ++c) t.values.push_back(static_cast<float>(image.data(p, c)));
    }
    return t;
}

Positions points_from_tensor(const Tensor& t, const std::string& what)
{
    if (t.dims.size() != 2 || t.dims[1] != 3) {
        std::ostringstream shape;
        for (std::size_t i = 0; i < t.dims.size(); ++i) shape << (i ? "," : "") << t.dims[i];
        throw DimensionError(what + " must be an [N, 3] tensor, got [" + shape.str() + "]");
    }
    return to_matrix(t);
}

fs::path sibling(const fs::path& path, const std::string& suffix)
{
    return path.parent_path() / (path.stem().string() + suffix);
}

std::string csv_header() { return "d_max,face_frac,edge_frac,vertex_frac,out_of_range_frac"; }

std::string csv_row(double d_max, const CollisionStats& s)
{
    char line[256];
    std::snprintf(line, sizeof line, "%.6g,%.9g,%.9g,%.9g,%.9g", d_max, s.face_fraction, s.edge_fraction,
                  s.vertex_fraction, s.out_of_range_fraction);
    return line;
}

// Pose selected by --frame / --dofs on top of the scene's own pose.
struct PoseChoice {
    std::optional<int> frame;
    std::vector<double> dofs;

    void add_options(CLI::App* app)
    {
        app->add_option("--frame", frame, "Motion frame to pose (defaults to the scene's frame)");
        app->add_option("--dofs", dofs, "Explicit DoF values, comma separated")->delimiter(',');
    }

    std::pair<Eigen::VectorXd, int> resolve(const SceneDescription& scene) const
    {
        const int f = frame.value_or(scene.frame);
        Eigen::VectorXd pose;
        if (!dofs.empty()) {
            pose = Eigen::Map<const Eigen::VectorXd>(dofs.data(), static_cast<Eigen::Index>(dofs.size()));
        } else if (frame && scene.motion) {
            if (f < 0 || f >= scene.motion->frame_count()) {
                throw DomainError("frame " + std::to_string(f) + " outside the motion's " +
                                  std::to_string(scene.motion->frame_count()) + " frames");
            }
            pose = scene.motion->frames.row(f).transpose();
        } else {
            pose = scene_pose(scene);
        }
        return {pose, f};
    }
};

void write_json(const fs::path& path, const json& j)
{
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
    } else {
        atomic_write(path, j.dump(2) + "\n");
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct DeformArgs {
    fs::path scene, out, vertices;
    PoseChoice pose;
};

void run_deform(const DeformArgs& a)
{
    const SceneDescription scene = load_scene(a.scene);
    const auto [pose, frame] = a.pose.resolve(scene);
    const Positions posed = pose_template(scene, pose_window(scene, pose, frame));
    save_obj(a.out, scene.mesh, posed);
    if (!a.vertices.empty()) write_tensor(a.vertices, to_tensor(posed));
}

struct MapArgs {
    fs::path mesh, points, out, csv;
    double d_max = config::kDmaxInitial;
};

void run_map(const MapArgs& a)
{
    if (!(a.d_max > 0.0)) throw DomainError("--dmax must be positive");
    const TriangleMesh mesh = load_obj(a.mesh);
    const Positions points = points_from_tensor(read_tensor(a.points), "--points");
    const ClosestPointIndex index(mesh, mesh.vertices);
    const std::vector<MappingResult> results = map_to_utts_batch(index, points, a.d_max);

    // Columns: u_x, u_y, d, element kind (0 face, 1 edge, 2 vertex), out of range (0/1).
    Tensor t;
    t.dims = {static_cast<std::uint32_t>(results.size()), 5};
    t.values.reserve(results.size() * 5);
    for (const MappingResult& r : results) {
        for (double v : {r.utts.u.x(), r.utts.u.y(), r.utts.d, static_cast<double>(r.kind), r.out_of_range ? 1.0 : 0.0}) {
            t.values.push_back(static_cast<float>(v));
        }
    }
    write_tensor(a.out, t);
    const fs::path csv = a.csv.empty() ? sibling(a.out, "_collisions.csv") : a.csv;
    atomic_write(csv, csv_header() + "\n" + csv_row(a.d_max, collision_ratio(index, points, a.d_max)) + "\n");
}

struct CollisionArgs {
    std::vector<double> d_max{0.01, 0.02, 0.04, 0.08};
    fs::path mesh, out;
    int samples = 20000;
    double height = 0.08;
    std::uint64_t seed = 0;
};

void run_collisions(const CollisionArgs& a)
{
    if (a.samples < 1) throw DomainError("--samples must be positive");
    for (double d : a.d_max) {
        if (!(d > 0.0)) throw DomainError("every --dmax value must be positive");
    }
    const TriangleMesh mesh = a.mesh.empty() ? fixtures::deformed_cylinder() : load_obj(a.mesh);
    const ClosestPointIndex index(mesh, mesh.vertices);
    std::mt19937_64 rng(a.seed);
    // One cloud at fixed surface offsets, shared by every d_max.
    const Positions cloud = fixtures::lifted_samples(mesh, rng, a.samples, -a.height, a.height);
    std::string text = csv_header() + ",collision_ratio\n";
    for (double d : a.d_max) {
        const CollisionStats s = collision_ratio(index, cloud, d);
        char ratio[64];
        std::snprintf(ratio, sizeof ratio, ",%.9g\n", s.collision_ratio());
        text += csv_row(d, s) + ratio;
    }
    if (a.out.empty()) {
        std::cout << text;
    } else {
        atomic_write(a.out, text);
    }
}

struct BakeArgs {
    fs::path scene, out_dir;
    PoseChoice pose;
    int resolution = config::kMotionTextureResolution;
    bool png = false;
};

void run_bake(const BakeArgs& a)
{
    const SceneDescription scene = load_scene(a.scene);
    if (!scene.skeleton) throw Error("baking motion textures needs a skinned scene");
    const auto [pose, frame] = a.pose.resolve(scene);
    const SkeletalMotion window = pose_window(scene, pose, frame);

    std::vector<Positions> frames;
    std::vector<Vec3> roots;
    for (int k = 0; k < window.window.rows(); ++k) {
        const Eigen::VectorXd p = window.window.row(k).transpose();
        SkeletalMotion single;
        single.window = p.transpose().replicate(window.window.rows(), 1);
        single.frame = window.frame;
        frames.push_back(pose_template(scene, single));
        roots.push_back(joint_world_transforms(*scene.skeleton, p).front().translation());
    }
    MotionTextureOptions options;
    options.resolution = a.resolution;
    const MotionTextureSet set = bake_motion_textures(scene.mesh, frames, roots, options);

    fs::create_directories(a.out_dir);
    const std::pair<const char*, const Image*> maps[] = {{"position", &set.position}, {"velocity", &set.velocity},
                                                         {"acceleration", &set.acceleration}, {"uv", &set.uv},
                                                         {"normal", &set.normal}, {"coverage", &set.coverage}};
    for (const auto& [name, image] : maps) {
        write_tensor(a.out_dir / (std::string(name) + ".trit"), image_tensor(*image));
        if (a.png && image->channels() == 3) {
            Image shown = *image;
            shown.data = (0.5 * shown.data + 0.5).cwiseMax(0.0).cwiseMin(1.0);
            write_png(a.out_dir / (std::string(name) + ".png"), shown);
        }
    }
    write_json(a.out_dir / "textures.json",
               {{"resolution", set.resolution}, {"scale", set.scale}, {"frame", frame},
                {"maps", {"position", "velocity", "acceleration", "uv", "normal", "coverage"}}});
}

struct RenderArgs {
    fs::path scene, out, opacity, depth, stats;
    PoseChoice pose;
    std::optional<int> samples;
    std::optional<std::uint64_t> seed;
    bool jitter = false;
    std::optional<int> width, height;
};

void run_render(const RenderArgs& a)
{
    SceneDescription scene = load_scene(a.scene);
    const auto [pose, frame] = a.pose.resolve(scene);
    if (a.samples) scene.settings.profile.samples = *a.samples;
    if (a.seed) scene.settings.seed = *a.seed;
    if (a.jitter) scene.settings.profile.jitter = true;
    if (a.width || a.height) {
        const int w = a.width.value_or(scene.camera.width), h = a.height.value_or(scene.camera.height);
        const double sx = static_cast<double>(w) / scene.camera.width, sy = static_cast<double>(h) / scene.camera.height;
        scene.camera.fx *= sx;
        scene.camera.cx *= sx;
        scene.camera.fy *= sy;
        scene.camera.cy *= sy;
        scene.camera.width = w;
        scene.camera.height = h;
        validate(scene.camera);
    }
    if (scene.settings.profile.samples < 2) throw DomainError("--samples must be at least 2");

    const SkeletalMotion window = pose_window(scene, pose, frame);
    const Positions posed = pose_template(scene, window);
    const RenderOutput out = render_image(make_render_scene(scene, posed, window));
    write_png(a.out, out.color);
    write_tensor(a.opacity.empty() ? sibling(a.out, "_opacity.trit") : a.opacity, image_tensor(out.opacity));
    write_tensor(a.depth.empty() ? sibling(a.out, "_depth.trit") : a.depth, image_tensor(out.depth));
    const json stats = {{"width", out.color.width},
                        {"height", out.color.height},
                        {"samples_per_ray", scene.settings.profile.samples},
                        {"raster_ms", out.stats.raster_ms},
                        {"map_ms", out.stats.map_ms},
                        {"field_ms", out.stats.field_ms},
                        {"integrate_ms", out.stats.integrate_ms},
                        {"foreground_rays", out.stats.foreground_rays},
                        {"samples", out.stats.samples},
                        {"out_of_range", out.stats.out_of_range}};
    if (!a.stats.empty()) write_json(a.stats, stats);
}

struct RefineArgs {
    fs::path scene, mesh, out, trace;
    PoseChoice pose;
    RefineConfig config;
    bool no_optimize = false;
};

json trace_json(const std::vector<LossReport>& trace)
{
    json rows = json::array();
    for (const LossReport& r : trace) {
        json row = {{"total", r.total()}};
        for (const auto& [name, value] : r.values) row[name] = value;
        rows.push_back(row);
    }
    return rows;
}

void run_refine(const RefineArgs& a)
{
    validate(a.config);
    const SceneDescription scene = load_scene(a.scene);
    const auto [pose, frame] = a.pose.resolve(scene);
    const SkeletalMotion window = pose_window(scene, pose, frame);
    const SdfField field = bind_field(scene, pose_template(scene, window), window);

    const TriangleMesh input = a.mesh.empty() ? scene.mesh : load_obj(a.mesh);
    Positions start = input.vertices;
    if (a.mesh.empty()) start = pose_template(scene, window);

    const EmbossResult embossed = emboss_mesh(input, start, field, a.config);
    json report = {{"emboss_iterations", a.config.emboss_iterations},
                   {"frozen", embossed.frozen},
                   {"vertices", embossed.mesh.vertex_count()},
                   {"faces", embossed.mesh.face_count()}};
    Positions result = embossed.positions;
    if (!a.no_optimize) {
        TriangleMesh reference = embossed.mesh;
        reference.vertices = embossed.positions;
        try {
            const OptimizeResult opt = optimize_template(reference, embossed.positions, field, a.config);
            result = opt.positions;
            report["iterations"] = opt.iterations;
            report["converged"] = opt.converged;
            report["trace"] = trace_json(opt.trace);
        } catch (const OptimizationError& e) {
            report["error"] = e.what();
            report["trace"] = trace_json(e.trace());
            if (!a.trace.empty()) write_json(a.trace, report);
            throw;
        }
    }
    save_obj(a.out, embossed.mesh, result);
    write_json(a.trace.empty() ? sibling(a.out, "_trace.json") : a.trace, report);
}

struct LossArgs {
    bool check = false;
    std::uint64_t seed = 0;
    fs::path out;
};

int run_losses(const LossArgs& a)
{
    if (!a.check) throw CLI::RequiredError("--check-gradients");
    json report = json::object();
    bool ok = true;
    for (const GradientCheck& c : gradient_suite(a.seed)) {
        report[c.loss] = c.max_relative_error;
        ok = ok && c.max_relative_error <= 1e-5;
    }
    write_json(a.out, report);
    return ok ? 0 : 1;
}

struct ServeArgs {
    fs::path scene;
    ServeOptions options;
    std::string ui;
};

void run_serve(ServeArgs a)
{
    if (!a.ui.empty()) a.options.ui_dir = fs::path(a.ui);
    auto scene = std::make_shared<const SceneDescription>(load_scene(a.scene));

    // Block the termination signals before any thread starts so that only
    // sigwait below sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Server server(scene, a.options);
    server.start();
    std::cerr << "serving on ws://" << a.options.address << ":" << server.port() << "/" << std::endl;
    int received = 0;
    sigwait(&signals, &received);
    std::cerr << "shutting down" << std::endl;
    server.stop();
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Deformable-avatar geometry kernel"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "avatar 0.1.0");

    DeformArgs deform;
    auto* deform_cmd = app.add_subcommand("deform", "Pose the scene's template and write it as OBJ");
    deform_cmd->add_option("--scene", deform.scene, "Scene JSON")->required();
    deform_cmd->add_option("--out", deform.out, "Posed OBJ")->required();
    deform_cmd->add_option("--vertices", deform.vertices, "Also write the posed vertices as an [N, 3] tensor");
    deform.pose.add_options(deform_cmd);

    MapArgs map;
    auto* map_cmd = app.add_subcommand("map", "Map points into the UTTS of a mesh");
    map_cmd->add_option("--mesh", map.mesh, "Template OBJ")->required();
    map_cmd->add_option("--points", map.points, "[N, 3] point tensor")->required();
    map_cmd->add_option("--dmax", map.d_max, "Shell half-height in meters")->capture_default_str();
    map_cmd->add_option("--out", map.out, "[N, 5] tensor: u_x, u_y, d, element kind, out of range")->required();
    map_cmd->add_option("--csv", map.csv, "Collision report (default: <out>_collisions.csv)");

    CollisionArgs collisions;
    auto* col_cmd = app.add_subcommand("collisions", "Collision-prone ratio over shell heights");
    col_cmd->add_option("--dmax", collisions.d_max, "Shell half-heights, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    col_cmd->add_option("--mesh", collisions.mesh, "Template OBJ (default: procedurally deformed cylinder)");
    col_cmd->add_option("--samples", collisions.samples, "Points in the sample cloud")->capture_default_str();
    col_cmd->add_option("--height", collisions.height, "Cloud offsets are uniform in [-height, height]")
        ->capture_default_str();
    col_cmd->add_option("--seed", collisions.seed, "Random seed")->capture_default_str();
    col_cmd->add_option("--out", collisions.out, "CSV path (default: stdout)");

    BakeArgs bake;
    auto* bake_cmd = app.add_subcommand("bake-textures", "Bake motion textures for one frame");
    bake_cmd->add_option("--scene", bake.scene, "Scene JSON")->required();
    bake_cmd->add_option("--out-dir", bake.out_dir, "Output directory")->required();
    bake_cmd->add_option("--resolution", bake.resolution, "Atlas resolution")->capture_default_str();
    bake_cmd->add_flag("--png", bake.png, "Also write 3-channel maps as PNG previews");
    bake.pose.add_options(bake_cmd);

    RenderArgs render;
    auto* render_cmd = app.add_subcommand("render", "Volume-render a scene");
    render_cmd->add_option("--scene", render.scene, "Scene JSON")->required();
    render_cmd->add_option("--out", render.out, "Color PNG")->required();
    render_cmd->add_option("--opacity", render.opacity, "Opacity tensor (default: <out>_opacity.trit)");
    render_cmd->add_option("--depth", render.depth, "Expected-depth tensor (default: <out>_depth.trit)");
    render_cmd->add_option("--stats", render.stats, "Stage timings as JSON ('-' for stdout)");
    render_cmd->add_option("--samples", render.samples, "Samples per ray");
    render_cmd->add_option("--seed", render.seed, "Jitter seed");
    render_cmd->add_flag("--jitter", render.jitter, "Stratified sample offsets");
    render_cmd->add_option("--width", render.width, "Override the image width");
    render_cmd->add_option("--height", render.height, "Override the image height");
    render.pose.add_options(render_cmd);

    RefineArgs refine;
    auto* refine_cmd = app.add_subcommand("refine", "Fit a template mesh to the scene's SDF");
    refine_cmd->add_option("--scene", refine.scene, "Scene JSON providing the field")->required();
    refine_cmd->add_option("--mesh", refine.mesh, "Input OBJ (default: the posed scene template)");
    refine_cmd->add_option("--out", refine.out, "Refined OBJ")->required();
    refine_cmd->add_option("--trace", refine.trace, "Loss trace JSON (default: <out>_trace.json)");
    refine_cmd->add_option("--emboss", refine.config.emboss_iterations, "Emboss iterations")->capture_default_str();
    refine_cmd->add_option("--iterations", refine.config.iterations, "Optimizer iterations")->capture_default_str();
    refine_cmd->add_option("--step", refine.config.step, "Largest vertex move per step (m)")->capture_default_str();
    refine_cmd->add_flag("--subdivide", refine.config.subdivide, "Subdivide once before embossing");
    refine_cmd->add_flag("--no-optimize", refine.no_optimize, "Emboss only");
    refine.pose.add_options(refine_cmd);

    LossArgs losses;
    auto* loss_cmd = app.add_subcommand("losses", "Loss utilities");
    loss_cmd->add_flag("--check-gradients", losses.check, "Central-difference check of every loss gradient");
    loss_cmd->add_option("--seed", losses.seed, "Fixture seed")->capture_default_str();
    loss_cmd->add_option("--out", losses.out, "Report path (default: stdout)");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "WebSocket steering service for the viewer");
    serve_cmd->add_option("--scene", serve.scene, "Scene JSON")->required();
    serve_cmd->add_option("--port", serve.options.port, "TCP port (0 picks a free one)")->capture_default_str();
    serve_cmd->add_option("--address", serve.options.address, "Listen address")->capture_default_str();
    serve_cmd->add_option("--ui", serve.ui, "Directory of static viewer files");
    serve_cmd->add_option("--size", serve.options.image_size, "Rendered image size")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*deform_cmd) run_deform(deform);
        if (*map_cmd) run_map(map);
        if (*col_cmd) run_collisions(collisions);
        if (*bake_cmd) run_bake(bake);
        if (*render_cmd) run_render(render);
        if (*refine_cmd) run_refine(refine);
        if (*loss_cmd) return run_losses(losses);
        if (*serve_cmd) run_serve(serve);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
