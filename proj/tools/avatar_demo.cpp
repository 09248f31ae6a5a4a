// Writes a self-contained demo scene: the procedural leg avatar with its
// skeleton, embedded graph, a short motion and a choice of field.

#include "avatar/error.hpp"
#include "avatar/fixtures.hpp"
#include "avatar/scene.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace avatar;
namespace fs = std::filesystem;

int main(int argc, char** argv)
{
    CLI::App app{"Write a demo scene for the avatar tools"};
    fs::path out;
    std::string field = "template";
    int frames = 50;
    int size = 256;
    std::uint64_t seed = 0;
    app.add_option("--out", out, "Scene JSON path; assets are written next to it")->required();
    app.add_option("--field", field, "template, sphere, capsule or decoded")
        ->check(CLI::IsMember({"template", "sphere", "capsule", "decoded"}))
        ->capture_default_str();
    app.add_option("--frames", frames, "Motion length")->capture_default_str();
    app.add_option("--size", size, "Camera image size")->capture_default_str();
    app.add_option("--seed", seed, "Seed for the decoded field")->capture_default_str();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        fixtures::LegAvatar leg = fixtures::leg_avatar(24, 24, frames);
        SceneDescription s;
        s.mesh = leg.mesh;
        s.skeleton = leg.skeleton;
        s.graph = leg.graph;
        s.motion = leg.motion;
        s.camera = Camera::look_at(Vec3(0.0, 0.55, 2.2), Vec3(0.0, 0.5, 0.0), Vec3::UnitY(), 0.6, size, size);
        s.settings.d_max = config::kDmaxInitial;
        if (field == "sphere") {
            s.field.kind = FieldKind::Analytic;
            s.field.analytic = AnalyticSdf{Sphere{Vec3(0.0, 0.5, 0.0), 0.3}, 1.0};
        } else if (field == "capsule") {
            s.field.kind = FieldKind::Analytic;
            s.field.analytic = AnalyticSdf{Capsule{Vec3(0.0, 0.1, 0.0), Vec3(0.0, 0.95, 0.0), 0.06}, 1.0};
        } else if (field == "decoded") {
            auto index = std::make_shared<ClosestPointIndex>(s.mesh, s.mesh.vertices);
            std::mt19937_64 rng(seed);
            const DecodedField d = fixtures::height_field(index, config::kDmaxInitial, 0.002, {}, rng);
            s.field.kind = FieldKind::Decoded;
            s.field.d_max = d.d_max;
            s.field.triplane = d.triplane;
            s.field.geometry = d.geometry;
            s.field.color = d.color;
            s.field.encoding = d.encoding;
            s.field.motion_code = d.motion_code;
        }
        if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
        save_scene(out, s);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
