#include "avatar/error.hpp"
#include "avatar/fixtures.hpp"
#include "avatar/io.hpp"
#include "avatar/session.hpp"
#include "support.hpp"

#include <numbers>

using namespace avatar;
using json = nlohmann::json;

namespace {

constexpr int kSize = 24;  // small renders keep the suite fast

SceneDescription leg_scene(bool with_motion = true)
{
    fixtures::LegAvatar leg = fixtures::leg_avatar(12, 12, 8);
    SceneDescription s;
    s.mesh = leg.mesh;
    s.skeleton = leg.skeleton;
    s.graph = leg.graph;
    if (with_motion) s.motion = leg.motion;
    s.field.kind = FieldKind::TemplateDistance;
    s.camera = Camera::look_at(Vec3(0.0, 0.5, 2.5), Vec3(0.0, 0.5, 0.0), Vec3::UnitY(), 0.7, 64, 64);
    s.settings.d_max = 0.04;
    validate(s);
    return s;
}

std::shared_ptr<const SceneDescription> shared_scene(bool with_motion = true)
{
    return std::make_shared<const SceneDescription>(leg_scene(with_motion));
}

json parse(const WireFrame& f)
{
    REQUIRE_FALSE(f.binary);
    return json::parse(f.payload);
}

std::string dofs_message(const Eigen::VectorXd& d, std::optional<std::uint64_t> generation = {})
{
    json j = {{"type", "set_dofs"}, {"dofs", std::vector<double>(d.data(), d.data() + d.size())}};
    if (generation) j["generation"] = *generation;
    return j.dump();
}

}  // namespace

TEST_CASE("session starts from the scene's frame and camera")
{
    Session session(shared_scene(), kSize);
    CHECK(session.state().mode == ViewMode::Replay);
    CHECK(session.state().frame == 0);
    CHECK(session.state().camera.width == kSize);
    CHECK(session.state().camera.height == kSize);
    CHECK_FALSE(session.pending());

    Session still(shared_scene(false), kSize);
    CHECK(still.state().mode == ViewMode::Edit);
    CHECK(still.state().dofs == Eigen::VectorXd::Zero(8));
}

TEST_CASE("snapshot carries the DoF descriptor and the face list")
{
    Session session(shared_scene(), kSize);
    const auto frames = session.snapshot();
    REQUIRE(frames.size() == 2);
    const json j = parse(frames[0]);
    CHECK(j["type"] == "snapshot");
    CHECK(j["mode"] == "replay");
    CHECK(j["frame_count"] == 8);
    CHECK(j["dofs"].size() == 8);
    CHECK(j["dofs"][6]["name"] == "knee_rx");
    CHECK(j["dofs"][6]["min"] == 0.0);
    CHECK(j["dofs"][6]["max"] == doctest::Approx(2.4));
    CHECK(j["image_size"] == kSize);
    REQUIRE(frames[1].binary);
    const Tensor faces = decode_tensor(frames[1].payload);
    CHECK(faces.dims == std::vector<std::uint32_t>{static_cast<std::uint32_t>(session.scene().mesh.face_count()), 3});
    CHECK(to_matrix(faces).cast<int>() == session.scene().mesh.faces);
}

TEST_CASE("zero pose reproduces the rest template")
{
    Session session(shared_scene(false), kSize);
    const auto frames = session.handle(dofs_message(Eigen::VectorXd::Zero(8)));
    REQUIRE(frames.size() == 4);
    CHECK(parse(frames[0])["type"] == "mesh");
    REQUIRE(frames[1].binary);
    const Eigen::MatrixXd posed = to_matrix(decode_tensor(frames[1].payload));
    CHECK((posed - session.scene().mesh.vertices).cwiseAbs().maxCoeff() <= 1e-6);  // TRIT stores float32
    CHECK((session.posed_vertices() - session.scene().mesh.vertices).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(parse(frames[2])["type"] == "render");
    CHECK(parse(frames[3])["type"] == "stats");
}

TEST_CASE("compute emits mesh, render and stats with one generation")
{
    Session session(shared_scene(), kSize);
    const auto frames = session.handle(R"({"type":"set_frame","frame":3,"generation":41})");
    REQUIRE(frames.size() == 4);
    const json mesh = parse(frames[0]), render = parse(frames[2]), stats = parse(frames[3]);
    CHECK(mesh["generation"] == 41);
    CHECK(mesh["frame"] == 3);
    CHECK(mesh["vertex_count"] == session.scene().mesh.vertex_count());
    CHECK(render["generation"] == 41);
    CHECK(render["width"] == kSize);
    CHECK(render["format"] == "png");
    CHECK(render["data"].get<std::string>().rfind("iVBORw0KGgo", 0) == 0);  // base64 of the PNG signature
    CHECK(stats["generation"] == 41);
    for (const char* key : {"deform_ms", "raster_ms", "map_ms", "field_ms", "integrate_ms", "encode_ms", "total_ms"}) {
        CHECK(stats[key].get<double>() >= 0.0);
    }
    CHECK(stats["total_ms"].get<double>() >= stats["deform_ms"].get<double>());
    CHECK(stats["foreground_rays"].get<int>() > 0);
    CHECK(stats["samples"].get<long>() == 20L * stats["foreground_rays"].get<long>());

    const Eigen::MatrixXd posed = to_matrix(decode_tensor(frames[1].payload));
    CHECK((posed - session.posed_vertices()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("identical camera requests render identical bytes")
{
    Session a(shared_scene(), kSize), b(shared_scene(), kSize);
    const std::string msg = R"({"type":"set_camera","azimuth":30,"elevation":10,"distance":2.2,"target":[0,0.5,0]})";
    const auto fa = a.handle(msg), fb = b.handle(msg);
    REQUIRE(fa.size() == 4);
    REQUIRE(fb.size() == 4);
    CHECK(parse(fa[2])["data"] == parse(fb[2])["data"]);
    CHECK(fa[1].payload == fb[1].payload);
    // A second compute in the same session is also identical.
    const auto again = a.handle(msg);
    CHECK(parse(again[2])["data"] == parse(fa[2])["data"]);
}

TEST_CASE("knee edit moves only vertices skinned to the knee subtree")
{
    Session session(shared_scene(false), kSize);
    const Positions rest = session.posed_vertices();
    Eigen::VectorXd dofs = Eigen::VectorXd::Zero(8);
    dofs(6) = 0.3;
    REQUIRE(session.apply(dofs_message(dofs)).empty());
    const Positions bent = session.posed_vertices();

    const Skeleton& sk = *session.scene().skeleton;
    const SkinWeights& skin = *session.scene().mesh.skin;
    int moved = 0;
    for (int v = 0; v < rest.rows(); ++v) {
        bool below_knee = false;
        for (SkinWeights::InnerIterator it(skin, v); it; ++it) {
            if (it.value() > 0.0 && sk.in_subtree(static_cast<int>(it.col()), 2)) below_knee = true;
        }
        const double shift = (bent.row(v) - rest.row(v)).norm();
        if (below_knee) {
            moved += shift > 1e-9;
        } else {
            CHECK(shift <= 1e-12);
        }
    }
    CHECK(moved > 0);
}

TEST_CASE("named DoF values are clamped to their ranges")
{
    Session session(shared_scene(false), kSize);
    REQUIRE(session.apply(R"({"type":"set_dofs","values":{"knee_rx":5.0,"hip_rz":-3.0}})").empty());
    CHECK(session.state().dofs(6) == doctest::Approx(2.4));
    CHECK(session.state().dofs(5) == doctest::Approx(-0.8));
    CHECK(session.state().dofs(0) == 0.0);
    CHECK(session.pending());
}

TEST_CASE("rejected messages produce an error and keep the state")
{
    Session session(shared_scene(), kSize);
    REQUIRE(session.apply(R"({"type":"set_frame","frame":2,"generation":7})").empty());
    session.compute();
    const SessionState before = session.state();

    const std::vector<std::string> bad = {
        "{not json",
        "[1,2,3]",
        R"({"kind":"set_frame"})",
        R"({"type":"warp"})",
        R"({"type":"set_dofs","dofs":[0,0,0]})",
        R"({"type":"set_dofs","dofs":[0,0,0,0,0,0,"x",0]})",
        R"({"type":"set_dofs","values":{"elbow":1.0}})",
        R"({"type":"set_dofs","dofs":[0,0,0,0,0,0,1e999,0]})",
        R"({"type":"set_frame","frame":8})",
        R"({"type":"set_frame","frame":-1})",
        R"({"type":"set_frame","frame":1.5})",
        R"({"type":"set_mode","mode":"fly"})",
        R"({"type":"set_camera","distance":2})",
        R"({"type":"set_camera","azimuth":0,"elevation":0,"distance":-1})",
        R"({"type":"set_camera","eye":[0,0,1],"target":[0,0,1]})",
        R"({"type":"set_frame","frame":1,"generation":-4})",
    };
    for (const std::string& m : bad) {
        CAPTURE(m);
        const auto frames = session.apply(m);
        REQUIRE(frames.size() == 1);
        const json j = parse(frames[0]);
        CHECK(j["type"] == "error");
        CHECK_FALSE(j["reason"].get<std::string>().empty());
        CHECK(j["generation"] == 7);
        CHECK(session.state().frame == before.frame);
        CHECK(session.state().dofs == before.dofs);
        CHECK(session.state().generation == before.generation);
        CHECK(session.state().camera.world_to_camera.matrix() == before.camera.world_to_camera.matrix());
        CHECK_FALSE(session.pending());
    }
}

TEST_CASE("set_frame needs a motion")
{
    Session session(shared_scene(false), kSize);
    const json j = parse(session.apply(R"({"type":"set_frame","frame":0})").at(0));
    CHECK(j["type"] == "error");
}

TEST_CASE("set_mode answers with a snapshot and no compute")
{
    Session session(shared_scene(), kSize);
    const auto frames = session.apply(R"({"type":"set_mode","mode":"orbit","generation":3})");
    REQUIRE(frames.size() == 2);
    const json j = parse(frames[0]);
    CHECK(j["type"] == "snapshot");
    CHECK(j["mode"] == "orbit");
    CHECK(j["generation"] == 3);
    CHECK(session.state().mode == ViewMode::Orbit);
    CHECK_FALSE(session.pending());
    CHECK(session.apply(R"({"type":"get_snapshot"})").size() == 2);
}

TEST_CASE("generation defaults to one more than the last accepted")
{
    Session session(shared_scene(), kSize);
    REQUIRE(session.apply(R"({"type":"set_frame","frame":1,"generation":10})").empty());
    REQUIRE(session.apply(R"({"type":"set_frame","frame":2})").empty());
    CHECK(session.state().generation == 11);
}

TEST_CASE("batches coalesce into one compute for the newest request")
{
    Session session(shared_scene(), kSize);
    const std::vector<std::string> batch = {
        R"({"type":"set_frame","frame":1,"generation":1})",
        R"({"type":"set_frame","frame":99,"generation":2})",
        R"({"type":"set_frame","frame":4,"generation":3})",
        R"({"type":"set_camera","azimuth":90,"elevation":0,"distance":2.5,"generation":4})",
    };
    const auto frames = session.handle_batch(batch);
    // One error for the out-of-range frame, then a single mesh/render/stats group.
    REQUIRE(frames.size() == 5);
    CHECK(parse(frames[0])["type"] == "error");
    CHECK(parse(frames[0])["generation"] == 1);
    int meshes = 0;
    for (const auto& f : frames) {
        if (!f.binary && parse(f)["type"] == "mesh") {
            ++meshes;
            CHECK(parse(f)["generation"] == 4);
            CHECK(parse(f)["frame"] == 4);
        }
    }
    CHECK(meshes == 1);
    CHECK_FALSE(session.pending());

    // A batch with nothing accepted computes nothing.
    CHECK(session.handle_batch(std::vector<std::string>{"{}"}).size() == 1);
}

TEST_CASE("orbit camera looks at its target from the requested direction")
{
    const Vec3 target(0.1, 0.5, -0.2);
    const Camera c = orbit_camera(target, 90.0, 0.0, 2.0, 0.7, 32, 32);
    CHECK((c.center() - (target + Vec3(2.0, 0.0, 0.0))).norm() <= 1e-12);
    const Vec2 p = c.project(target);
    CHECK(p.x() == doctest::Approx(16.0));
    CHECK(p.y() == doctest::Approx(16.0));
    // Elevation is clamped short of the pole so the up vector stays usable.
    const Camera top = orbit_camera(target, 0.0, 120.0, 2.0, 0.7, 32, 32);
    CHECK(top.center().y() < target.y() + 2.0);
    CHECK(top.center().y() > target.y() + 1.99);
}

TEST_CASE("resizing a camera keeps its vertical field of view")
{
    const Camera c = Camera::look_at(Vec3(0, 0, 3), Vec3::Zero(), Vec3::UnitY(), 0.6, 640, 480);
    const Camera r = resize_camera(c, 100, 100);
    CHECK(2.0 * std::atan(0.5 * r.height / r.fy) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(r.fx == r.fy);
    CHECK(r.cx == doctest::Approx(50.0));
}

TEST_CASE("view mode names round trip")
{
    for (ViewMode m : {ViewMode::Replay, ViewMode::Edit, ViewMode::Orbit}) {
        CHECK(view_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(view_mode_from_string("Replay"), Error);
}
