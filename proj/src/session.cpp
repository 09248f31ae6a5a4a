#include "avatar/session.hpp"

#include "avatar/error.hpp"
#include "avatar/io.hpp"
#include "json_util.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace avatar {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

WireFrame text(const json& j) { return {false, j.dump()}; }

WireFrame error_frame(const std::string& reason, std::uint64_t generation)
{
    return text({{"type", "error"}, {"reason", reason}, {"generation", generation}});
}

double vertical_fov(const Camera& c) { return 2.0 * std::atan(0.5 * c.height / c.fy); }

double finite_number(const json& j, const char* key)
{
    if (!j.contains(key) || !j[key].is_number()) throw Error(std::string("'") + key + "' must be a number");
    const double v = j[key].get<double>();
    if (!std::isfinite(v)) throw Error(std::string("'") + key + "' must be finite");
    return v;
}

Vec3 finite_vec3(const json& j, const char* key)
{
    const Vec3 v = detail::vec3(j.at(key));
    if (!v.allFinite()) throw Error(std::string("'") + key + "' must be finite");
    return v;
}

}  // namespace

std::string to_string(ViewMode mode)
{
    switch (mode) {
    case ViewMode::Replay: return "replay";
    case ViewMode::Edit: return "edit";
    case ViewMode::Orbit: return "orbit";
    }
    return "replay";
}

ViewMode view_mode_from_string(const std::string& name)
{
    if (name == "replay") return ViewMode::Replay;
    if (name == "edit") return ViewMode::Edit;
    if (name == "orbit") return ViewMode::Orbit;
    throw Error("unknown mode '" + name + "' (expected replay, edit or orbit)");
}

Camera resize_camera(const Camera& camera, int width, int height)
{
    Camera c = camera;
    const double sx = static_cast<double>(width) / camera.width, sy = static_cast<double>(height) / camera.height;
    c.width = width;
    c.height = height;
    c.fx *= sy;  // keep the vertical field of view and square pixels
    c.fy *= sy;
    c.cx *= sx;
    c.cy *= sy;
    validate(c);
    return c;
}

Camera orbit_camera(const Vec3& target, double azimuth_deg, double elevation_deg, double distance, double fov_y,
                    int width, int height)
{
    if (!(distance > 0.0)) throw DomainError("orbit distance must be positive");
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = std::clamp(elevation_deg, -89.0, 89.0) * std::numbers::pi / 180.0;
    const Vec3 offset(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
    return Camera::look_at(target + distance * offset, target, Vec3::UnitY(), fov_y, width, height);
}

Session::Session(std::shared_ptr<const SceneDescription> scene, int image_size)
    : scene_(std::move(scene)), image_size_(image_size)
{
    if (!scene_) throw Error("session needs a scene");
    if (image_size_ < 1) throw DomainError("image size must be positive");
    state_.frame = scene_->frame;
    state_.dofs = scene_pose(*scene_);
    state_.camera = resize_camera(scene_->camera, image_size_, image_size_);
    state_.mode = scene_->motion ? ViewMode::Replay : ViewMode::Edit;
}

std::vector<WireFrame> Session::snapshot() const
{
    json dofs = json::array();
    if (scene_->skeleton) {
        for (int k = 0; k < scene_->dof_count(); ++k) {
            const Dof& d = scene_->skeleton->dofs[k];
            dofs.push_back({{"name", d.name}, {"min", d.min}, {"max", d.max}, {"value", state_.dofs(k)}});
        }
    }
    json j = {{"type", "snapshot"},
              {"generation", state_.generation},
              {"mode", to_string(state_.mode)},
              {"frame", state_.frame},
              {"frame_count", scene_->motion ? scene_->motion->frame_count() : 1},
              {"fps", scene_->motion ? scene_->motion->fps : config::kMotionFps},
              {"dofs", dofs},
              {"camera", to_json(state_.camera)},
              {"vertex_count", scene_->mesh.vertex_count()},
              {"face_count", scene_->mesh.face_count()},
              {"image_size", image_size_}};
    return {text(j), {true, encode_tensor(to_tensor(scene_->mesh.faces.cast<double>()))}};
}

std::vector<WireFrame> Session::apply(std::string_view message)
{
    json j;
    try {
        j = json::parse(message);
    } catch (const json::exception& e) {  // parse errors and numeric overflow
        return {error_frame(std::string("malformed JSON: ") + e.what(), state_.generation)};
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        return {error_frame("message must be an object with a string 'type'", state_.generation)};
    }
    const std::string type = j["type"].get<std::string>();
    SessionState next = state_;
    try {
        if (j.contains("generation")) {
            if (!j["generation"].is_number_unsigned()) throw Error("'generation' must be an unsigned integer");
            next.generation = j["generation"].get<std::uint64_t>();
        } else {
            next.generation = state_.generation + 1;
        }

        if (type == "get_snapshot") {
            return snapshot();
        } else if (type == "set_mode") {
            next.mode = view_mode_from_string(j.at("mode").get<std::string>());
            state_ = next;
            return snapshot();
        } else if (type == "set_frame") {
            if (!scene_->motion) throw Error("the scene has no motion to replay");
            if (!j.contains("frame") || !j["frame"].is_number_integer()) throw Error("'frame' must be an integer");
            const int frame = j["frame"].get<int>();
            if (frame < 0 || frame >= scene_->motion->frame_count()) {
                throw Error("frame " + std::to_string(frame) + " outside [0, " +
                            std::to_string(scene_->motion->frame_count()) + ")");
            }
            next.frame = frame;
            next.dofs = scene_->motion->frames.row(frame).transpose();
        } else if (type == "set_dofs") {
            const int P = scene_->dof_count();
            if (j.contains("dofs")) {
                if (!j["dofs"].is_array() || j["dofs"].size() != static_cast<std::size_t>(P)) {
                    throw Error("'dofs' must list " + std::to_string(P) + " numbers");
                }
                for (int k = 0; k < P; ++k) {
                    if (!j["dofs"][k].is_number()) throw Error("'dofs' must list numbers");
                    next.dofs(k) = j["dofs"][k].get<double>();
                }
            } else if (j.contains("values") && j["values"].is_object()) {
                for (const auto& [name, value] : j["values"].items()) {
                    int index = -1;
                    for (int k = 0; k < P; ++k) {
                        if (scene_->skeleton->dofs[k].name == name) index = k;
                    }
                    if (index < 0) throw Error("unknown DoF '" + name + "'");
                    if (!value.is_number()) throw Error("value of DoF '" + name + "' must be a number");
                    next.dofs(index) = value.get<double>();
                }
            } else {
                throw Error("set_dofs needs 'dofs' (array) or 'values' (object)");
            }
            if (!next.dofs.allFinite()) throw Error("DoF values must be finite");
            for (int k = 0; k < P; ++k) {
                const Dof& d = scene_->skeleton->dofs[k];
                next.dofs(k) = std::clamp(next.dofs(k), d.min, d.max);
            }
        } else if (type == "set_camera") {
            const double fov = j.contains("fov_y_deg") ? finite_number(j, "fov_y_deg") * std::numbers::pi / 180.0
                                                       : vertical_fov(state_.camera);
            if (j.contains("eye")) {
                const Vec3 up = j.contains("up") ? finite_vec3(j, "up") : Vec3::UnitY();
                next.camera = Camera::look_at(finite_vec3(j, "eye"), finite_vec3(j, "target"), up, fov, image_size_,
                                              image_size_);
            } else if (j.contains("azimuth")) {
                const Vec3 target = j.contains("target") ? finite_vec3(j, "target") : Vec3::Zero();
                next.camera = orbit_camera(target, finite_number(j, "azimuth"), finite_number(j, "elevation"),
                                           finite_number(j, "distance"), fov, image_size_, image_size_);
            } else {
                throw Error("set_camera needs eye/target or azimuth/elevation/distance");
            }
        } else {
            throw Error("unknown message type '" + type + "'");
        }
    } catch (const std::exception& e) {
        return {error_frame(e.what(), state_.generation)};
    }
    state_ = next;
    pending_ = true;
    return {};
}

Positions Session::posed_vertices() const
{
    return pose_template(*scene_, pose_window(*scene_, state_.dofs, state_.frame));
}

std::vector<WireFrame> Session::compute()
{
    pending_ = false;
    const auto start = Clock::now();
    const SkeletalMotion window = pose_window(*scene_, state_.dofs, state_.frame);
    const Positions posed = pose_template(*scene_, window);
    const double deform_ms = ms_since(start);

    Scene render_scene = make_render_scene(*scene_, posed, window);
    render_scene.camera = state_.camera;
    render_scene.settings.profile = RenderProfile::interactive();
    const RenderOutput out = render_image(render_scene);

    const auto encode_start = Clock::now();
    const std::string png = base64_encode(encode_png(out.color));
    const std::string vertices = encode_tensor(to_tensor(posed));
    const double encode_ms = ms_since(encode_start);

    const std::uint64_t g = state_.generation;
    std::vector<WireFrame> frames;
    frames.push_back(text({{"type", "mesh"},
                           {"generation", g},
                           {"frame", state_.frame},
                           {"vertex_count", posed.rows()},
                           {"format", "trit"}}));
    frames.push_back({true, vertices});
    frames.push_back(text({{"type", "render"},
                           {"generation", g},
                           {"width", out.color.width},
                           {"height", out.color.height},
                           {"format", "png"},
                           {"data", png}}));
    frames.push_back(text({{"type", "stats"},
                           {"generation", g},
                           {"mode", to_string(state_.mode)},
                           {"frame", state_.frame},
                           {"deform_ms", deform_ms},
                           {"raster_ms", out.stats.raster_ms},
                           {"map_ms", out.stats.map_ms},
                           {"field_ms", out.stats.field_ms},
                           {"integrate_ms", out.stats.integrate_ms},
                           {"encode_ms", encode_ms},
                           {"total_ms", ms_since(start)},
                           {"foreground_rays", out.stats.foreground_rays},
                           {"samples", out.stats.samples},
                           {"out_of_range", out.stats.out_of_range}}));
    return frames;
}

std::vector<WireFrame> Session::handle(std::string_view message)
{
    std::vector<WireFrame> out = apply(message);
    if (pending_) {
        auto computed = compute();
        out.insert(out.end(), std::make_move_iterator(computed.begin()), std::make_move_iterator(computed.end()));
    }
    return out;
}

std::vector<WireFrame> Session::handle_batch(std::span<const std::string> messages)
{
    std::vector<WireFrame> out;
    for (const std::string& m : messages) {
        auto replies = apply(m);
        out.insert(out.end(), std::make_move_iterator(replies.begin()), std::make_move_iterator(replies.end()));
    }
    if (pending_) {
        auto computed = compute();
        out.insert(out.end(), std::make_move_iterator(computed.begin()), std::make_move_iterator(computed.end()));
    }
    return out;
}

}  // namespace avatar
