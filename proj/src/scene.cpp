#include "avatar/scene.hpp"

#include "avatar/error.hpp"
#include "avatar/io.hpp"
#include "json_util.hpp"

#include <numbers>

namespace avatar {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

double number(const json& j, const char* key, double fallback)
{
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw Error(std::string("scene field '") + key + "' must be a number");
    return j[key].get<double>();
}

// A member given either inline or as a path to a JSON file.
json inline_or_file(const json& j, const fs::path& base_dir)
{
    if (j.is_string()) {
        const fs::path path = base_dir / j.get<std::string>();
        try {
            return json::parse(read_text_file(path));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string(), 0, e.what());
        }
    }
    return j;
}

FieldDescription field_from_json(const json& j, const fs::path& base_dir)
{
    FieldDescription f;
    const std::string type = j.value("type", "template");
    if (type == "sphere" || type == "capsule" || type == "plane") {
        f.kind = FieldKind::Analytic;
        f.analytic = analytic_sdf_from_json(j);
    } else if (type == "template") {
        f.kind = FieldKind::TemplateDistance;
    } else if (type == "decoded") {
        f.kind = FieldKind::Decoded;
        f.d_max = number(j, "d_max", config::kDmaxInitial);
        f.triplane = load_triplane(base_dir / j.at("triplane").get<std::string>());
        f.geometry = load_mlp(base_dir / j.at("geometry").get<std::string>());
        if (j.contains("color")) f.color = load_mlp(base_dir / j["color"].get<std::string>());
        if (j.contains("motion_encoder")) f.motion_encoder = load_mlp(base_dir / j["motion_encoder"].get<std::string>());
        if (j.contains("encoding")) {
            f.encoding.position_frequencies = j["encoding"].value("position_frequencies", 6);
            f.encoding.direction_frequencies = j["encoding"].value("direction_frequencies", 4);
        }
        const auto code = j.value("motion_code", std::vector<double>{});
        f.motion_code = Eigen::Map<const Eigen::VectorXd>(code.data(), static_cast<Eigen::Index>(code.size()));
        if (j.contains("global_position")) f.global_position = detail::vec3(j["global_position"]);
    } else {
        throw Error("unknown field type '" + type + "' (expected sphere, capsule, plane, template or decoded)");
    }
    return f;
}

Eigen::VectorXd vector_from_json(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Component JSON
// ---------------------------------------------------------------------------

Camera camera_from_json(const json& j)
{
    const int width = j.value("width", config::kServeImageSize);
    const int height = j.value("height", config::kServeImageSize);
    Camera c;
    if (j.contains("eye")) {
        const double fov = number(j, "fov_y_deg", 40.0) * std::numbers::pi / 180.0;
        const Vec3 up = j.contains("up") ? detail::vec3(j["up"]) : Vec3(0, 1, 0);
        c = Camera::look_at(detail::vec3(j["eye"]), detail::vec3(j.at("target")), up, fov, width, height);
    } else {
        c.width = width;
        c.height = height;
        c.fx = number(j, "fx", 1.0);
        c.fy = number(j, "fy", c.fx);
        c.cx = number(j, "cx", 0.5 * width);
        c.cy = number(j, "cy", 0.5 * height);
        const auto m = j.at("world_to_camera").get<std::vector<double>>();
        if (m.size() != 16) throw DimensionError("world_to_camera must list 16 numbers (row-major 4x4)");
        Eigen::Matrix4d M = Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(m.data());
        c.world_to_camera.matrix() = M;
    }
    validate(c);
    return c;
}

json to_json(const Camera& c)
{
    std::vector<double> m(16);
    Eigen::Map<Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(m.data()) = c.world_to_camera.matrix();
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
            {"world_to_camera", m}};
}

RenderSettings render_settings_from_json(const json& j)
{
    RenderSettings s;
    s.z = number(j, "z", s.z);
    s.d_max = number(j, "d_max", s.d_max);
    s.profile.samples = j.value("samples", s.profile.samples);
    s.profile.jitter = j.value("jitter", s.profile.jitter);
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("flat_color")) s.flat_color = detail::vec3(j["flat_color"]);
    if (!(s.z > 0.0)) throw DomainError("render sharpness z must be positive");
    if (!(s.d_max > 0.0)) throw DomainError("render d_max must be positive");
    if (s.profile.samples < 2) throw DomainError("render needs at least 2 samples per ray");
    return s;
}

json to_json(const RenderSettings& s)
{
    return {{"z", s.z},
            {"d_max", s.d_max},
            {"samples", s.profile.samples},
            {"jitter", s.profile.jitter},
            {"seed", s.seed},
            {"flat_color", detail::to_json(s.flat_color)}};
}

AnalyticSdf analytic_sdf_from_json(const json& j)
{
    AnalyticSdf a;
    a.scale = number(j, "scale", 1.0);
    const std::string type = j.at("type").get<std::string>();
    if (type == "sphere") {
        a.shape = Sphere{j.contains("center") ? detail::vec3(j["center"]) : Vec3::Zero(), number(j, "radius", 1.0)};
    } else if (type == "capsule") {
        a.shape = Capsule{detail::vec3(j.at("a")), detail::vec3(j.at("b")), number(j, "radius", 0.1)};
    } else if (type == "plane") {
        a.shape = Plane{detail::vec3(j.at("normal")).normalized(), number(j, "offset", 0.0)};
    } else {
        throw Error("unknown analytic SDF '" + type + "'");
    }
    return a;
}

json to_json(const AnalyticSdf& a)
{
    return std::visit(
        [&](const auto& s) -> json {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Sphere>) {
                return {{"type", "sphere"}, {"center", detail::to_json(s.center)}, {"radius", s.radius}, {"scale", a.scale}};
            } else if constexpr (std::is_same_v<T, Capsule>) {
                return {{"type", "capsule"}, {"a", detail::to_json(s.a)}, {"b", detail::to_json(s.b)},
                        {"radius", s.radius}, {"scale", a.scale}};
            } else {
                return {{"type", "plane"}, {"normal", detail::to_json(s.normal)}, {"offset", s.offset}, {"scale", a.scale}};
            }
        },
        a.shape);
}

SkinWeights skin_from_json(const json& j, int vertex_count, int joint_count)
{
    const auto& indices = j.at("indices");
    const auto& values = j.at("values");
    if (indices.size() != static_cast<std::size_t>(vertex_count) || values.size() != indices.size()) {
        throw DimensionError("skin weights list " + std::to_string(indices.size()) + " vertices, template has " +
                             std::to_string(vertex_count));
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t v = 0; v < indices.size(); ++v) {
        if (indices[v].size() != values[v].size()) throw DimensionError("skin index and value lists differ in length");
        for (std::size_t i = 0; i < indices[v].size(); ++i) {
            const int joint = indices[v][i].get<int>();
            if (joint < 0 || joint >= joint_count) {
                throw DomainError("skin weight of vertex " + std::to_string(v) + " names joint " +
                                  std::to_string(joint));
            }
            triplets.emplace_back(static_cast<int>(v), joint, values[v][i].get<double>());
        }
    }
    SkinWeights w(vertex_count, joint_count);
    w.setFromTriplets(triplets.begin(), triplets.end());
    return w;
}

json skin_to_json(const SkinWeights& w)
{
    json indices = json::array(), values = json::array();
    for (int v = 0; v < w.rows(); ++v) {
        json iv = json::array(), vv = json::array();
        for (SkinWeights::InnerIterator it(w, v); it; ++it) {
            iv.push_back(it.col());
            vv.push_back(it.value());
        }
        indices.push_back(iv);
        values.push_back(vv);
    }
    return {{"indices", indices}, {"values", values}};
}

// ---------------------------------------------------------------------------
// Scene files
// ---------------------------------------------------------------------------

void validate(const SceneDescription& s)
{
    validate(s.mesh);
    validate(s.camera);
    if (s.skeleton) {
        validate(*s.skeleton);
        if (!s.mesh.skin) throw Error("scene has a skeleton but the template has no skinning weights");
        if (s.mesh.skin->cols() != s.skeleton->joint_count()) {
            throw DimensionError("skin weights reference " + std::to_string(s.mesh.skin->cols()) +
                                 " joints, skeleton has " + std::to_string(s.skeleton->joint_count()));
        }
    }
    if (s.motion) {
        if (!s.skeleton) throw Error("scene has a motion but no skeleton");
        if (s.motion->frames.cols() != s.dof_count()) throw DimensionError("motion width does not match the DoF count");
        if (s.motion->frame_count() < 1) throw DimensionError("motion has no frames");
        if (s.frame < 0 || s.frame >= s.motion->frame_count()) {
            throw DomainError("frame " + std::to_string(s.frame) + " outside the motion's " +
                              std::to_string(s.motion->frame_count()) + " frames");
        }
    }
    if (s.pose && s.pose->size() != s.dof_count()) {
        throw DimensionError("pose lists " + std::to_string(s.pose->size()) + " DoFs, skeleton has " +
                             std::to_string(s.dof_count()));
    }
    if (s.graph) {
        validate(*s.graph, s.mesh.vertex_count());
        if (s.params && (s.params->rotations.rows() != s.graph->node_count() ||
                         s.params->displacements.rows() != s.mesh.vertex_count())) {
            throw DimensionError("graph params do not match the graph");
        }
    } else if (s.params) {
        throw Error("scene has graph params but no graph");
    }
    if (s.field.kind == FieldKind::Decoded) {
        validate(s.field.triplane);
        validate(s.field.geometry);
        if (s.field.motion_encoder && !s.skeleton) throw Error("a motion encoder needs a skeleton");
    }
}

SceneDescription parse_scene(const json& j, const fs::path& base_dir)
{
    if (!j.is_object()) throw Error("scene must be a JSON object");
    SceneDescription s;
    s.mesh = load_obj(base_dir / j.at("template").get<std::string>());
    if (j.contains("skeleton")) s.skeleton = skeleton_from_json(inline_or_file(j["skeleton"], base_dir));
    if (j.contains("skin")) {
        if (!s.skeleton) throw Error("skin weights need a skeleton");
        s.mesh.skin = skin_from_json(inline_or_file(j["skin"], base_dir), s.mesh.vertex_count(),
                                     s.skeleton->joint_count());
    }
    if (j.contains("graph")) s.graph = graph_from_json(inline_or_file(j["graph"], base_dir), s.mesh);
    if (j.contains("graph_params")) {
        if (!s.graph) throw Error("graph_params need a graph");
        s.params = params_from_json(inline_or_file(j["graph_params"], base_dir), s.graph->node_count(),
                                    s.mesh.vertex_count());
    }
    if (j.contains("motion")) s.motion = motion_from_json(inline_or_file(j["motion"], base_dir));
    s.frame = j.value("frame", 0);
    if (j.contains("pose")) s.pose = vector_from_json(j["pose"]);
    s.field = field_from_json(j.value("field", json{{"type", "template"}}), base_dir);
    s.camera = camera_from_json(j.at("camera"));
    s.settings = render_settings_from_json(j.value("render", json::object()));
    validate(s);
    return s;
}

SceneDescription load_scene(const fs::path& path)
{
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return parse_scene(j, path.parent_path());
}

void save_scene(const fs::path& path, const SceneDescription& s)
{
    validate(s);
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    const std::string stem = path.stem().string();
    json j;
    const std::string obj = stem + "_template.obj";
    save_obj(dir / obj, s.mesh);
    j["template"] = obj;
    if (s.skeleton) j["skeleton"] = to_json(*s.skeleton);
    if (s.mesh.skin && s.skeleton) j["skin"] = skin_to_json(*s.mesh.skin);
    if (s.graph) j["graph"] = to_json(*s.graph);
    if (s.params) j["graph_params"] = to_json(*s.params);
    if (s.motion) j["motion"] = to_json(*s.motion);
    j["frame"] = s.frame;
    if (s.pose) j["pose"] = std::vector<double>(s.pose->data(), s.pose->data() + s.pose->size());

    const FieldDescription& f = s.field;
    switch (f.kind) {
    case FieldKind::Analytic: j["field"] = to_json(f.analytic); break;
    case FieldKind::TemplateDistance: j["field"] = {{"type", "template"}}; break;
    case FieldKind::Decoded: {
        json fj = {{"type", "decoded"},
                   {"d_max", f.d_max},
                   {"encoding",
                    {{"position_frequencies", f.encoding.position_frequencies},
                     {"direction_frequencies", f.encoding.direction_frequencies}}},
                   {"motion_code", std::vector<double>(f.motion_code.data(), f.motion_code.data() + f.motion_code.size())},
                   {"global_position", detail::to_json(f.global_position)}};
        fj["triplane"] = stem + "_triplane.trit";
        save_triplane(dir / fj["triplane"].get<std::string>(), f.triplane);
        fj["geometry"] = stem + "_geometry.json";
        save_mlp(dir / fj["geometry"].get<std::string>(), f.geometry);
        if (f.color) {
            fj["color"] = stem + "_color.json";
            save_mlp(dir / fj["color"].get<std::string>(), *f.color);
        }
        if (f.motion_encoder) {
            fj["motion_encoder"] = stem + "_motion_encoder.json";
            save_mlp(dir / fj["motion_encoder"].get<std::string>(), *f.motion_encoder);
        }
        j["field"] = fj;
        break;
    }
    }
    j["camera"] = to_json(s.camera);
    j["render"] = to_json(s.settings);
    atomic_write(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Posing
// ---------------------------------------------------------------------------

Eigen::VectorXd scene_pose(const SceneDescription& s)
{
    if (s.pose) return *s.pose;
    if (s.motion) return s.motion->frames.row(s.frame).transpose();
    return Eigen::VectorXd::Zero(s.dof_count());
}

SkeletalMotion pose_window(const SceneDescription& s, const Eigen::VectorXd& pose, int frame)
{
    if (pose.size() != s.dof_count()) {
        throw DimensionError("pose lists " + std::to_string(pose.size()) + " DoFs, skeleton has " +
                             std::to_string(s.dof_count()));
    }
    SkeletalMotion m;
    if (s.motion && frame >= 0 && frame < s.motion->frame_count()) {
        m = s.motion->window(frame);
    } else {
        m.window = pose.transpose().replicate(config::kMotionWindow, 1);
        m.frame = std::max(frame, 0);
    }
    m.window.row(m.window.rows() - 1) = pose.transpose();
    return m;
}

Positions pose_template(const SceneDescription& s, const SkeletalMotion& window)
{
    const EmbeddedGraph* graph = s.graph ? &*s.graph : nullptr;
    Positions canonical = s.mesh.vertices;
    if (graph) {
        const GraphParams params = s.params ? *s.params : GraphParams::identity(graph->node_count(), s.mesh.vertex_count());
        canonical = embedded_deform(s.mesh.vertices, *graph, params);
    }
    if (!s.skeleton) return canonical;
    return dq_skin(canonical, *s.mesh.skin, forward_kinematics(*s.skeleton, window.current()));
}

SdfField bind_field(const SceneDescription& s, const Positions& posed, const SkeletalMotion& window)
{
    const FieldDescription& f = s.field;
    switch (f.kind) {
    case FieldKind::Analytic: return f.analytic;
    case FieldKind::TemplateDistance: return MeshSdf{std::make_shared<ClosestPointIndex>(s.mesh, posed)};
    case FieldKind::Decoded: {
        DecodedField d;
        d.mapping = std::make_shared<ClosestPointIndex>(s.mesh, posed);
        d.d_max = f.d_max;
        d.triplane = f.triplane;
        d.geometry = f.geometry;
        d.color = f.color;
        d.encoding = f.encoding;
        d.motion_code = f.motion_encoder ? global_motion_code(*f.motion_encoder, *s.skeleton, window) : f.motion_code;
        d.global_position = f.global_position;
        validate(d);
        return d;
    }
    }
    throw Error("unknown field kind");
}

Scene make_render_scene(const SceneDescription& s, const Positions& posed, const SkeletalMotion& window)
{
    Scene scene;
    scene.mesh = s.mesh;
    scene.positions = posed;
    scene.field = bind_field(s, posed, window);
    scene.camera = s.camera;
    scene.settings = s.settings;
    if (s.field.kind == FieldKind::Decoded) scene.settings.d_max = s.field.d_max;
    return scene;
}

}  // namespace avatar
