#include "avatar/io.hpp"
#include "avatar/mesh.hpp"
#include "avatar/scene.hpp"
#include "support.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace avatar;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& stdout_file = {})
{
    std::string command = std::string(AVATAR_CLI) + " " + args;
    command += stdout_file.empty() ? " > /dev/null" : " > '" + stdout_file.string() + "'";
    command += " 2> /dev/null";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(path));
    for (std::string line; std::getline(in, line);) {
        rows.emplace_back();
        std::istringstream cells(line);
        for (std::string cell; std::getline(cells, cell, ',');) rows.back().push_back(cell);
    }
    return rows;
}

// Demo scene with a template-distance field, written once per test run.
fs::path demo_scene()
{
    static const fs::path path = [] {
        const fs::path dir = testing::scratch_dir("cli_demo");
        const std::string cmd = std::string(AVATAR_DEMO) + " --out '" + (dir / "scene.json").string() +
                                "' --frames 6 --size 48";
        REQUIRE(std::system(cmd.c_str()) == 0);
        return dir / "scene.json";
    }();
    return path;
}

}  // namespace

TEST_CASE("usage errors exit with 2")
{
    CHECK(run("") == 2);
    CHECK(run("teleport") == 2);
    CHECK(run("render --out x.png") == 2);               // missing --scene
    CHECK(run("map --mesh m.obj --points p.trit") == 2);  // missing --out
    CHECK(run("losses") == 2);                            // nothing to do
    CHECK(run("collisions --dmax abc") == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("data errors exit with 1")
{
    const fs::path dir = testing::scratch_dir("cli_errors");
    CHECK(run("render --scene '" + (dir / "missing.json").string() + "' --out '" + (dir / "x.png").string() + "'") == 1);
    std::ofstream(dir / "bad.trit") << "not a tensor";
    save_obj(dir / "m.obj", parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n"));
    CHECK(run("map --mesh '" + (dir / "m.obj").string() + "' --points '" + (dir / "bad.trit").string() + "' --out '" +
              (dir / "u.trit").string() + "'") == 1);
    write_tensor(dir / "flat.trit", to_tensor(Eigen::MatrixXd::Zero(4, 2)));
    CHECK(run("map --mesh '" + (dir / "m.obj").string() + "' --points '" + (dir / "flat.trit").string() + "' --out '" +
              (dir / "u.trit").string() + "'") == 1);
    CHECK(run("collisions --dmax 0.01,-0.02") == 1);
    CHECK_FALSE(fs::exists(dir / "u.trit"));
}

TEST_CASE("map writes the UTTS tensor and the collision CSV")
{
    const fs::path dir = testing::scratch_dir("cli_map");
    save_obj(dir / "tri.obj", parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n"));
    Eigen::MatrixXd points(3, 3);
    points << 0.25, 0.25, 0.01,  // face interior, above
        0.25, 0.25, -0.5,        // beyond the shell
        -0.01, -0.01, 0.0;       // nearest to vertex 0
    write_tensor(dir / "p.trit", to_tensor(points));
    REQUIRE(run("map --mesh '" + (dir / "tri.obj").string() + "' --points '" + (dir / "p.trit").string() +
                "' --dmax 0.04 --out '" + (dir / "u.trit").string() + "'") == 0);
    const Tensor u = read_tensor(dir / "u.trit");
    REQUIRE(u.dims == std::vector<std::uint32_t>{3, 5});
    const Eigen::MatrixXd m = to_matrix(u);
    CHECK(m(0, 0) == doctest::Approx(0.25));
    CHECK(m(0, 1) == doctest::Approx(0.25));
    CHECK(m(0, 2) == doctest::Approx(0.01));
    CHECK(m(0, 3) == 0.0);
    CHECK(m(0, 4) == 0.0);
    CHECK(m(1, 4) == 1.0);
    CHECK(m(2, 3) == 2.0);

    const auto csv = read_csv(dir / "u_collisions.csv");
    REQUIRE(csv.size() == 2);
    CHECK(csv[0] == std::vector<std::string>{"d_max", "face_frac", "edge_frac", "vertex_frac", "out_of_range_frac"});
    CHECK(std::stod(csv[1][0]) == 0.04);
    CHECK(std::stod(csv[1][4]) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("collisions: monotone ratio column, deterministic for a seed")
{
    const fs::path dir = testing::scratch_dir("cli_collisions");
    REQUIRE(run("collisions --dmax 0.01,0.02,0.04,0.08 --samples 5000 --seed 3 --out '" + (dir / "a.csv").string() + "'") ==
            0);
    REQUIRE(run("collisions --dmax 0.01,0.02,0.04,0.08 --samples 5000 --seed 3", dir / "b.csv") == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    const auto csv = read_csv(dir / "a.csv");
    REQUIRE(csv.size() == 5);
    CHECK(csv[0].back() == "collision_ratio");
    double previous = -1.0;
    for (std::size_t r = 1; r < csv.size(); ++r) {
        const double ratio = std::stod(csv[r].back());
        CHECK(ratio >= previous);
        CHECK(ratio == doctest::Approx(std::stod(csv[r][2]) + std::stod(csv[r][3])));
        previous = ratio;
    }
}

TEST_CASE("losses --check-gradients reports every loss")
{
    const fs::path dir = testing::scratch_dir("cli_losses");
    REQUIRE(run("losses --check-gradients --seed 4 --out '" + (dir / "g.json").string() + "'") == 0);
    const json report = json::parse(slurp(dir / "g.json"));
    CHECK(report.size() == 10);
    for (const auto& [name, err] : report.items()) {
        CAPTURE(name);
        CHECK(err.get<double>() <= 1e-5);
    }
}

TEST_CASE("deform with the zero pose writes the rest template")
{
    const fs::path dir = testing::scratch_dir("cli_deform");
    const SceneDescription scene = load_scene(demo_scene());
    REQUIRE(run("deform --scene '" + demo_scene().string() + "' --dofs 0,0,0,0,0,0,0,0 --out '" +
                (dir / "rest.obj").string() + "' --vertices '" + (dir / "rest.trit").string() + "'") == 0);
    const TriangleMesh rest = load_obj(dir / "rest.obj");
    CHECK(rest.faces == scene.mesh.faces);
    CHECK((rest.vertices - scene.mesh.vertices).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(read_tensor(dir / "rest.trit").dims == std::vector<std::uint32_t>{
                                                     static_cast<std::uint32_t>(scene.mesh.vertex_count()), 3});
    CHECK(run("deform --scene '" + demo_scene().string() + "' --dofs 0,0 --out '" + (dir / "x.obj").string() + "'") == 1);
    CHECK(run("deform --scene '" + demo_scene().string() + "' --frame 6 --out '" + (dir / "x.obj").string() + "'") == 1);
}

TEST_CASE("render writes PNG plus opacity and depth maps, reproducibly")
{
    const fs::path dir = testing::scratch_dir("cli_render");
    const std::string base = "render --scene '" + demo_scene().string() + "' --samples 16 --jitter --seed 5 --frame 2";
    REQUIRE(run(base + " --out '" + (dir / "a.png").string() + "' --stats '" + (dir / "s.json").string() + "'") == 0);
    REQUIRE(run(base + " --out '" + (dir / "b.png").string() + "'") == 0);
    CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
    CHECK(slurp(dir / "a_depth.trit") == slurp(dir / "b_depth.trit"));
    const Image png = read_png(dir / "a.png");
    CHECK(png.width == 48);
    const Tensor opacity = read_tensor(dir / "a_opacity.trit");
    CHECK(opacity.dims == std::vector<std::uint32_t>{48, 48, 1});
    const json stats = json::parse(slurp(dir / "s.json"));
    CHECK(stats["samples"].get<long>() == 16L * stats["foreground_rays"].get<long>());
    CHECK(stats["foreground_rays"].get<long>() > 0);
    // Depth is finite exactly where something was hit.
    const Tensor depth = read_tensor(dir / "a_depth.trit");
    for (std::size_t i = 0; i < depth.values.size(); ++i) {
        if (opacity.values[i] > 0.0f) CHECK(std::isfinite(depth.values[i]));
    }
}

TEST_CASE("refine writes the mesh and a non-increasing loss trace")
{
    const fs::path dir = testing::scratch_dir("cli_refine");
    REQUIRE(run("refine --scene '" + demo_scene().string() + "' --iterations 15 --out '" + (dir / "r.obj").string() +
                "'") == 0);
    const json trace = json::parse(slurp(dir / "r_trace.json"));
    CHECK(trace["frozen"].empty());
    REQUIRE(trace["trace"].size() >= 1);
    for (std::size_t i = 1; i < trace["trace"].size(); ++i) {
        CHECK(trace["trace"][i]["total"].get<double>() <= trace["trace"][i - 1]["total"].get<double>());
    }
    CHECK(load_obj(dir / "r.obj").vertex_count() == trace["vertices"].get<int>());
}

TEST_CASE("bake-textures writes every map")
{
    const fs::path dir = testing::scratch_dir("cli_bake");
    REQUIRE(run("bake-textures --scene '" + demo_scene().string() + "' --frame 4 --resolution 32 --out-dir '" +
                (dir / "tex").string() + "'") == 0);
    for (const char* name : {"position", "velocity", "acceleration", "uv", "normal", "coverage"}) {
        CAPTURE(name);
        const Tensor t = read_tensor(dir / "tex" / (std::string(name) + ".trit"));
        CHECK(t.dims.at(0) == 32);
        CHECK(t.dims.at(1) == 32);
    }
    CHECK(json::parse(slurp(dir / "tex" / "textures.json"))["frame"] == 4);
}
