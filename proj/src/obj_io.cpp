#include "avatar/error.hpp"
#include "avatar/io.hpp"
#include "avatar/mesh.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace avatar {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

double parse_double(std::string_view token, const std::string& source, std::size_t line)
{
    // std::from_chars for double is not available on every toolchain we target.
    std::string copy(token);
    char* end = nullptr;
    const double value = std::strtod(copy.c_str(), &end);
    if (end != copy.c_str() + copy.size()) throw ParseError(source, line, "bad number '" + copy + "'");
    return value;
}

long parse_index(std::string_view token, const std::string& source, std::size_t line)
{
    long value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError(source, line, "bad index '" + std::string(token) + "'");
    }
    return value;
}

// OBJ indices are 1-based; negative values count back from the end.
int resolve(long index, std::size_t count, const char* kind, const std::string& source, std::size_t line)
{
    long resolved = index > 0 ? index - 1 : static_cast<long>(count) + index;
    if (index == 0 || resolved < 0 || resolved >= static_cast<long>(count)) {
        throw ParseError(source, line,
                         std::string(kind) + " index " + std::to_string(index) + " out of range (" +
                             std::to_string(count) + " defined)");
    }
    return static_cast<int>(resolved);
}

}  // namespace

TriangleMesh parse_obj(std::string_view text, const std::string& source)
{
    std::vector<Vec3> positions;
    std::vector<Vec2> texcoords;
    struct Corner {
        long v, vt;
    };
    struct RawFace {
        Corner c[3];
        std::size_t line;
    };
    std::vector<RawFace> raw;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = trim(text.substr(pos, eol - pos));
        ++line_no;
        pos = eol + 1;
        if (line.empty() || line.front() == '#') {
            if (eol == text.size()) break;
            continue;
        }
        const auto tokens = split_ws(line);
        const std::string_view tag = tokens.front();
        if (tag == "v") {
            if (tokens.size() < 4) throw ParseError(source, line_no, "vertex needs 3 coordinates");
            positions.emplace_back(parse_double(tokens[1], source, line_no), parse_double(tokens[2], source, line_no),
                                   parse_double(tokens[3], source, line_no));
        } else if (tag == "vt") {
            if (tokens.size() < 3) throw ParseError(source, line_no, "texture coordinate needs 2 values");
            texcoords.emplace_back(parse_double(tokens[1], source, line_no), parse_double(tokens[2], source, line_no));
        } else if (tag == "f") {
            if (tokens.size() != 4) throw ParseError(source, line_no, "only triangular faces are supported");
            RawFace face{};
            face.line = line_no;
            for (int k = 0; k < 3; ++k) {
                const std::string_view corner = tokens[k + 1];
                const std::size_t slash = corner.find('/');
                if (slash == std::string_view::npos) {
                    throw ParseError(source, line_no, "face corner without texture coordinate (missing UV)");
                }
                std::string_view rest = corner.substr(slash + 1);
                const std::size_t slash2 = rest.find('/');
                const std::string_view vt = rest.substr(0, slash2);
                if (vt.empty()) throw ParseError(source, line_no, "face corner without texture coordinate (missing UV)");
                face.c[k] = {parse_index(corner.substr(0, slash), source, line_no), parse_index(vt, source, line_no)};
            }
            raw.push_back(face);
        }
        // vn, o, g, s, usemtl, mtllib: ignored
        if (eol == text.size()) break;
    }

    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(positions.size()), 3);
    for (std::size_t i = 0; i < positions.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = positions[i];
    mesh.faces.resize(static_cast<Eigen::Index>(raw.size()), 3);
    mesh.uv.resize(static_cast<Eigen::Index>(3 * raw.size()), 2);
    for (std::size_t f = 0; f < raw.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            const auto& c = raw[f].c[k];
            mesh.faces(static_cast<Eigen::Index>(f), k) = resolve(c.v, positions.size(), "vertex", source, raw[f].line);
            const int t = resolve(c.vt, texcoords.size(), "texture", source, raw[f].line);
            mesh.uv.row(static_cast<Eigen::Index>(3 * f + k)) = texcoords[t];
        }
    }
    validate(mesh);
    return mesh;
}

TriangleMesh load_obj(const std::filesystem::path& path)
{
    return parse_obj(read_text_file(path), path.string());
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh, const Positions& positions)
{
    require_vertex_array(mesh, positions);
    std::ostringstream out;
    out << std::setprecision(17);
    for (Eigen::Index v = 0; v < positions.rows(); ++v) {
        out << "v " << positions(v, 0) << ' ' << positions(v, 1) << ' ' << positions(v, 2) << '\n';
    }
    std::map<std::pair<double, double>, int> shared;
    std::vector<int> corner_index(static_cast<std::size_t>(mesh.uv.rows()));
    for (Eigen::Index c = 0; c < mesh.uv.rows(); ++c) {
        const auto key = std::make_pair(mesh.uv(c, 0), mesh.uv(c, 1));
        auto [it, inserted] = shared.try_emplace(key, static_cast<int>(shared.size()) + 1);
        if (inserted) out << "vt " << key.first << ' ' << key.second << '\n';
        corner_index[static_cast<std::size_t>(c)] = it->second;
    }
    for (int f = 0; f < mesh.face_count(); ++f) {
        out << 'f';
        for (int k = 0; k < 3; ++k) out << ' ' << mesh.faces(f, k) + 1 << '/' << corner_index[3 * f + k];
        out << '\n';
    }
    atomic_write(path, out.str());
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) { save_obj(path, mesh, mesh.vertices); }

}  // namespace avatar
