#pragma once

#include "avatar/error.hpp"
#include "avatar/types.hpp"

#include <json.hpp>

namespace avatar::detail {

inline Vec3 vec3(const nlohmann::json& j)
{
    if (!j.is_array() || j.size() != 3) throw Error("expected a 3-vector, got " + j.dump());
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Positions rows3(const nlohmann::json& j)
{
    Positions out(static_cast<Eigen::Index>(j.size()), 3);
    for (std::size_t i = 0; i < j.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = vec3(j[i]);
    return out;
}

inline nlohmann::json to_json(const Positions& rows)
{
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out.push_back(to_json(Vec3(rows.row(i))));
    return out;
}

}  // namespace avatar::detail
