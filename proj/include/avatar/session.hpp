#pragma once

#include "avatar/scene.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avatar {

enum class ViewMode { Replay, Edit, Orbit };

std::string to_string(ViewMode mode);
ViewMode view_mode_from_string(const std::string& name);

/// What one viewer connection is looking at.
struct SessionState {
    ViewMode mode = ViewMode::Replay;
    int frame = 0;
    Eigen::VectorXd dofs;
    Camera camera;
    std::uint64_t generation = 0;  // tag of the newest accepted request
};

/// One WebSocket frame: JSON text or a binary TRIT tensor.
struct WireFrame {
    bool binary = false;
    std::string payload;
};

/// Protocol state machine behind `serve`, independent of the transport.
///
/// Client messages are JSON objects with a "type" of set_mode, set_frame,
/// set_dofs, set_camera or get_snapshot and an optional unsigned
/// "generation" tag. Accepted updates change the state; compute() then
/// answers with a "mesh" header followed by a binary [N, 3] vertex tensor, a
/// "render" message carrying a base64 PNG and a "stats" message with stage
/// timings, all tagged with the state's generation. Rejected messages
/// produce an "error" frame and leave the state untouched.
class Session {
public:
    explicit Session(std::shared_ptr<const SceneDescription> scene, int image_size = config::kServeImageSize);

    const SessionState& state() const { return state_; }
    const SceneDescription& scene() const { return *scene_; }

    /// Full state for (re)connecting clients: a "snapshot" message with the
    /// DoF descriptor, followed by the face list as a binary [F, 3] tensor.
    std::vector<WireFrame> snapshot() const;

    /// Applies one client message; returns immediate replies (errors, snapshots).
    std::vector<WireFrame> apply(std::string_view text);

    /// True when an accepted update has not been computed yet.
    bool pending() const { return pending_; }

    /// Mesh, render and stats for the current state.
    std::vector<WireFrame> compute();

    /// apply() followed by compute() when the message changed the state.
    std::vector<WireFrame> handle(std::string_view text);

    /// Newest-wins coalescing: every message is applied in order (errors are
    /// still reported) and a single compute answers the last accepted one.
    std::vector<WireFrame> handle_batch(std::span<const std::string> messages);

    /// Posed vertices for the current state.
    Positions posed_vertices() const;

private:
    std::shared_ptr<const SceneDescription> scene_;
    int image_size_;
    SessionState state_;
    bool pending_ = false;
};

/// Camera of the given square size that keeps `camera`'s pose and vertical field of view.
Camera resize_camera(const Camera& camera, int width, int height);

/// Orbit camera around `target`: azimuth about +y from +z, elevation above
/// the xz plane, both in degrees.
Camera orbit_camera(const Vec3& target, double azimuth_deg, double elevation_deg, double distance, double fov_y,
                    int width, int height);

}  // namespace avatar
