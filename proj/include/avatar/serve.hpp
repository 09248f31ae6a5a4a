#pragma once

#include "avatar/session.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace avatar {

struct ServeOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> ui_dir;  // static files served over plain HTTP
    int image_size = config::kServeImageSize;
};

/// WebSocket front end for Session. Every connection gets its own Session
/// and a worker thread that drains the connection's mailbox: messages that
/// arrive while a frame is being computed are coalesced (newest wins) into
/// the next compute. Reads continue on the network thread throughout.
class Server {
public:
    Server(std::shared_ptr<const SceneDescription> scene, const ServeOptions& options);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Port the listener is bound to.
    unsigned short port() const;

    /// Serves until stop() is called from another thread or a signal handler.
    void run();
    /// Runs the service on a background thread.
    void start();
    /// Closes the listener and every connection, then waits for the workers.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace avatar
