#include "avatar/serve.hpp"

#include "avatar/error.hpp"
#include "avatar/io.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

namespace avatar {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

// Counts live connection workers so stop() can wait for them.
struct WorkerCount {
    std::mutex mutex;
    std::condition_variable changed;
    int active = 0;
};

std::string content_type(const std::filesystem::path& path)
{
    const std::string ext = path.extension().string();
    if (ext == ".html") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".png") return "image/png";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(tcp::socket socket, std::shared_ptr<const SceneDescription> scene, int image_size,
                 std::shared_ptr<WorkerCount> workers)
        : ws_(std::move(socket)), session_(std::move(scene), image_size), workers_(std::move(workers))
    {}

    void start(http::request<http::string_body> request)
    {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(request, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->launch_worker();
            self->send(self->session_.snapshot());
            self->read();
        });
    }

    void close()
    {
        net::post(ws_.get_executor(), [self = shared_from_this()] {
            beast::error_code ec;
            beast::get_lowest_layer(self->ws_).socket().close(ec);
        });
        stop_worker();
    }

private:
    void launch_worker()
    {
        {
            std::lock_guard lock(workers_->mutex);
            ++workers_->active;
        }
        std::thread([self = shared_from_this()]() mutable {
            self->work();
            // Drop the connection before signalling, so that stop() never
            // returns while this thread still owns a socket of the server's
            // io_context.
            auto workers = self->workers_;
            self.reset();
            std::lock_guard lock(workers->mutex);
            --workers->active;
            workers->changed.notify_all();
        }).detach();
    }

    void stop_worker()
    {
        {
            std::lock_guard lock(mailbox_mutex_);
            stopping_ = true;
        }
        mailbox_ready_.notify_all();
    }

    void read()
    {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->stop_worker();
                return;
            }
            std::string message = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            if (!self->ws_.got_text()) {
                self->send({{false, nlohmann::json{{"type", "error"},
                                                   {"reason", "client frames must be JSON text"},
                                                   {"generation", nullptr}}
                                        .dump()}});
                self->read();
                return;
            }
            {
                std::lock_guard lock(self->mailbox_mutex_);
                self->mailbox_.push_back(std::move(message));
            }
            self->mailbox_ready_.notify_one();
            self->read();
        });
    }

    void work()
    {
        for (;;) {
            std::vector<std::string> batch;
            {
                std::unique_lock lock(mailbox_mutex_);
                mailbox_ready_.wait(lock, [&] { return stopping_ || !mailbox_.empty(); });
                if (stopping_) break;
                batch.assign(std::make_move_iterator(mailbox_.begin()), std::make_move_iterator(mailbox_.end()));
                mailbox_.clear();
            }
            std::vector<WireFrame> frames;
            try {
                frames = session_.handle_batch(batch);
            } catch (const std::exception& e) {
                frames.push_back({false, nlohmann::json{{"type", "error"},
                                                        {"reason", std::string("compute failed: ") + e.what()},
                                                        {"generation", session_.state().generation}}
                                             .dump()});
            }
            send(std::move(frames));
        }
    }

    // Queues frames for writing on the network thread, preserving order.
    void send(std::vector<WireFrame> frames)
    {
        net::post(ws_.get_executor(), [self = shared_from_this(), frames = std::move(frames)]() mutable {
            const bool idle = self->outbox_.empty();
            for (auto& f : frames) self->outbox_.push_back(std::move(f));
            if (idle && !self->outbox_.empty()) self->write_next();
        });
    }

    void write_next()
    {
        const WireFrame& f = outbox_.front();
        ws_.binary(f.binary);
        ws_.async_write(net::buffer(f.payload), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->outbox_.clear();
                self->stop_worker();
                return;
            }
            self->outbox_.pop_front();
            if (!self->outbox_.empty()) self->write_next();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    Session session_;
    std::shared_ptr<WorkerCount> workers_;

    std::mutex mailbox_mutex_;
    std::condition_variable mailbox_ready_;
    std::deque<std::string> mailbox_;
    bool stopping_ = false;

    std::deque<WireFrame> outbox_;  // touched only on the network thread
};

// Reads the first HTTP request of a connection and either upgrades it or
// serves a static file.
class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    using Upgrade = std::function<void(tcp::socket, http::request<http::string_body>)>;

    HttpConnection(tcp::socket socket, std::optional<std::filesystem::path> ui_dir, Upgrade upgrade)
        : stream_(std::move(socket)), ui_dir_(std::move(ui_dir)), upgrade_(std::move(upgrade))
    {}

    void start() { read(); }

private:
    void read()
    {
        request_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, request_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (websocket::is_upgrade(self->request_)) {
                self->stream_.expires_never();
                self->upgrade_(self->stream_.release_socket(), std::move(self->request_));
                return;
            }
            self->respond();
        });
    }

    void respond()
    {
        auto response = std::make_shared<http::response<http::string_body>>();
        response->version(request_.version());
        response->keep_alive(false);
        response->set(http::field::server, "avatar-serve");
        const std::string target(request_.target());
        std::filesystem::path file;
        bool ok = false;
        if (ui_dir_ && request_.method() == http::verb::get && target.find("..") == std::string::npos) {
            std::string local = target.substr(0, target.find('?'));
            if (local.empty() || local.back() == '/') local += "index.html";
            file = *ui_dir_ / local.substr(1);
            ok = std::filesystem::is_regular_file(file);
        }
        if (ok) {
            response->result(http::status::ok);
            response->set(http::field::content_type, content_type(file));
            response->body() = read_text_file(file);
        } else {
            response->result(http::status::not_found);
            response->set(http::field::content_type, "text/plain");
            response->body() = ui_dir_ ? "not found\n" : "this server speaks WebSocket; start it with --ui to serve files\n";
        }
        response->prepare_payload();
        http::async_write(stream_, *response, [self = shared_from_this(), response](beast::error_code, std::size_t) {
            beast::error_code ec;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    std::optional<std::filesystem::path> ui_dir_;
    Upgrade upgrade_;
};

}  // namespace

struct Server::Impl {
    std::shared_ptr<const SceneDescription> scene;
    ServeOptions options;
    net::io_context ioc{1};
    tcp::acceptor acceptor{ioc};
    std::thread thread;
    std::shared_ptr<WorkerCount> workers = std::make_shared<WorkerCount>();
    std::mutex connections_mutex;
    std::vector<std::weak_ptr<WsConnection>> connections;
    std::atomic<bool> stopped{false};

    void accept()
    {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;  // acceptor closed
            std::make_shared<HttpConnection>(std::move(socket), options.ui_dir,
                                             [this](tcp::socket s, http::request<http::string_body> req) {
                                                 auto c = std::make_shared<WsConnection>(
                                                     std::move(s), scene, options.image_size, workers);
                                                 {
                                                     std::lock_guard lock(connections_mutex);
                                                     if (stopped) return;  // raced with stop()
                                                     connections.push_back(c);
                                                 }
                                                 c->start(std::move(req));
                                             })
                ->start();
            accept();
        });
    }
};

Server::Server(std::shared_ptr<const SceneDescription> scene, const ServeOptions& options)
    : impl_(std::make_unique<Impl>())
{
    if (!scene) throw Error("server needs a scene");
    if (options.ui_dir && !std::filesystem::is_directory(*options.ui_dir)) {
        throw Error("UI directory " + options.ui_dir->string() + " does not exist");
    }
    impl_->scene = std::move(scene);
    impl_->options = options;
    const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
    beast::error_code ec;
    impl_->acceptor.open(endpoint.protocol(), ec);
    if (!ec) impl_->acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) impl_->acceptor.bind(endpoint, ec);
    if (!ec) impl_->acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error("cannot listen on " + options.address + ":" + std::to_string(options.port) + ": " + ec.message());
    impl_->accept();
}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() { impl_->ioc.run(); }

void Server::start()
{
    impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::stop()
{
    if (impl_->stopped.exchange(true)) return;
    net::post(impl_->ioc, [this] {
        beast::error_code ec;
        impl_->acceptor.close(ec);
    });
    {
        std::lock_guard lock(impl_->connections_mutex);
        for (auto& weak : impl_->connections) {
            if (auto c = weak.lock()) c->close();
        }
    }
    {
        std::unique_lock lock(impl_->workers->mutex);
        impl_->workers->changed.wait(lock, [&] { return impl_->workers->active == 0; });
    }
    impl_->ioc.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace avatar
