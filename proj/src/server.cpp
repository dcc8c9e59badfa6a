#include "broom/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "broom/experiment.hpp"

namespace broom::experiment {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

std::string_view mime_type(const std::string& ext) {
    if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json" || ext == ".map") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".ico") return "image/x-icon";
    if (ext == ".woff2") return "font/woff2";
    return "application/octet-stream";
}

// A path under root for a URL target, or nothing when it would escape root.
std::optional<std::filesystem::path> static_path(const std::string& root, std::string_view target) {
    std::string t(target.substr(0, target.find_first_of("?#")));
    if (t.empty() || t[0] != '/') return std::nullopt;
    if (t.back() == '/') t += "index.html";
    const std::filesystem::path rel = std::filesystem::path(t.substr(1)).lexically_normal();
    for (const auto& part : rel) {
        if (part == "..") return std::nullopt;
    }
    return std::filesystem::path(root) / rel;
}

struct Inbound {
    enum Kind { Open, Text, Close, Stop } kind;
    int client;
    std::string text;
};

}  // namespace

struct Server::Impl {
    class WsConn;
    class HttpConn;

    InstanceTree tree;
    SimConfig cfg;
    ServeOptions opts;
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::thread net_thread;
    std::thread sim_thread;
    int next_client = 0;
    unsigned short bound_port = 0;
    std::map<int, std::shared_ptr<WsConn>> conns;  // io thread only
    bool stopping = false;                          // io thread only

    std::mutex mu;
    std::condition_variable cv;
    std::deque<Inbound> inbox;

    Impl(const InstanceTree& t, const SimConfig& c, const ServeOptions& o) : tree(t), cfg(c), opts(o) {
        beast::error_code ec;
        const auto addr = net::ip::make_address(opts.host, ec);
        if (ec) throw Error(code::io, "bad host '" + opts.host + "': " + ec.message());
        const tcp::endpoint ep{addr, opts.port};
        acceptor.open(ep.protocol(), ec);
        if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
        if (!ec) acceptor.bind(ep, ec);
        if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
        if (ec) throw Error(code::io, "cannot listen on " + opts.host + ":" + std::to_string(opts.port) + ": " + ec.message());
        bound_port = acceptor.local_endpoint().port();
    }

    void push(Inbound in) {
        {
            std::lock_guard<std::mutex> lock(mu);
            inbox.push_back(std::move(in));
        }
        cv.notify_one();
    }

    // ------------------------------------------------------ network side
    class WsConn : public std::enable_shared_from_this<WsConn> {
    public:
        WsConn(tcp::socket&& s, Impl& hub, int id) : ws_(std::move(s)), hub_(hub), id_(id) {}

        void start(http::request<http::string_body> req) {
            ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
            ws_.text(true);
            ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
                if (ec) return;
                self->hub_.conns[self->id_] = self;
                self->hub_.push({Inbound::Open, self->id_, {}});
                self->read();
            });
        }

        void send(std::string text) {
            if (gone_) return;
            queue_.push_back(std::move(text));
            if (queue_.size() == 1) write();
        }

        void close_when_flushed() {
            closing_ = true;
            if (queue_.empty()) close();
        }

    private:
        void read() {
            ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) return self->gone();
                std::string text = beast::buffers_to_string(self->buf_.data());
                self->buf_.consume(self->buf_.size());
                self->hub_.push({Inbound::Text, self->id_, std::move(text)});
                self->read();
            });
        }

        void write() {
            ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) return self->gone();
                self->queue_.pop_front();
                if (!self->queue_.empty()) {
                    self->write();
                } else if (self->closing_) {
                    self->close();
                }
            });
        }

        void close() {
            if (closed_ || gone_) return;
            closed_ = true;
            ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->gone(); });
        }

        void gone() {
            if (gone_) return;
            gone_ = true;
            queue_.clear();
            hub_.conns.erase(id_);
            hub_.push({Inbound::Close, id_, {}});
            if (hub_.stopping && hub_.conns.empty()) hub_.ioc.stop();
        }

        websocket::stream<beast::tcp_stream> ws_;
        Impl& hub_;
        int id_;
        beast::flat_buffer buf_;
        std::deque<std::string> queue_;
        bool closing_ = false;
        bool closed_ = false;
        bool gone_ = false;
    };

    class HttpConn : public std::enable_shared_from_this<HttpConn> {
    public:
        HttpConn(tcp::socket&& s, Impl& hub) : stream_(std::move(s)), hub_(hub) {}

        void start() {
            stream_.expires_after(std::chrono::seconds(30));
            http::async_read(stream_, buf_, req_,
                             [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
        }

    private:
        void on_read(beast::error_code ec) {
            if (ec) return;
            if (websocket::is_upgrade(req_) && req_.target() == "/experiment") {
                stream_.expires_never();
                auto ws = std::make_shared<WsConn>(stream_.release_socket(), hub_, hub_.next_client++);
                ws->start(std::move(req_));
                return;
            }
            res_.version(req_.version());
            res_.keep_alive(false);
            res_.set(http::field::server, "broom/" BROOM_VERSION);
            std::optional<std::filesystem::path> file;
            if (!hub_.opts.static_dir.empty()) file = static_path(hub_.opts.static_dir, std::string_view(req_.target().data(), req_.target().size()));
            std::ifstream in;
            if (file && std::filesystem::is_regular_file(*file)) in.open(*file, std::ios::binary);
            if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
                res_.result(http::status::method_not_allowed);
                res_.set(http::field::content_type, "text/plain");
                res_.body() = "method not allowed\n";
            } else if (!in.is_open()) {
                res_.result(http::status::not_found);
                res_.set(http::field::content_type, "text/plain");
                res_.body() = "not found\n";
            } else {
                std::ostringstream body;
                body << in.rdbuf();
                res_.result(http::status::ok);
                res_.set(http::field::content_type, std::string(mime_type(file->extension().string())));
                if (req_.method() == http::verb::get) res_.body() = body.str();
            }
            res_.prepare_payload();
            http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code, std::size_t) {
                beast::error_code ignored;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
            });
        }

        beast::tcp_stream stream_;
        Impl& hub_;
        beast::flat_buffer buf_;
        http::request<http::string_body> req_;
        http::response<http::string_body> res_;
    };

    void accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket s) {
            if (ec) return;
            std::make_shared<HttpConn>(std::move(s), *this)->start();
            accept();
        });
    }

    void deliver(std::vector<Frame> frames, bool last) {
        net::post(ioc, [this, frames = std::move(frames), last] {
            for (const auto& f : frames) {
                if (f.client < 0) {
                    for (auto& [id, c] : conns) c->send(f.text);
                } else if (auto it = conns.find(f.client); it != conns.end()) {
                    it->second->send(f.text);
                }
            }
            if (!last) return;
            beast::error_code ignored;
            acceptor.close(ignored);
            stopping = true;
            if (conns.empty()) return ioc.stop();
            const auto open = conns;
            for (auto& [id, c] : open) c->close_when_flushed();
            auto timer = std::make_shared<net::steady_timer>(ioc, std::chrono::seconds(2));
            timer->async_wait([this, timer](beast::error_code) { ioc.stop(); });
        });
    }

    // --------------------------------------------------- simulation side
    void simulate() {
        using clock = std::chrono::steady_clock;
        Session session(tree, cfg, opts.speed, opts.start_paused);
        auto next = clock::now();
        bool was_running = false;
        double speed = session.speed();
        while (true) {
            std::deque<Inbound> batch;
            {
                std::unique_lock<std::mutex> lock(mu);
                if (session.paused()) {
                    cv.wait(lock, [&] { return !inbox.empty(); });
                } else {
                    cv.wait_until(lock, next, [&] { return !inbox.empty(); });
                }
                batch.swap(inbox);
            }
            std::vector<Frame> out;
            auto add = [&](std::vector<Frame> f) { out.insert(out.end(), f.begin(), f.end()); };
            for (auto& in : batch) {
                if (session.stopped()) break;
                switch (in.kind) {
                    case Inbound::Open: add(session.connect(in.client)); break;
                    case Inbound::Close: session.disconnect(in.client); break;
                    case Inbound::Text: add(session.handle(in.client, in.text)); break;
                    case Inbound::Stop: {
                        Command c;
                        c.kind = CommandKind::Shutdown;
                        add(session.apply(-1, c));
                        break;
                    }
                }
            }
            if (session.stopped()) {
                deliver(std::move(out), true);
                return;
            }
            const bool running = !session.paused();
            if (running && (!was_running || speed != session.speed())) next = clock::now();
            was_running = running;
            speed = session.speed();
            const auto now = clock::now();
            if (running && now >= next) {
                add(session.tick(std::chrono::duration<double, std::milli>(now - next).count()));
                next += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(cfg.dt / speed));
            }
            if (!out.empty()) deliver(std::move(out), false);
        }
    }
};

Server::Server(const InstanceTree& tree, const SimConfig& cfg, const ServeOptions& opts)
    : impl_(std::make_unique<Impl>(tree, cfg, opts)) {}

Server::~Server() {
    if (impl_->sim_thread.joinable() || impl_->net_thread.joinable()) {
        stop();
        wait();
    }
}

unsigned short Server::port() const { return impl_->bound_port; }

void Server::start() {
    impl_->accept();
    impl_->net_thread = std::thread([this] { impl_->ioc.run(); });
    impl_->sim_thread = std::thread([this] { impl_->simulate(); });
}

void Server::wait() {
    if (impl_->sim_thread.joinable()) impl_->sim_thread.join();
    if (impl_->net_thread.joinable()) impl_->net_thread.join();
}

void Server::stop() { impl_->push({Inbound::Stop, -1, {}}); }

}  // namespace broom::experiment
