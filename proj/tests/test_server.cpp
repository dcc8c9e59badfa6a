#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <fstream>

#include "broom/dsl.hpp"
#include "broom/server.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace broom;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::json;

namespace {

InstanceTree heatcool() {
    auto r = dsl::parse_file(std::string(BROOM_SOURCE_DIR) + "/fixtures/heatcool/heatcool.broom");
    REQUIRE(r.ok());
    return instantiate(*r.model);
}

class Client {
public:
    explicit Client(unsigned short port) : ws_(ioc_) {
        auto& layer = beast::get_lowest_layer(ws_);
        layer.expires_after(std::chrono::seconds(10));
        layer.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
        ws_.handshake("127.0.0.1:" + std::to_string(port), "/experiment");
    }

    void send(const std::string& text) {
        beast::get_lowest_layer(ws_).expires_after(std::chrono::seconds(10));
        ws_.write(net::buffer(text));
    }

    json recv() {
        beast::get_lowest_layer(ws_).expires_after(std::chrono::seconds(10));
        beast::flat_buffer buf;
        ws_.read(buf);
        return json::parse(beast::buffers_to_string(buf.data()));
    }

    json recv_type(const std::string& type) {
        for (int i = 0; i < 10000; ++i) {
            json j = recv();
            if (j["type"] == type) return j;
        }
        FAIL("no frame of type " << type);
        return {};
    }

    bool closed_by_server() {
        try {
            for (int i = 0; i < 100; ++i) recv();
        } catch (const beast::system_error& e) {
            return e.code() == websocket::error::closed;
        }
        return false;
    }

private:
    net::io_context ioc_;
    websocket::stream<beast::tcp_stream> ws_;
};

std::pair<int, std::string> get(unsigned short port, const std::string& target) {
    net::io_context ioc;
    beast::tcp_stream stream(ioc);
    stream.expires_after(std::chrono::seconds(10));
    stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    http::request<http::empty_body> req{http::verb::get, target, 11};
    req.set(http::field::host, "127.0.0.1");
    http::write(stream, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(stream, buf, res);
    return {res.result_int(), res.body()};
}

}  // namespace

TEST_CASE("a WebSocket client drives the experiment and static files are served") {
    const auto dir = std::filesystem::temp_directory_path() / "broom_server_static";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir / "assets");
    std::ofstream(dir / "index.html") << "<title>console</title>";
    std::ofstream(dir / "assets" / "app.js") << "export {};";
    std::ofstream(dir.parent_path() / "broom_server_secret.txt") << "secret";

    SimConfig cfg;
    cfg.dt = 0.01;
    cfg.snapshot_every = 5;
    experiment::ServeOptions opts;
    opts.start_paused = true;
    opts.static_dir = dir.string();
    experiment::Server server(heatcool(), cfg, opts);
    REQUIRE(server.port() != 0);
    server.start();

    CHECK(get(server.port(), "/") == std::pair<int, std::string>{200, "<title>console</title>"});
    CHECK(get(server.port(), "/assets/app.js?v=1") == std::pair<int, std::string>{200, "export {};"});
    CHECK(get(server.port(), "/missing.js").first == 404);
    CHECK(get(server.port(), "/../broom_server_secret.txt").first == 404);
    CHECK(get(server.port(), "/assets/../../broom_server_secret.txt").first == 404);

    Client a(server.port());
    const json hello = a.recv();
    CHECK(hello["type"] == "hello");
    CHECK(hello["model"] == "HeatCool");
    CHECK(hello["paused"] == true);
    CHECK(hello["snapshot_every"] == 5);

    a.send(R"({"type":"step","n":2,"id":"s"})");
    CHECK(a.recv()["tick"] == 1);
    CHECK(a.recv()["tick"] == 2);
    const json ack = a.recv();
    CHECK(ack["type"] == "ack");
    CHECK(ack["id"] == "s");

    a.send(R"({"type":"set_speed","speed":50})");
    CHECK(a.recv()["type"] == "ack");
    a.send(R"({"type":"resume"})");
    CHECK(a.recv()["type"] == "ack");
    const json s1 = a.recv_type("snapshot");
    const json s2 = a.recv_type("snapshot");
    CHECK(s1["tick"].get<int>() % 5 == 0);
    CHECK(s2["tick"].get<int>() == s1["tick"].get<int>() + 5);
    CHECK(s2["behind_ms"].get<double>() >= 0.0);
    a.send(R"({"type":"pause","id":"p"})");
    const json paused = a.recv_type("ack");
    CHECK(paused["id"] == "p");

    Client b(server.port());
    const json hello_b = b.recv();
    CHECK(hello_b["tick"] == paused["tick"]);
    b.send(R"({"type":"nonsense"})");
    CHECK(b.recv()["code"] == "E_PROTOCOL");

    a.send(R"({"type":"shutdown"})");
    CHECK(a.recv_type("ack")["command"] == "shutdown");
    CHECK(a.recv()["type"] == "bye");
    CHECK(b.recv()["type"] == "bye");
    CHECK(a.closed_by_server());
    CHECK(b.closed_by_server());
    server.wait();
}

TEST_CASE("stop() ends a running server with a bye") {
    SimConfig cfg;
    experiment::Server server(heatcool(), cfg, experiment::ServeOptions{});
    server.start();
    Client c(server.port());
    CHECK(c.recv()["type"] == "hello");
    server.stop();
    CHECK(c.recv_type("bye")["type"] == "bye");
    CHECK(c.closed_by_server());
    server.wait();
}

TEST_CASE("an unusable listen address is an E_IO error") {
    experiment::ServeOptions opts;
    opts.host = "not-an-address";
    try {
        experiment::Server s(heatcool(), SimConfig{}, opts);
        FAIL("expected E_IO");
    } catch (const Error& e) {
        CHECK(e.code() == "E_IO");
    }
}
