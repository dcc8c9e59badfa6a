#pragma once

// WebSocket front end for an experiment Session: `ws://host:port/experiment`,
// plus static files (the browser console) for every other GET.

#include <memory>
#include <string>

#include "broom/model.hpp"
#include "broom/sim.hpp"

namespace broom::experiment {

struct ServeOptions {
    std::string host = "127.0.0.1";
    unsigned short port = 0;  // 0 = any free port
    double speed = 1.0;
    bool start_paused = false;
    std::string static_dir;  // empty = no static files
};

class Server {
public:
    /// Binds the listening socket; throws Error(E_IO) when that fails.
    Server(const InstanceTree& tree, const SimConfig& cfg, const ServeOptions& opts);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;

    /// Starts the network and simulation threads.
    void start();
    /// Blocks until a shutdown command arrives or stop() is called.
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace broom::experiment
