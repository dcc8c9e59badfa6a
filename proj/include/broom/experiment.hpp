#pragma once

// On-line experimentation: the JSON wire protocol and the session that owns a
// running World. The session is single-threaded; the network server in
// server.hpp only feeds it frames and forwards what it returns.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "broom/model.hpp"
#include "broom/sim.hpp"
#include "broom/trace.hpp"

namespace broom::experiment {

enum class CommandKind { SetAttr, Inject, Pause, Resume, Step, SetSpeed, Subscribe, Shutdown };

std::string_view command_name(CommandKind k);

struct Command {
    CommandKind kind = CommandKind::Pause;
    std::optional<std::string> id;  // echoed in the ack or error frame
    // set_attr
    std::string path;
    std::string attr;
    Literal value;
    // inject (at_tick unused)
    Stimulus stimulus;
    // step
    std::int64_t n = 1;
    // set_speed
    double speed = 1.0;
    // subscribe; empty = default signals
    std::vector<std::string> signals;
};

/// Throws Error(E_PROTOCOL) for malformed frames, unknown types and
/// out-of-range fields (n < 1, speed <= 0).
Command parse_command(std::string_view frame);
std::string command_json(const Command& c);

struct Snapshot {
    std::int64_t tick = 0;
    double time = 0.0;
    double behind_ms = 0.0;
    std::map<std::string, Literal> signals;
    std::map<std::string, std::string> fsm_states;
};

std::string snapshot_json(const Snapshot& s);
/// Throws Error(E_PROTOCOL).
Snapshot parse_snapshot(std::string_view frame);

std::string error_json(std::string_view code, std::string_view message, const std::optional<std::string>& id = {},
                       std::optional<CommandKind> command = {});

/// A frame for one client, or for every client when client < 0.
struct Frame {
    int client = -1;
    std::string text;
};

class Session {
public:
    Session(const InstanceTree& tree, const SimConfig& cfg, double speed = 1.0, bool paused = false, bool record = false);

    /// The hello frame for a new client; it starts on the default signals.
    std::vector<Frame> connect(int client);
    void disconnect(int client);

    /// Parses and applies one client frame. Protocol and command errors come
    /// back as error frames to that client; the run is never disturbed.
    std::vector<Frame> handle(int client, std::string_view frame);
    std::vector<Frame> apply(int client, const Command& c);

    /// One paced tick while running: steps the world and emits snapshots on
    /// the snapshot_every boundary. A runtime error pauses the session for
    /// good and is broadcast as an error frame.
    std::vector<Frame> tick(double behind_ms);

    bool paused() const { return paused_ || halted(); }
    bool halted() const { return world_.halted(); }
    bool stopped() const { return stopped_; }
    double speed() const { return speed_; }
    const World& world() const { return world_; }

    Snapshot snapshot(const std::vector<std::string>& selectors, double behind_ms) const;
    /// Every trace event so far, in order (only when recording).
    const std::vector<TraceEvent>& events() const { return events_; }

private:
    std::vector<Frame> advance(double behind_ms, bool force_snapshot);
    std::vector<Frame> snapshots(double behind_ms) const;

    World world_;
    SimConfig cfg_;
    double speed_;
    bool paused_;
    bool record_;
    bool stopped_ = false;
    std::map<int, std::vector<std::string>> clients_;
    std::vector<TraceEvent> events_;
};

}  // namespace broom::experiment
