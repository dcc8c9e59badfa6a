#pragma once

// Fixed-step hybrid executor. Per tick: (1) due stimuli, (2) expired timers,
// (3) continuous pass in block order, (4) discrete queue drain in preorder,
// (5) samples.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "broom/model.hpp"
#include "broom/trace.hpp"

namespace broom {

struct SimConfig {
    double dt = 0.010;
    double duration = 0.0;
    std::int64_t snapshot_every = 1;
    std::int64_t drain_cap = 10000;

    /// llround(duration / dt)
    std::int64_t ticks() const;
};

/// E_INVALID for unusable settings, W_STIFF for each pt1 block with dt > T.
std::vector<Diagnostic> check_config(const InstanceTree& tree, const SimConfig& cfg);

enum class StimulusKind { Message, Method };

struct Stimulus {
    std::int64_t at_tick = 0;
    std::string target;  // instance path
    std::string port;    // provided port on that instance
    std::string name;    // signature
    StimulusKind kind = StimulusKind::Message;
    std::vector<Literal> args;
};

/// `{"stimuli":[{"at_tick":0,"target":"root","port":"p","name":"m","kind":"message","args":[]}]}`
/// or a bare array of the same objects. Throws Error(E_STIMULUS).
std::vector<Stimulus> parse_stimuli(std::string_view json_text);
std::vector<Stimulus> load_stimuli(const std::string& path);

/// A stimulus bound to the instance that serves it.
struct ResolvedStimulus {
    int node = -1;
    int trigger = -1;
    StimulusKind kind = StimulusKind::Message;
    std::vector<ir::Value> args;
};

/// Throws Error(E_STIMULUS) when the target, port, signature, kind or
/// arguments do not fit the tree.
ResolvedStimulus resolve_stimulus(const InstanceTree& tree, const Stimulus& s);

/// A running simulation. Single owner; may move between threads between ticks.
class World {
public:
    /// Throws Error(E_STIMULUS) when a stimulus does not resolve.
    World(const InstanceTree& tree, const SimConfig& cfg, std::vector<Stimulus> stimuli = {});
    ~World();
    World(World&&) noexcept;
    World& operator=(World&&) noexcept;

    /// Advances one tick and returns its events. Throws Error(E_HALTED) once a
    /// runtime error has stopped the run.
    std::vector<TraceEvent> step();

    std::int64_t tick() const;  // ticks completed so far
    double time() const;        // tick() * dt
    bool halted() const;
    const InstanceTree& tree() const;
    const SimConfig& config() const;
    TraceHeader header() const;

    /// Delivered in phase (1) of the next step, after scripted stimuli.
    /// at_tick is ignored. Throws Error(E_STIMULUS).
    void inject(Stimulus s);

    /// Throws Error(E_TUNABLE) for a non-tunable attribute, Error(E_STIMULUS)
    /// for an unknown target or a value of the wrong type.
    void set_attr(const std::string& path, const std::string& attr, const Literal& value);

    /// Reads `<path>.out` (block output) or `<path>.<attr>[.<field>...]`.
    std::optional<Literal> read_signal(const std::string& selector) const;
    /// Block outputs and tunable attributes.
    std::vector<std::string> default_signals() const;
    /// Current state of every instance with a state machine.
    std::map<std::string, std::string> fsm_states() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Runs the configured number of ticks (stopping early on a runtime error).
Trace run(const InstanceTree& tree, const SimConfig& cfg, const std::vector<Stimulus>& stimuli);

struct TimelinessViolation {
    std::string instance;
    std::string trigger;  // signature name of the delivery
    std::int64_t trigger_tick = 0;
    std::int64_t deadline_ticks = 0;
    std::int64_t actual_ticks = 0;  // ticks until the reaction (or until the trace ended)
    bool reacted = true;
};

struct TimelinessReport {
    std::vector<TimelinessViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// For every actor with a deadline d, each msg_recv or call delivered to it
/// must be followed by its first transition or call_return within d ticks.
TimelinessReport check_timeliness(const Trace& trace, const InstanceTree& tree);

}  // namespace broom
