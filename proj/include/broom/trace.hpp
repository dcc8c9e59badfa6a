#pragma once

// Simulation trace: NDJSON, one header object then one event per line.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace broom {

enum class EventKind { Call, CallReturn, MsgSend, MsgRecv, Transition, Sample, TimerFire, RuntimeError };

/// Payload value. Enum values and state names travel as strings.
using Literal = std::variant<bool, std::int64_t, double, std::string>;

struct TraceEvent {
    std::int64_t tick = 0;
    double time = 0.0;
    EventKind kind = EventKind::Sample;
    std::string src;
    std::string dst;
    std::string name;
    std::vector<Literal> payload;

    bool operator==(const TraceEvent&) const = default;
};

struct TraceHeader {
    std::string model;
    double dt = 0.0;
    double duration = 0.0;
    std::int64_t ticks = 0;
    std::string version;

    bool operator==(const TraceHeader&) const = default;
};

struct Trace {
    TraceHeader header;
    std::vector<TraceEvent> events;

    /// The runtime_error event that halted the run, if any.
    const TraceEvent* error() const;
};

std::string_view kind_name(EventKind k);
std::optional<EventKind> parse_kind(std::string_view s);

/// "%.17g", with ".0" appended when the text would otherwise read back as an
/// integer; non-finite values become null.
std::string format_double(double v);

std::string literal_json(const Literal& v);
std::string header_line(const TraceHeader& h);
std::string event_line(const TraceEvent& e);

/// Header line and event lines, each terminated by '\n'.
std::string to_ndjson(const Trace& t);

/// Throws Error(E_IO) on malformed input.
Trace parse_ndjson(std::string_view text);
Trace read_trace(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace broom
