#include "broom/trace.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "broom/diagnostic.hpp"
#include "broom/dsl.hpp"
#include "json.hpp"

namespace broom {

namespace {

constexpr std::array<std::string_view, 8> kKindNames = {"call",       "call_return", "msg_send",  "msg_recv",
                                                         "transition", "sample",      "timer_fire", "runtime_error"};

void json_string(std::string& out, std::string_view s) {
    out += '"';
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    out += '"';
}

Literal literal_from_json(const nlohmann::json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_null()) return std::nan("");
    if (j.is_string()) return j.get<std::string>();
    throw Error(code::io, "unsupported payload value " + j.dump());
}

}  // namespace

const TraceEvent* Trace::error() const {
    for (const auto& e : events) {
        if (e.kind == EventKind::RuntimeError) return &e;
    }
    return nullptr;
}

std::string_view kind_name(EventKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<EventKind> parse_kind(std::string_view s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == s) return static_cast<EventKind>(i);
    }
    return std::nullopt;
}

std::string format_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s = buf;
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

std::string literal_json(const Literal& v) {
    std::string out;
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
    json_string(out, std::get<std::string>(v));
    return out;
}

std::string header_line(const TraceHeader& h) {
    std::string out = "{\"model\":";
    json_string(out, h.model);
    out += ",\"dt\":" + format_double(h.dt);
    out += ",\"duration\":" + format_double(h.duration);
    out += ",\"ticks\":" + std::to_string(h.ticks);
    out += ",\"version\":";
    json_string(out, h.version);
    out += '}';
    return out;
}

std::string event_line(const TraceEvent& e) {
    std::string out = "{\"tick\":" + std::to_string(e.tick);
    out += ",\"time\":" + format_double(e.time);
    out += ",\"kind\":";
    json_string(out, kind_name(e.kind));
    out += ",\"src\":";
    json_string(out, e.src);
    out += ",\"dst\":";
    json_string(out, e.dst);
    out += ",\"name\":";
    json_string(out, e.name);
    out += ",\"payload\":[";
    for (std::size_t i = 0; i < e.payload.size(); ++i) {
        if (i) out += ',';
        out += literal_json(e.payload[i]);
    }
    out += "]}";
    return out;
}

std::string to_ndjson(const Trace& t) {
    std::string out = header_line(t.header);
    out += '\n';
    for (const auto& e : t.events) {
        out += event_line(e);
        out += '\n';
    }
    return out;
}

Trace parse_ndjson(std::string_view text) {
    Trace t;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header = true;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (header) {
                t.header.model = j.at("model").get<std::string>();
                t.header.dt = j.at("dt").get<double>();
                t.header.duration = j.at("duration").get<double>();
                t.header.ticks = j.at("ticks").get<std::int64_t>();
                t.header.version = j.value("version", "");
                header = false;
                continue;
            }
            TraceEvent e;
            e.tick = j.at("tick").get<std::int64_t>();
            e.time = j.at("time").get<double>();
            const auto kind = parse_kind(j.at("kind").get<std::string>());
            if (!kind) throw Error(code::io, "unknown event kind");
            e.kind = *kind;
            e.src = j.at("src").get<std::string>();
            e.dst = j.at("dst").get<std::string>();
            e.name = j.at("name").get<std::string>();
            for (const auto& p : j.at("payload")) e.payload.push_back(literal_from_json(p));
            t.events.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(code::io, "trace line " + std::to_string(lineno) + ": " + ex.what());
        }
    }
    if (header) throw Error(code::io, "trace has no header line");
    return t;
}

Trace read_trace(const std::string& path) { return parse_ndjson(dsl::read_file(path)); }

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(code::io, "cannot open '" + path + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(code::io, "write to '" + path + "' failed");
}

}  // namespace broom
