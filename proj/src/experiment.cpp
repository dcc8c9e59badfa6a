#include "broom/experiment.hpp"

#include <array>
#include <cmath>

#include "json.hpp"

namespace broom::experiment {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 8> kCommands = {"set_attr", "inject",    "pause",     "resume",
                                                       "step",     "set_speed", "subscribe", "shutdown"};

json literal_to_json(const Literal& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    if (const auto* d = std::get_if<double>(&v)) return std::isfinite(*d) ? json(*d) : json(nullptr);
    return std::get<std::string>(v);
}

Literal literal_from_json(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    if (j.is_null()) return std::nan("");
    throw Error(code::protocol, "value " + j.dump() + " is not a literal");
}

std::string ack_json(CommandKind k, std::int64_t tick, const std::optional<std::string>& id) {
    json j;
    j["type"] = "ack";
    j["command"] = command_name(k);
    j["tick"] = tick;
    if (id) j["id"] = *id;
    return j.dump();
}

}  // namespace

std::string_view command_name(CommandKind k) { return kCommands[static_cast<std::size_t>(k)]; }

Command parse_command(std::string_view frame) {
    Command c;
    try {
        const json j = json::parse(frame);
        if (!j.is_object()) throw Error(code::protocol, "frame must be a JSON object");
        const std::string type = j.at("type").get<std::string>();
        bool known = false;
        for (std::size_t i = 0; i < kCommands.size(); ++i) {
            if (kCommands[i] == type) {
                c.kind = static_cast<CommandKind>(i);
                known = true;
            }
        }
        if (!known) throw Error(code::protocol, "unknown command type '" + type + "'");
        if (j.contains("id")) c.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
        switch (c.kind) {
            case CommandKind::SetAttr:
                c.path = j.at("path").get<std::string>();
                c.attr = j.at("attr").get<std::string>();
                c.value = literal_from_json(j.at("value"));
                break;
            case CommandKind::Inject: {
                Stimulus& s = c.stimulus;
                s.target = j.at("target").get<std::string>();
                s.port = j.at("port").get<std::string>();
                s.name = j.at("name").get<std::string>();
                const std::string kind = j.value("kind", "message");
                if (kind == "method") {
                    s.kind = StimulusKind::Method;
                } else if (kind != "message") {
                    throw Error(code::protocol, "inject kind must be 'message' or 'method'");
                }
                if (j.contains("args")) {
                    for (const auto& a : j.at("args")) s.args.push_back(literal_from_json(a));
                }
                break;
            }
            case CommandKind::Step:
                c.n = j.value("n", std::int64_t{1});
                if (c.n < 1) throw Error(code::protocol, "step needs n >= 1");
                break;
            case CommandKind::SetSpeed:
                c.speed = j.at("speed").get<double>();
                if (!(c.speed > 0.0) || !std::isfinite(c.speed)) throw Error(code::protocol, "speed must be a positive number");
                break;
            case CommandKind::Subscribe:
                c.signals = j.at("signals").get<std::vector<std::string>>();
                break;
            default: break;
        }
    } catch (const json::exception& e) {
        throw Error(code::protocol, std::string("malformed command: ") + e.what());
    }
    return c;
}

std::string command_json(const Command& c) {
    json j;
    j["type"] = command_name(c.kind);
    if (c.id) j["id"] = *c.id;
    switch (c.kind) {
        case CommandKind::SetAttr:
            j["path"] = c.path;
            j["attr"] = c.attr;
            j["value"] = literal_to_json(c.value);
            break;
        case CommandKind::Inject: {
            j["target"] = c.stimulus.target;
            j["port"] = c.stimulus.port;
            j["name"] = c.stimulus.name;
            j["kind"] = c.stimulus.kind == StimulusKind::Method ? "method" : "message";
            j["args"] = json::array();
            for (const auto& a : c.stimulus.args) j["args"].push_back(literal_to_json(a));
            break;
        }
        case CommandKind::Step: j["n"] = c.n; break;
        case CommandKind::SetSpeed: j["speed"] = c.speed; break;
        case CommandKind::Subscribe: j["signals"] = c.signals; break;
        default: break;
    }
    return j.dump();
}

std::string snapshot_json(const Snapshot& s) {
    json j;
    j["type"] = "snapshot";
    j["tick"] = s.tick;
    j["time"] = s.time;
    j["behind_ms"] = s.behind_ms;
    j["signals"] = json::object();
    for (const auto& [k, v] : s.signals) j["signals"][k] = literal_to_json(v);
    j["fsm_states"] = json::object();
    for (const auto& [k, v] : s.fsm_states) j["fsm_states"][k] = v;
    return j.dump();
}

Snapshot parse_snapshot(std::string_view frame) {
    Snapshot s;
    try {
        const json j = json::parse(frame);
        if (j.at("type").get<std::string>() != "snapshot") throw Error(code::protocol, "not a snapshot frame");
        s.tick = j.at("tick").get<std::int64_t>();
        s.time = j.at("time").get<double>();
        s.behind_ms = j.at("behind_ms").get<double>();
        for (const auto& [k, v] : j.at("signals").items()) s.signals[k] = literal_from_json(v);
        for (const auto& [k, v] : j.at("fsm_states").items()) s.fsm_states[k] = v.get<std::string>();
    } catch (const json::exception& e) {
        throw Error(code::protocol, std::string("malformed snapshot: ") + e.what());
    }
    return s;
}

std::string error_json(std::string_view code, std::string_view message, const std::optional<std::string>& id,
                       std::optional<CommandKind> command) {
    json j;
    j["type"] = "error";
    j["code"] = code;
    j["message"] = message;
    if (command) j["command"] = command_name(*command);
    if (id) j["id"] = *id;
    return j.dump();
}

// -------------------------------------------------------------- session

Session::Session(const InstanceTree& tree, const SimConfig& cfg, double speed, bool paused, bool record)
    : world_(tree, cfg), cfg_(cfg), speed_(speed), paused_(paused), record_(record) {}

std::vector<Frame> Session::connect(int client) {
    clients_[client] = {};
    const auto& tree = world_.tree();
    json j;
    j["type"] = "hello";
    j["model"] = tree.program->model_name;
    j["version"] = BROOM_VERSION;
    j["dt"] = cfg_.dt;
    j["snapshot_every"] = cfg_.snapshot_every;
    j["tick"] = world_.tick();
    j["paused"] = paused();
    j["speed"] = speed_;
    j["signals"] = world_.default_signals();
    j["tunables"] = json::array();
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        for (const auto& a : tree.cls(static_cast<int>(n)).attrs) {
            if (a.tunable) j["tunables"].push_back(tree.nodes[n].path + "." + a.name);
        }
    }
    j["instances"] = json::array();
    for (const auto& node : tree.nodes) j["instances"].push_back(node.path);
    return {Frame{client, j.dump()}};
}

void Session::disconnect(int client) { clients_.erase(client); }

std::vector<Frame> Session::handle(int client, std::string_view frame) {
    Command c;
    try {
        c = parse_command(frame);
    } catch (const Error& e) {
        std::optional<std::string> id;
        std::optional<CommandKind> kind;
        const json j = json::parse(frame, nullptr, false);
        if (j.is_object()) {
            if (j.contains("id")) id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
            if (j.contains("type") && j["type"].is_string()) {
                for (std::size_t i = 0; i < kCommands.size(); ++i) {
                    if (kCommands[i] == j["type"].get<std::string>()) kind = static_cast<CommandKind>(i);
                }
            }
        }
        return {Frame{client, error_json(e.code(), e.detail(), id, kind)}};
    }
    return apply(client, c);
}

std::vector<Frame> Session::apply(int client, const Command& c) {
    std::vector<Frame> out;
    auto fail = [&](std::string_view code, const std::string& msg) {
        return std::vector<Frame>{Frame{client, error_json(code, msg, c.id, c.kind)}};
    };
    try {
        switch (c.kind) {
            case CommandKind::SetAttr: world_.set_attr(c.path, c.attr, c.value); break;
            case CommandKind::Inject: world_.inject(c.stimulus); break;
            case CommandKind::Pause: paused_ = true; break;
            case CommandKind::Resume:
                if (halted()) return fail(code::halted, "the run stopped on a runtime error");
                paused_ = false;
                break;
            case CommandKind::Step:
                if (halted()) return fail(code::halted, "the run stopped on a runtime error");
                for (std::int64_t k = 0; k < c.n && !halted(); ++k) {
                    auto f = advance(0.0, true);
                    out.insert(out.end(), f.begin(), f.end());
                }
                break;
            case CommandKind::SetSpeed: speed_ = c.speed; break;
            case CommandKind::Subscribe:
                for (const auto& s : c.signals) {
                    if (!world_.read_signal(s)) return fail(code::protocol, "unknown signal '" + s + "'");
                }
                if (clients_.count(client)) clients_[client] = c.signals;
                break;
            case CommandKind::Shutdown: {
                stopped_ = true;
                out.push_back(Frame{client, ack_json(c.kind, world_.tick(), c.id)});
                json bye;
                bye["type"] = "bye";
                bye["tick"] = world_.tick();
                out.push_back(Frame{-1, bye.dump()});
                return out;
            }
        }
    } catch (const Error& e) {
        return fail(e.code(), e.detail());
    }
    out.push_back(Frame{client, ack_json(c.kind, world_.tick(), c.id)});
    return out;
}

std::vector<Frame> Session::tick(double behind_ms) {
    if (paused() || stopped_) return {};
    return advance(behind_ms, false);
}

std::vector<Frame> Session::advance(double behind_ms, bool force_snapshot) {
    auto events = world_.step();
    std::vector<Frame> out;
    for (const auto& e : events) {
        if (e.kind == EventKind::RuntimeError) {
            out.push_back(Frame{-1, error_json(e.name, e.src + ": " + std::get<std::string>(e.payload.at(0)))});
        }
    }
    if (record_) events_.insert(events_.end(), events.begin(), events.end());
    if (force_snapshot || world_.tick() % cfg_.snapshot_every == 0) {
        auto s = snapshots(behind_ms);
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

Snapshot Session::snapshot(const std::vector<std::string>& selectors, double behind_ms) const {
    Snapshot s;
    s.tick = world_.tick();
    s.time = world_.time();
    s.behind_ms = behind_ms;
    const auto& sel = selectors.empty() ? world_.default_signals() : selectors;
    for (const auto& name : sel) {
        if (auto v = world_.read_signal(name)) s.signals[name] = *v;
    }
    s.fsm_states = world_.fsm_states();
    return s;
}

std::vector<Frame> Session::snapshots(double behind_ms) const {
    std::vector<Frame> out;
    for (const auto& [client, selectors] : clients_) out.push_back(Frame{client, snapshot_json(snapshot(selectors, behind_ms))});
    return out;
}

}  // namespace broom::experiment
