#include "broom/sim.hpp"

#include <algorithm>
#include <cmath>

#include "broom/arith.hpp"
#include "broom/blocks.hpp"
#include "broom/dsl.hpp"
#include "json.hpp"

namespace broom {

std::int64_t SimConfig::ticks() const { return static_cast<std::int64_t>(std::llround(duration / dt)); }

std::vector<Diagnostic> check_config(const InstanceTree& tree, const SimConfig& cfg) {
    std::vector<Diagnostic> out;
    auto bad = [&](std::string msg) { out.push_back(Diagnostic{std::string(code::invalid), {}, std::move(msg)}); };
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) bad("dt must be a positive number of seconds");
    if (!(cfg.duration >= 0.0) || !std::isfinite(cfg.duration)) bad("duration must be a non-negative number of seconds");
    if (out.empty() && cfg.duration / cfg.dt > 9.0e18) bad("duration / dt does not fit a 64-bit tick counter");
    if (cfg.snapshot_every < 1) bad("snapshot_every must be at least 1");
    if (cfg.drain_cap < 1) bad("drain_cap must be at least 1");
    if (!out.empty()) return out;
    std::vector<int> seen;
    for (const auto& node : tree.nodes) {
        const auto& c = tree.program->actors[node.cls];
        if (!c.block || c.block->kind != BlockKind::Pt1) continue;
        if (std::find(seen.begin(), seen.end(), node.cls) != seen.end()) continue;
        seen.push_back(node.cls);
        const double T = c.block->params[1];
        if (cfg.dt > T) {
            out.push_back(Diagnostic{std::string(code::stiff), c.block->span,
                                     "dt " + format_double(cfg.dt) + " s exceeds the time constant " + format_double(T) +
                                         " s of '" + c.name + "'; explicit Euler is inaccurate or unstable here"});
        }
    }
    sort_diagnostics(out);
    return out;
}

// ------------------------------------------------------------------ stimuli

namespace {

Literal literal_from(const nlohmann::json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw Error(code::stimulus, "argument " + j.dump() + " is not a literal");
}

}  // namespace

std::vector<Stimulus> parse_stimuli(std::string_view json_text) {
    std::vector<Stimulus> out;
    try {
        const auto doc = nlohmann::json::parse(json_text);
        const auto& list = doc.is_array() ? doc : doc.at("stimuli");
        for (const auto& j : list) {
            Stimulus s;
            s.at_tick = j.at("at_tick").get<std::int64_t>();
            s.target = j.at("target").get<std::string>();
            s.port = j.at("port").get<std::string>();
            s.name = j.at("name").get<std::string>();
            const std::string kind = j.value("kind", "message");
            if (kind == "message") {
                s.kind = StimulusKind::Message;
            } else if (kind == "method") {
                s.kind = StimulusKind::Method;
            } else {
                throw Error(code::stimulus, "stimulus kind must be 'message' or 'method', got '" + kind + "'");
            }
            if (j.contains("args")) {
                for (const auto& a : j.at("args")) s.args.push_back(literal_from(a));
            }
            if (s.at_tick < 0) throw Error(code::stimulus, "at_tick must be >= 0");
            out.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(code::stimulus, std::string("malformed stimulus script: ") + e.what());
    }
    std::stable_sort(out.begin(), out.end(), [](const Stimulus& a, const Stimulus& b) { return a.at_tick < b.at_tick; });
    return out;
}

std::vector<Stimulus> load_stimuli(const std::string& path) { return parse_stimuli(dsl::read_file(path)); }

// -------------------------------------------------------------------- world

namespace {

using ir::Value;

struct Fault {
    std::string code;
    std::string message;
    int node;
};

struct Msg {
    int trigger;
    std::vector<Value> args;
    std::string sender;
    bool timer;
};

struct NodeState {
    std::vector<Value> slots;
    int state = -1;
    double out = 0.0;
    double prev = 0.0;
    blocks::Pt1State pt1;
    blocks::PiState pi;
    std::deque<Msg> queue;
    std::vector<std::int64_t> timer_due;  // -1 = idle
    int sampled_state = -1;
};

struct Ctx {
    int node;
    const std::vector<Value>* params;
    int base;
    int reader;
};

std::optional<Value> from_literal(const ir::Program& prog, const Literal& l, const ir::Type& t) {
    switch (t.kind) {
        case ir::TypeKind::Bool:
            if (const auto* b = std::get_if<bool>(&l)) return *b;
            return std::nullopt;
        case ir::TypeKind::Int:
            if (const auto* i = std::get_if<std::int64_t>(&l)) return *i;
            return std::nullopt;
        case ir::TypeKind::Real:
            if (const auto* d = std::get_if<double>(&l)) return *d;
            if (const auto* i = std::get_if<std::int64_t>(&l)) return static_cast<double>(*i);
            return std::nullopt;
        case ir::TypeKind::Enum: {
            const auto& e = prog.enums[t.index];
            if (const auto* s = std::get_if<std::string>(&l)) {
                std::string member = *s;
                if (member.rfind(e.name + ".", 0) == 0) member = member.substr(e.name.size() + 1);
                auto it = std::find(e.members.begin(), e.members.end(), member);
                if (it == e.members.end()) return std::nullopt;
                return static_cast<std::int64_t>(it - e.members.begin());
            }
            if (const auto* i = std::get_if<std::int64_t>(&l)) {
                if (*i >= 0 && *i < static_cast<std::int64_t>(e.members.size())) return *i;
            }
            return std::nullopt;
        }
        default: return std::nullopt;
    }
}

}  // namespace

ResolvedStimulus resolve_stimulus(const InstanceTree& tree, const Stimulus& s) {
    const ir::Program& prog = *tree.program;
    const int node = tree.find(s.target);
    if (node < 0) throw Error(code::stimulus, "no instance '" + s.target + "'");
    const auto& c = tree.cls(node);
    const int port = c.find_port(s.port);
    if (port < 0 || c.ports[port].direction != PortDirection::Provided) {
        throw Error(code::stimulus, "'" + s.target + "' has no provided port '" + s.port + "'");
    }
    const auto& proto = prog.protocols[c.ports[port].protocol];
    const int si = proto.find(s.name);
    if (si < 0) throw Error(code::stimulus, "port '" + s.target + "." + s.port + "' has no signature '" + s.name + "'");
    const auto& sig = proto.sigs[si];
    if (sig.message != (s.kind == StimulusKind::Message)) {
        throw Error(code::stimulus, "'" + s.name + "' is a " + (sig.message ? "message" : "method") +
                                        ", not a " + (sig.message ? "method" : "message"));
    }
    if (s.args.size() != sig.params.size()) {
        throw Error(code::stimulus, "'" + s.name + "' expects " + std::to_string(sig.params.size()) + " argument(s)");
    }
    ResolvedStimulus r;
    r.kind = s.kind;
    for (std::size_t i = 0; i < s.args.size(); ++i) {
        auto v = from_literal(prog, s.args[i], sig.params[i]);
        if (!v) {
            throw Error(code::stimulus, "argument " + std::to_string(i + 1) + " of '" + s.name + "' must be " +
                                            type_name(prog, sig.params[i]));
        }
        r.args.push_back(*v);
    }
    const auto target = tree.resolve_provided(node, port);
    if (!target) throw Error(code::stimulus, "'" + s.target + "." + s.port + "' does not resolve to a provider");
    r.node = target->instance;
    r.trigger = tree.cls(r.node).find_trigger(s.name);
    if (r.trigger < 0) throw Error(code::stimulus, "'" + tree.nodes[r.node].path + "' cannot handle '" + s.name + "'");
    return r;
}

struct World::Impl {
    InstanceTree tree;
    const ir::Program& prog;
    SimConfig cfg;
    std::vector<Stimulus> script;
    std::vector<ResolvedStimulus> resolved_script;
    std::size_t next_stimulus = 0;
    std::vector<ResolvedStimulus> injected;
    std::vector<NodeState> nodes;
    std::int64_t tick = 0;
    bool halted = false;
    std::vector<TraceEvent>* out = nullptr;

    Impl(const InstanceTree& t, const SimConfig& c, std::vector<Stimulus> s)
        : tree(t), prog(*tree.program), cfg(c), script(std::move(s)) {
        std::stable_sort(script.begin(), script.end(),
                         [](const Stimulus& a, const Stimulus& b) { return a.at_tick < b.at_tick; });
        for (const auto& st : script) resolved_script.push_back(resolve_stimulus(tree, st));
        nodes.resize(tree.nodes.size());
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            const auto& c = tree.cls(static_cast<int>(n));
            nodes[n].slots = c.initial;
            nodes[n].state = c.has_machine() ? c.initial_state : -1;
            nodes[n].timer_due.assign(c.timers.size(), -1);
        }
    }

    // ------------------------------------------------------------ values
    Literal to_literal(const Value& v, const ir::Type& t) const {
        if (t.kind == ir::TypeKind::Enum) {
            const auto& e = prog.enums[t.index];
            const auto i = std::get<std::int64_t>(v);
            return e.name + "." + e.members.at(static_cast<std::size_t>(i));
        }
        if (const auto* b = std::get_if<bool>(&v)) return *b;
        if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
        return std::get<double>(v);
    }

    std::vector<Literal> to_literals(const std::vector<Value>& vs, const std::vector<ir::Type>& ts) const {
        std::vector<Literal> out;
        for (std::size_t i = 0; i < vs.size(); ++i) out.push_back(to_literal(vs[i], ts[i]));
        return out;
    }

    // ------------------------------------------------------------ events
    void emit(EventKind kind, std::string src, std::string dst, std::string name, std::vector<Literal> payload) {
        out->push_back(TraceEvent{tick, static_cast<double>(tick) * cfg.dt, kind, std::move(src), std::move(dst),
                                  std::move(name), std::move(payload)});
    }

    const std::string& path(int node) const { return tree.nodes[node].path; }

    // -------------------------------------------------------- evaluation
    [[noreturn]] void fault(int node, std::string msg) { throw Fault{std::string(code::runtime), std::move(msg), node}; }

    Value eval(const ir::Expr& e, const Ctx& ctx) {
        switch (e.op) {
            case ir::Op::Const: return e.constant;
            case ir::Op::Slot: return nodes[ctx.node].slots[ctx.base + e.slot];
            case ir::Op::Param: return (*ctx.params)[e.index];
            case ir::Op::BlockOut:
                return tree.delayed(ctx.reader, ctx.node) ? nodes[ctx.node].prev : nodes[ctx.node].out;
            case ir::Op::PortCall: {
                std::vector<Value> args;
                for (const auto& a : e.args) args.push_back(eval(a, ctx));
                const CallTarget& ct = tree.bindings[ctx.node][e.index][e.member];
                const auto& sig = prog.protocols[tree.cls(ctx.node).ports[e.index].protocol].sigs[e.member];
                emit(EventKind::Call, path(ctx.node), path(ct.instance), sig.name, to_literals(args, sig.params));
                auto ret = handle(ct.instance, ct.trigger, std::move(args), ctx.reader);
                std::vector<Literal> payload;
                if (ret) payload.push_back(to_literal(*ret, sig.ret));
                emit(EventKind::CallReturn, path(ct.instance), path(ctx.node), sig.name, std::move(payload));
                return ret ? *ret : Value{};
            }
            case ir::Op::DataCall: {
                std::vector<Value> args;
                for (const auto& a : e.args) args.push_back(eval(a, ctx));
                const auto& m = prog.data[e.index].methods[e.member];
                Ctx inner{ctx.node, &args, ctx.base + e.slot, ctx.reader};
                for (const auto& st : m.body) exec(st, inner);
                return m.result ? eval(*m.result, inner) : Value{};
            }
            case ir::Op::Neg: {
                const Value v = eval(e.args[0], ctx);
                if (const auto* i = std::get_if<std::int64_t>(&v)) return arith::neg(*i);
                return -std::get<double>(v);
            }
            case ir::Op::Not: return !std::get<bool>(eval(e.args[0], ctx));
            case ir::Op::ToReal: return static_cast<double>(std::get<std::int64_t>(eval(e.args[0], ctx)));
            case ir::Op::Binary: {
                const Value a = eval(e.args[0], ctx);
                const Value b = eval(e.args[1], ctx);
                return binary(e, a, b, ctx.node);
            }
        }
        return Value{};
    }

    Value binary(const ir::Expr& e, const Value& a, const Value& b, int node) {
        const BinaryOp op = e.bop;
        if (op == BinaryOp::And) return std::get<bool>(a) && std::get<bool>(b);
        if (op == BinaryOp::Or) return std::get<bool>(a) || std::get<bool>(b);
        if (const auto* x = std::get_if<double>(&a)) {
            const double y = std::get<double>(b);
            switch (op) {
                case BinaryOp::Add: return *x + y;
                case BinaryOp::Sub: return *x - y;
                case BinaryOp::Mul: return *x * y;
                case BinaryOp::Div:
                    if (auto q = arith::div(*x, y)) return *q;
                    fault(node, "division by zero");
                case BinaryOp::Lt: return *x < y;
                case BinaryOp::Le: return *x <= y;
                case BinaryOp::Gt: return *x > y;
                case BinaryOp::Ge: return *x >= y;
                case BinaryOp::Eq: return *x == y;
                case BinaryOp::Ne: return *x != y;
                default: break;
            }
        } else if (const auto* x = std::get_if<std::int64_t>(&a)) {
            const std::int64_t y = std::get<std::int64_t>(b);
            switch (op) {
                case BinaryOp::Add: return arith::add(*x, y);
                case BinaryOp::Sub: return arith::sub(*x, y);
                case BinaryOp::Mul: return arith::mul(*x, y);
                case BinaryOp::Div:
                    if (auto q = arith::div(*x, y)) return *q;
                    fault(node, "division by zero");
                case BinaryOp::Lt: return *x < y;
                case BinaryOp::Le: return *x <= y;
                case BinaryOp::Gt: return *x > y;
                case BinaryOp::Ge: return *x >= y;
                case BinaryOp::Eq: return *x == y;
                case BinaryOp::Ne: return *x != y;
                default: break;
            }
        } else {
            const bool p = std::get<bool>(a), q = std::get<bool>(b);
            if (op == BinaryOp::Eq) return p == q;
            if (op == BinaryOp::Ne) return p != q;
        }
        fault(node, "unsupported operator");
    }

    void enqueue(int node, Msg m) {
        if (static_cast<std::int64_t>(nodes[node].queue.size()) >= cfg.drain_cap) {
            throw Fault{std::string(code::livelock), "message queue of '" + path(node) + "' overflowed", node};
        }
        nodes[node].queue.push_back(std::move(m));
    }

    void exec(const ir::Stmt& s, const Ctx& ctx) {
        switch (s.op) {
            case ir::StmtOp::Assign: nodes[ctx.node].slots[ctx.base + s.slot] = eval(s.value, ctx); break;
            case ir::StmtOp::Eval: eval(s.value, ctx); break;
            case ir::StmtOp::Send: {
                std::vector<Value> args;
                for (const auto& a : s.args) args.push_back(eval(a, ctx));
                const CallTarget& ct = tree.bindings[ctx.node][s.port][s.member];
                const auto& sig = prog.protocols[tree.cls(ctx.node).ports[s.port].protocol].sigs[s.member];
                emit(EventKind::MsgSend, path(ctx.node), path(ct.instance), sig.name, to_literals(args, sig.params));
                enqueue(ct.instance, Msg{ct.trigger, std::move(args), path(ctx.node), false});
                break;
            }
            case ir::StmtOp::SetTimer: {
                const auto n = std::get<std::int64_t>(eval(s.value, ctx));
                if (n < 1) fault(ctx.node, "timer '" + tree.cls(ctx.node).timers[s.timer] + "' set to " + std::to_string(n) + " ticks");
                nodes[ctx.node].timer_due[s.timer] = tick + n;
                break;
            }
            case ir::StmtOp::CancelTimer: nodes[ctx.node].timer_due[s.timer] = -1; break;
        }
    }

    std::optional<Value> handle(int node, int trigger, std::vector<Value> args, int reader) {
        const auto& c = tree.cls(node);
        const auto& t = c.triggers[trigger];
        Ctx ctx{node, &args, 0, reader};
        if (c.has_machine()) {
            for (int ti : t.transitions) {
                const auto& tr = c.transitions[ti];
                if (tr.from != nodes[node].state) continue;
                if (tr.guard && !std::get<bool>(eval(*tr.guard, ctx))) continue;
                nodes[node].state = tr.to;
                emit(EventKind::Transition, path(node), path(node), c.states[tr.to],
                     {Literal{c.states[tr.from]}, Literal{t.name}});
                for (const auto& st : tr.actions) exec(st, ctx);
                break;
            }
        }
        if (t.method >= 0) {
            const auto& m = c.methods[t.method];
            for (const auto& st : m.body) exec(st, ctx);
            if (m.result) return eval(*m.result, ctx);
        }
        return std::nullopt;
    }

    // -------------------------------------------------------------- tick
    void deliver(const ResolvedStimulus& r) {
        const auto& c = tree.cls(r.node);
        const auto& t = c.triggers[r.trigger];
        if (r.kind == StimulusKind::Message) {
            emit(EventKind::MsgSend, "env", path(r.node), t.name, to_literals(r.args, t.params));
            enqueue(r.node, Msg{r.trigger, r.args, "env", false});
            return;
        }
        emit(EventKind::Call, "env", path(r.node), t.name, to_literals(r.args, t.params));
        auto ret = handle(r.node, r.trigger, r.args, -1);
        std::vector<Literal> payload;
        if (ret) payload.push_back(to_literal(*ret, t.ret));
        emit(EventKind::CallReturn, path(r.node), "env", t.name, std::move(payload));
    }

    void run_tick() {
        // (1) stimuli
        while (next_stimulus < script.size() && script[next_stimulus].at_tick <= tick) {
            if (script[next_stimulus].at_tick == tick) deliver(resolved_script[next_stimulus]);
            ++next_stimulus;
        }
        auto pending = std::move(injected);
        injected.clear();
        for (const auto& r : pending) deliver(r);

        // (2) timers
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            const auto& c = tree.cls(static_cast<int>(n));
            for (std::size_t k = 0; k < c.timers.size(); ++k) {
                if (nodes[n].timer_due[k] != tick) continue;
                nodes[n].timer_due[k] = -1;
                emit(EventKind::TimerFire, path(static_cast<int>(n)), path(static_cast<int>(n)), c.timers[k], {});
                enqueue(static_cast<int>(n), Msg{c.find_trigger(c.timers[k]), {}, path(static_cast<int>(n)), true});
            }
        }

        // (3) continuous pass
        for (auto& ns : nodes) ns.prev = ns.out;
        for (int b : tree.block_order) {
            const auto& blk = *tree.cls(b).block;
            const double u = std::get<double>(eval(blk.input, Ctx{b, nullptr, 0, b}));
            auto& ns = nodes[b];
            switch (blk.kind) {
                case BlockKind::Pt1:
                    ns.pt1 = blocks::pt1_step(ns.pt1, {blk.params[0], blk.params[1]}, u, cfg.dt);
                    ns.out = ns.pt1.y;
                    break;
                case BlockKind::Pi: {
                    auto r = blocks::pi_step(ns.pi, {blk.params[0], blk.params[1], blk.params[2], blk.params[3]}, u, cfg.dt);
                    ns.pi = r.state;
                    ns.out = r.out;
                    break;
                }
                case BlockKind::Limiter: ns.out = blocks::limiter(u, blk.params[0], blk.params[1]); break;
            }
        }

        // (4) discrete pass
        std::int64_t processed = 0;
        bool busy = true;
        while (busy) {
            busy = false;
            for (std::size_t n = 0; n < nodes.size(); ++n) {
                while (!nodes[n].queue.empty()) {
                    busy = true;
                    if (++processed > cfg.drain_cap) {
                        throw Fault{std::string(code::livelock),
                                    "more than " + std::to_string(cfg.drain_cap) + " messages in one tick",
                                    static_cast<int>(n)};
                    }
                    Msg m = std::move(nodes[n].queue.front());
                    nodes[n].queue.pop_front();
                    const auto& c = tree.cls(static_cast<int>(n));
                    const auto& t = c.triggers[m.trigger];
                    if (!m.timer) {
                        emit(EventKind::MsgRecv, m.sender, path(static_cast<int>(n)), t.name, to_literals(m.args, t.params));
                    }
                    handle(static_cast<int>(n), m.trigger, std::move(m.args), -1);
                }
            }
        }

        // (5) samples
        if (tick % cfg.snapshot_every == 0) {
            for (std::size_t n = 0; n < nodes.size(); ++n) {
                const auto& c = tree.cls(static_cast<int>(n));
                if (c.block) emit(EventKind::Sample, path(static_cast<int>(n)), path(static_cast<int>(n)), "out", {nodes[n].out});
                if (c.has_machine() && nodes[n].state != nodes[n].sampled_state) {
                    nodes[n].sampled_state = nodes[n].state;
                    emit(EventKind::Sample, path(static_cast<int>(n)), path(static_cast<int>(n)), "state",
                         {Literal{c.states[nodes[n].state]}});
                }
            }
        }
    }

    std::vector<TraceEvent> step() {
        if (halted) throw Error(code::halted, "engine halted after a runtime error");
        std::vector<TraceEvent> events;
        out = &events;
        try {
            run_tick();
        } catch (const Fault& f) {
            emit(EventKind::RuntimeError, path(f.node), path(f.node), f.code, {Literal{f.message}});
            halted = true;
        }
        out = nullptr;
        ++tick;
        return events;
    }

    // ------------------------------------------------------- inspection
    struct SlotRef {
        int node;
        int slot;
        ir::Type type;
        const ir::AttrInfo* top;
    };

    std::optional<SlotRef> find_slot(const std::string& selector) const {
        for (int n = static_cast<int>(tree.nodes.size()) - 1; n >= 0; --n) {
            const std::string& p = tree.nodes[n].path;
            if (selector.size() <= p.size() + 1 || selector.compare(0, p.size(), p) != 0 || selector[p.size()] != '.') continue;
            std::vector<std::string> parts;
            std::size_t start = p.size() + 1;
            while (true) {
                const std::size_t dot = selector.find('.', start);
                parts.push_back(selector.substr(start, dot - start));
                if (dot == std::string::npos) break;
                start = dot + 1;
            }
            const auto& c = tree.cls(n);
            const int ai = c.find_attr(parts[0]);
            if (ai < 0) continue;
            const ir::AttrInfo* cur = &c.attrs[ai];
            const ir::AttrInfo* top = cur;
            int slot = cur->slot;
            bool ok = true;
            for (std::size_t k = 1; k < parts.size() && ok; ++k) {
                if (cur->type.kind != ir::TypeKind::Data) {
                    ok = false;
                    break;
                }
                const auto& d = prog.data[cur->type.index];
                auto it = std::find_if(d.fields.begin(), d.fields.end(), [&](const ir::AttrInfo& f) { return f.name == parts[k]; });
                if (it == d.fields.end()) {
                    ok = false;
                    break;
                }
                cur = &*it;
                slot += cur->slot;
            }
            if (!ok || cur->type.kind == ir::TypeKind::Data) continue;
            return SlotRef{n, slot, cur->type, top};
        }
        return std::nullopt;
    }
};

World::World(const InstanceTree& tree, const SimConfig& cfg, std::vector<Stimulus> stimuli)
    : impl_(std::make_unique<Impl>(tree, cfg, std::move(stimuli))) {}
World::~World() = default;
World::World(World&&) noexcept = default;
World& World::operator=(World&&) noexcept = default;

std::vector<TraceEvent> World::step() { return impl_->step(); }
std::int64_t World::tick() const { return impl_->tick; }
double World::time() const { return static_cast<double>(impl_->tick) * impl_->cfg.dt; }
bool World::halted() const { return impl_->halted; }
const InstanceTree& World::tree() const { return impl_->tree; }
const SimConfig& World::config() const { return impl_->cfg; }

TraceHeader World::header() const {
    return TraceHeader{impl_->prog.model_name, impl_->cfg.dt, impl_->cfg.duration, impl_->cfg.ticks(), BROOM_VERSION};
}

void World::inject(Stimulus s) { impl_->injected.push_back(resolve_stimulus(impl_->tree, s)); }

void World::set_attr(const std::string& path, const std::string& attr, const Literal& value) {
    const int node = impl_->tree.find(path);
    if (node < 0) throw Error(code::stimulus, "no instance '" + path + "'");
    const auto& c = impl_->tree.cls(node);
    const int ai = c.find_attr(attr);
    if (ai < 0) throw Error(code::stimulus, "'" + path + "' has no attribute '" + attr + "'");
    const auto& info = c.attrs[ai];
    if (!info.tunable) throw Error(code::tunable, "attribute '" + path + "." + attr + "' is not tunable");
    auto v = from_literal(impl_->prog, value, info.type);
    if (!v) throw Error(code::stimulus, "value for '" + path + "." + attr + "' must be " + type_name(impl_->prog, info.type));
    impl_->nodes[node].slots[info.slot] = *v;
}

std::optional<Literal> World::read_signal(const std::string& selector) const {
    const auto& t = impl_->tree;
    for (std::size_t n = 0; n < t.nodes.size(); ++n) {
        if (t.cls(static_cast<int>(n)).block && selector == t.nodes[n].path + ".out") return impl_->nodes[n].out;
    }
    auto ref = impl_->find_slot(selector);
    if (!ref) return std::nullopt;
    return impl_->to_literal(impl_->nodes[ref->node].slots[ref->slot], ref->type);
}

std::vector<std::string> World::default_signals() const {
    std::vector<std::string> out;
    const auto& t = impl_->tree;
    for (std::size_t n = 0; n < t.nodes.size(); ++n) {
        const auto& c = t.cls(static_cast<int>(n));
        if (c.block) out.push_back(t.nodes[n].path + ".out");
        for (const auto& a : c.attrs) {
            if (a.tunable) out.push_back(t.nodes[n].path + "." + a.name);
        }
    }
    return out;
}

std::map<std::string, std::string> World::fsm_states() const {
    std::map<std::string, std::string> out;
    const auto& t = impl_->tree;
    for (std::size_t n = 0; n < t.nodes.size(); ++n) {
        const auto& c = t.cls(static_cast<int>(n));
        if (c.has_machine()) out[t.nodes[n].path] = c.states[impl_->nodes[n].state];
    }
    return out;
}

Trace run(const InstanceTree& tree, const SimConfig& cfg, const std::vector<Stimulus>& stimuli) {
    World w(tree, cfg, stimuli);
    Trace t;
    t.header = w.header();
    const std::int64_t n = cfg.ticks();
    while (w.tick() < n && !w.halted()) {
        auto events = w.step();
        t.events.insert(t.events.end(), std::make_move_iterator(events.begin()), std::make_move_iterator(events.end()));
    }
    return t;
}

// ---------------------------------------------------------------- timeliness

TimelinessReport check_timeliness(const Trace& trace, const InstanceTree& tree) {
    TimelinessReport report;
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        const auto& c = tree.cls(static_cast<int>(n));
        if (!c.deadline_ticks) continue;
        const std::int64_t d = *c.deadline_ticks;
        const std::string& p = tree.nodes[n].path;
        struct Pending {
            std::string name;
            std::int64_t tick;
        };
        std::vector<Pending> pending;
        for (const auto& e : trace.events) {
            const bool delivery = (e.kind == EventKind::MsgRecv || e.kind == EventKind::Call) && e.dst == p;
            const bool reaction = (e.kind == EventKind::Transition || e.kind == EventKind::CallReturn) && e.src == p;
            if (reaction) {
                for (const auto& q : pending) {
                    const std::int64_t actual = e.tick - q.tick;
                    if (actual > d) report.violations.push_back({p, q.name, q.tick, d, actual, true});
                }
                pending.clear();
            }
            if (delivery) pending.push_back({e.name, e.tick});
        }
        for (const auto& q : pending) {
            const std::int64_t actual = trace.header.ticks - q.tick;
            if (actual > d) report.violations.push_back({p, q.name, q.tick, d, actual, false});
        }
    }
    std::stable_sort(report.violations.begin(), report.violations.end(),
                     [](const TimelinessViolation& a, const TimelinessViolation& b) { return a.trigger_tick < b.trigger_tick; });
    return report;
}

}  // namespace broom
