#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "broom/arith.hpp"
#include "model_internal.hpp"

namespace broom {
namespace ir {

namespace {
template <typename T>
int index_of(const std::vector<T>& v, std::string_view n) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i].name == n) return static_cast<int>(i);
    }
    return -1;
}
}  // namespace

int ProtocolInfo::find(std::string_view n) const { return index_of(sigs, n); }
int ActorIR::find_trigger(std::string_view n) const { return index_of(triggers, n); }
int ActorIR::find_port(std::string_view n) const { return index_of(ports, n); }
int ActorIR::find_part(std::string_view n) const { return index_of(parts, n); }
int ActorIR::find_attr(std::string_view n) const { return index_of(attrs, n); }
int ActorIR::find_state(std::string_view n) const {
    auto it = std::find(states.begin(), states.end(), n);
    return it == states.end() ? -1 : static_cast<int>(it - states.begin());
}
int DataIR::find_method(std::string_view n) const { return index_of(methods, n); }

}  // namespace ir

std::string type_name(const ir::Program& p, const ir::Type& t) {
    switch (t.kind) {
        case ir::TypeKind::Void: return "void";
        case ir::TypeKind::Bool: return "bool";
        case ir::TypeKind::Int: return "int";
        case ir::TypeKind::Real: return "real";
        case ir::TypeKind::Enum: return p.enums.at(t.index).name;
        case ir::TypeKind::Data: return p.data.at(t.index).name;
    }
    return "?";
}

namespace detail {
namespace {

using ir::Type;
using ir::TypeKind;

struct LowerFail {};

struct Scope {
    const ir::ActorIR* actor = nullptr;
    const ir::DataIR* data = nullptr;
    const std::vector<std::string>* param_names = nullptr;
    const std::vector<Type>* param_types = nullptr;
    bool constant = false;
    bool allow_out = false;

    const std::vector<ir::AttrInfo>* attrs() const {
        if (actor) return &actor->attrs;
        if (data) return &data->fields;
        return nullptr;
    }
};

bool is_comparison(BinaryOp op) {
    return op == BinaryOp::Lt || op == BinaryOp::Le || op == BinaryOp::Gt || op == BinaryOp::Ge ||
           op == BinaryOp::Eq || op == BinaryOp::Ne;
}

class Lowerer {
public:
    Lowerer(const ModelUnit& m, std::vector<Diagnostic>& out) : m_(m), out_(out) {}

    std::shared_ptr<const ir::Program> run() {
        p_.model_name = m_.name;
        for (const auto& e : m_.enums) p_.enums.push_back({e.name, e.members});
        for (std::size_t i = 0; i < m_.protocols.size(); ++i) proto_idx_[m_.protocols[i].name] = int(i);
        for (std::size_t i = 0; i < m_.data_classes.size(); ++i) data_idx_[m_.data_classes[i].name] = int(i);
        for (std::size_t i = 0; i < m_.actor_classes.size(); ++i) actor_idx_[m_.actor_classes[i].name] = int(i);
        for (std::size_t i = 0; i < m_.enums.size(); ++i) enum_idx_[m_.enums[i].name] = int(i);

        for (const auto& pr : m_.protocols) p_.protocols.push_back(lower_protocol(pr));
        lower_data_layouts();
        for (const auto& a : m_.actor_classes) p_.actors.push_back(actor_skeleton(a));
        check_containment();
        for (std::size_t i = 0; i < m_.actor_classes.size(); ++i) build_triggers(m_.actor_classes[i], p_.actors[i]);
        for (std::size_t i = 0; i < m_.actor_classes.size(); ++i) lower_channels(m_.actor_classes[i], p_.actors[i]);
        for (std::size_t i = 0; i < m_.data_classes.size(); ++i) declare_data_methods(m_.data_classes[i], p_.data[i]);
        for (std::size_t i = 0; i < m_.data_classes.size(); ++i) lower_data_methods(m_.data_classes[i], p_.data[i]);
        for (std::size_t i = 0; i < m_.actor_classes.size(); ++i) lower_behavior(m_.actor_classes[i], p_.actors[i]);

        auto it = actor_idx_.find(m_.root);
        if (it == actor_idx_.end()) {
            report(out_, code::unresolved, m_.root_span, "root '" + m_.root + "' is not an actor class");
        } else {
            p_.root = it->second;
        }
        return std::make_shared<const ir::Program>(std::move(p_));
    }

private:
    // ---------------------------------------------------------------- types
    std::optional<Type> resolve_type(const TypeRef& t, bool allow_data) {
        switch (t.kind) {
            case PrimKind::Bool: return Type::of(TypeKind::Bool);
            case PrimKind::Int: return Type::of(TypeKind::Int);
            case PrimKind::Real: return Type::of(TypeKind::Real);
            case PrimKind::Named: break;
        }
        if (auto it = enum_idx_.find(t.name); it != enum_idx_.end()) return Type::of(TypeKind::Enum, it->second);
        if (auto it = data_idx_.find(t.name); it != data_idx_.end()) {
            if (allow_data) return Type::of(TypeKind::Data, it->second);
            report(out_, code::type, t.span, "data class '" + t.name + "' cannot be used here; expected a primitive or enum type");
            return std::nullopt;
        }
        report(out_, code::unresolved, t.span, "unknown type '" + t.name + "'");
        return std::nullopt;
    }

    ir::SigInfo lower_sig(const Signature& s, bool message) {
        ir::SigInfo info;
        info.name = s.name;
        info.message = message;
        for (const auto& p : s.params) {
            info.params.push_back(resolve_type(p.type, false).value_or(Type::of(TypeKind::Real)));
            info.param_names.push_back(p.name);
        }
        if (s.ret) info.ret = resolve_type(*s.ret, false).value_or(Type{});
        return info;
    }

    ir::ProtocolInfo lower_protocol(const Protocol& pr) {
        ir::ProtocolInfo info;
        info.name = pr.name;
        info.span = pr.span;
        for (const auto& s : pr.methods) info.sigs.push_back(lower_sig(s, false));
        for (const auto& s : pr.messages) info.sigs.push_back(lower_sig(s, true));
        return info;
    }

    std::string tname(const Type& t) const { return type_name(p_, t); }

    // -------------------------------------------------------------- storage
    // Appends the storage of one attribute/field; returns false on failure.
    bool layout_attr(const Attribute& a, std::vector<ir::AttrInfo>& attrs, std::vector<Type>& slots,
                     std::vector<ir::Value>& init) {
        auto t = resolve_type(a.type, true);
        if (!t) return false;
        ir::AttrInfo info;
        info.name = a.name;
        info.type = *t;
        info.tunable = a.tunable;
        info.slot = static_cast<int>(slots.size());
        if (t->kind == TypeKind::Data) {
            const ir::DataIR& d = p_.data.at(t->index);
            info.width = static_cast<int>(d.slot_types.size());
            slots.insert(slots.end(), d.slot_types.begin(), d.slot_types.end());
            init.insert(init.end(), d.initial.begin(), d.initial.end());
            if (a.init) report(out_, code::type, a.init->span, "data attribute '" + a.name + "' cannot have an initializer");
            if (a.tunable) report(out_, code::type, a.span, "only primitive attributes can be tunable");
        } else {
            slots.push_back(*t);
            init.push_back(a.init ? constant_value(*a.init, *t) : default_value(*t));
        }
        attrs.push_back(std::move(info));
        return true;
    }

    static ir::Value default_value(const Type& t) {
        switch (t.kind) {
            case TypeKind::Bool: return false;
            case TypeKind::Real: return 0.0;
            default: return std::int64_t{0};
        }
    }

    ir::Value constant_value(const Expr& e, const Type& target) {
        Scope s;
        s.constant = true;
        try {
            ir::Expr x = coerce(lower_expr(e, s), target, e.span, "initializer");
            if (auto v = fold(x)) return *v;
            report(out_, code::type, e.span, "initializer is not a constant");
        } catch (const LowerFail&) {
        }
        return default_value(target);
    }

    std::optional<ir::Value> fold(const ir::Expr& e) {
        using ir::Op;
        switch (e.op) {
            case Op::Const: return e.constant;
            case Op::ToReal: {
                auto v = fold(e.args[0]);
                if (!v) return std::nullopt;
                return static_cast<double>(std::get<std::int64_t>(*v));
            }
            case Op::Neg: {
                auto v = fold(e.args[0]);
                if (!v) return std::nullopt;
                if (auto* i = std::get_if<std::int64_t>(&*v)) return arith::neg(*i);
                return -std::get<double>(*v);
            }
            case Op::Not: {
                auto v = fold(e.args[0]);
                if (!v) return std::nullopt;
                return !std::get<bool>(*v);
            }
            case Op::Binary: {
                auto a = fold(e.args[0]);
                auto b = fold(e.args[1]);
                if (!a || !b) return std::nullopt;
                return fold_binary(e, *a, *b);
            }
            default: return std::nullopt;
        }
    }

    std::optional<ir::Value> fold_binary(const ir::Expr& e, const ir::Value& a, const ir::Value& b) {
        const BinaryOp op = e.bop;
        if (op == BinaryOp::And) return std::get<bool>(a) && std::get<bool>(b);
        if (op == BinaryOp::Or) return std::get<bool>(a) || std::get<bool>(b);
        if (std::holds_alternative<double>(a)) {
            const double x = std::get<double>(a), y = std::get<double>(b);
            switch (op) {
                case BinaryOp::Add: return x + y;
                case BinaryOp::Sub: return x - y;
                case BinaryOp::Mul: return x * y;
                case BinaryOp::Div:
                    if (auto q = arith::div(x, y)) return *q;
                    report(out_, code::type, e.span, "division by zero in constant");
                    return std::nullopt;
                case BinaryOp::Lt: return x < y;
                case BinaryOp::Le: return x <= y;
                case BinaryOp::Gt: return x > y;
                case BinaryOp::Ge: return x >= y;
                case BinaryOp::Eq: return x == y;
                case BinaryOp::Ne: return x != y;
                default: return std::nullopt;
            }
        }
        if (std::holds_alternative<bool>(a)) {
            const bool x = std::get<bool>(a), y = std::get<bool>(b);
            if (op == BinaryOp::Eq) return x == y;
            if (op == BinaryOp::Ne) return x != y;
            return std::nullopt;
        }
        const std::int64_t x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
        switch (op) {
            case BinaryOp::Add: return arith::add(x, y);
            case BinaryOp::Sub: return arith::sub(x, y);
            case BinaryOp::Mul: return arith::mul(x, y);
            case BinaryOp::Div:
                if (auto q = arith::div(x, y)) return *q;
                report(out_, code::type, e.span, "division by zero in constant");
                return std::nullopt;
            case BinaryOp::Lt: return x < y;
            case BinaryOp::Le: return x <= y;
            case BinaryOp::Gt: return x > y;
            case BinaryOp::Ge: return x >= y;
            case BinaryOp::Eq: return x == y;
            case BinaryOp::Ne: return x != y;
            default: return std::nullopt;
        }
    }

    void lower_data_layouts() {
        p_.data.resize(m_.data_classes.size());
        std::vector<int> state(m_.data_classes.size(), 0);  // 0 new, 1 active, 2 done
        std::function<void(int)> visit = [&](int i) {
            state[i] = 1;
            const DataClass& d = m_.data_classes[i];
            for (const auto& f : d.fields) {
                if (f.type.kind != PrimKind::Named) continue;
                auto it = data_idx_.find(f.type.name);
                if (it == data_idx_.end()) continue;
                if (state[it->second] == 1) {
                    report(out_, code::contain_cycle, f.span,
                           "data class '" + d.name + "' contains itself through field '" + f.name + "'");
                    bad_data_.insert(i);
                } else if (state[it->second] == 0) {
                    visit(it->second);
                }
                if (bad_data_.count(it->second)) bad_data_.insert(i);
            }
            ir::DataIR& out = p_.data[i];
            out.name = d.name;
            out.span = d.span;
            if (!bad_data_.count(i)) {
                for (const auto& f : d.fields) layout_attr(f, out.fields, out.slot_types, out.initial);
            }
            state[i] = 2;
        };
        for (std::size_t i = 0; i < m_.data_classes.size(); ++i) {
            if (state[i] == 0) visit(static_cast<int>(i));
        }
    }

    // ---------------------------------------------------------------- actors
    ir::ActorIR actor_skeleton(const ActorClass& a) {
        ir::ActorIR c;
        c.name = a.name;
        c.span = a.span;
        for (const auto& at : a.attributes) layout_attr(at, c.attrs, c.slot_types, c.initial);
        for (const auto& p : a.ports) {
            ir::PortInfo info{p.name, p.direction, -1, p.span};
            if (auto it = proto_idx_.find(p.protocol); it != proto_idx_.end()) {
                info.protocol = it->second;
            } else {
                report(out_, code::unresolved, p.span, "port '" + p.name + "' uses unknown protocol '" + p.protocol + "'");
            }
            c.ports.push_back(std::move(info));
        }
        for (const auto& t : a.timers) c.timers.push_back(t.name);
        for (const auto& p : a.parts) {
            ir::PartIR part{p.name, -1, p.span};
            if (auto it = actor_idx_.find(p.class_name); it != actor_idx_.end()) {
                part.cls = it->second;
            } else {
                report(out_, code::unresolved, p.span, "part '" + p.name + "' uses unknown actor class '" + p.class_name + "'");
            }
            c.parts.push_back(std::move(part));
        }
        if (a.deadline_ticks) {
            if (*a.deadline_ticks < 1) {
                report(out_, code::invalid, a.deadline_span, "deadline must be a positive number of ticks");
            } else {
                c.deadline_ticks = a.deadline_ticks;
            }
        }
        return c;
    }

    void check_containment() {
        const std::size_t n = p_.actors.size();
        std::vector<int> state(n, 0);
        std::function<void(int)> visit = [&](int i) {
            state[i] = 1;
            for (const auto& part : p_.actors[i].parts) {
                if (part.cls < 0) continue;
                if (state[part.cls] == 1) {
                    report(out_, code::contain_cycle, part.span,
                           "containment cycle: '" + p_.actors[i].name + "' part '" + part.name + "' contains '" +
                               p_.actors[part.cls].name + "'");
                } else if (state[part.cls] == 0) {
                    visit(part.cls);
                }
            }
            state[i] = 2;
        };
        for (std::size_t i = 0; i < n; ++i) {
            if (state[i] == 0) visit(static_cast<int>(i));
        }
    }

    void build_triggers(const ActorClass& a, ir::ActorIR& c) {
        for (const auto& port : c.ports) {
            if (port.direction != PortDirection::Provided || port.protocol < 0) continue;
            for (const auto& sig : p_.protocols[port.protocol].sigs) {
                const int existing = c.find_trigger(sig.name);
                if (existing >= 0) {
                    const auto& t = c.triggers[existing];
                    const bool same = t.params == sig.params && t.ret == sig.ret &&
                                      (t.kind == ir::TriggerKind::Message) == sig.message;
                    if (!same) {
                        report(out_, code::type, port.span,
                               "signature '" + sig.name + "' on port '" + port.name +
                                   "' conflicts with another provided signature of the same name");
                    }
                    continue;
                }
                ir::Trigger t;
                t.name = sig.name;
                t.kind = sig.message ? ir::TriggerKind::Message : ir::TriggerKind::Method;
                t.params = sig.params;
                t.param_names = sig.param_names;
                t.ret = sig.ret;
                c.triggers.push_back(std::move(t));
            }
        }
        for (std::size_t i = 0; i < a.timers.size(); ++i) {
            if (c.find_trigger(a.timers[i].name) >= 0) {
                report(out_, code::duplicate, a.timers[i].span,
                       "timer '" + a.timers[i].name + "' clashes with a provided signature");
                continue;
            }
            ir::Trigger t;
            t.name = a.timers[i].name;
            t.kind = ir::TriggerKind::Timer;
            c.triggers.push_back(std::move(t));
        }
    }

    // ------------------------------------------------------------- channels
    struct EndInfo {
        ir::EndpointIR ep;
        PortDirection effective = PortDirection::Provided;
        int protocol = -1;
    };

    std::optional<EndInfo> resolve_endpoint(const Endpoint& e, const ir::ActorIR& c) {
        EndInfo info;
        const ir::ActorIR* owner = &c;
        if (!e.is_self()) {
            info.ep.part = c.find_part(e.part);
            if (info.ep.part < 0) {
                report(out_, code::chan_dangling, e.span, "channel endpoint '" + e.part + "." + e.port + "': no part '" + e.part + "'");
                return std::nullopt;
            }
            const int cls = c.parts[info.ep.part].cls;
            if (cls < 0) return std::nullopt;
            owner = &p_.actors[cls];
        }
        info.ep.port = owner->find_port(e.port);
        if (info.ep.port < 0) {
            report(out_, code::chan_dangling, e.span,
                   "channel endpoint '" + e.part + "." + e.port + "': '" + owner->name + "' has no port '" + e.port + "'");
            return std::nullopt;
        }
        const auto& port = owner->ports[info.ep.port];
        info.protocol = port.protocol;
        info.effective = port.direction;
        if (e.is_self()) {
            info.effective = port.direction == PortDirection::Provided ? PortDirection::Required : PortDirection::Provided;
        }
        return info;
    }

    void lower_channels(const ActorClass& a, ir::ActorIR& c) {
        std::map<std::pair<int, int>, int> required_use;
        for (const auto& ch : a.channels) {
            auto ea = resolve_endpoint(ch.a, c);
            auto eb = resolve_endpoint(ch.b, c);
            if (!ea || !eb) continue;
            if (ea->effective == eb->effective) {
                report(out_, code::port_incompat, ch.span,
                       std::string("channel joins two ") +
                           (ea->effective == PortDirection::Required ? "requiring" : "providing") + " endpoints");
                continue;
            }
            const EndInfo& req = ea->effective == PortDirection::Required ? *ea : *eb;
            const EndInfo& prov = ea->effective == PortDirection::Required ? *eb : *ea;
            if (req.protocol < 0 || prov.protocol < 0) continue;
            const auto& rp = p_.protocols[req.protocol];
            const auto& pp = p_.protocols[prov.protocol];
            bool ok = true;
            for (const auto& sig : rp.sigs) {
                const int j = pp.find(sig.name);
                if (j < 0) {
                    report(out_, code::port_incompat, ch.span,
                           "protocol '" + pp.name + "' does not provide '" + sig.name + "' required by '" + rp.name + "'");
                    ok = false;
                    continue;
                }
                const auto& other = pp.sigs[j];
                if (other.message != sig.message || other.params != sig.params || other.ret != sig.ret) {
                    report(out_, code::port_incompat, ch.span,
                           "signature '" + sig.name + "' differs between '" + rp.name + "' and '" + pp.name + "'");
                    ok = false;
                }
            }
            const auto key = std::make_pair(req.ep.part, req.ep.port);
            if (++required_use[key] > 1) {
                report(out_, code::fanout, ch.span, "endpoint '" + (req.ep.part < 0 ? std::string(kSelf) : c.parts[req.ep.part].name) +
                                                        "' port is already connected; one channel per required port");
                ok = false;
            }
            if (ok) c.channels.push_back(ir::ChannelIR{ea->ep, eb->ep, ch.span});
        }

        // Provided ports served here (not relayed inward) must implement their
        // value-returning methods.
        for (std::size_t pi = 0; pi < c.ports.size(); ++pi) {
            const auto& port = c.ports[pi];
            if (port.direction != PortDirection::Provided || port.protocol < 0) continue;
            const bool relayed = std::any_of(c.channels.begin(), c.channels.end(), [&](const ir::ChannelIR& ch) {
                return (ch.a.part < 0 && ch.a.port == int(pi)) || (ch.b.part < 0 && ch.b.port == int(pi));
            });
            if (relayed) continue;
            for (const auto& sig : p_.protocols[port.protocol].sigs) {
                if (sig.ret.kind == TypeKind::Void) continue;
                const bool has = std::any_of(a.methods.begin(), a.methods.end(), [&](const Method& m) { return m.name == sig.name; });
                if (!has) {
                    report(out_, code::unresolved, port.span,
                           "'" + c.name + "' provides '" + sig.name + "' through port '" + port.name + "' but has no method body for it");
                }
            }
        }
    }

    // -------------------------------------------------------- expressions
    ir::Expr coerce(ir::Expr e, const Type& target, const SourceSpan& span, const std::string& what) {
        if (e.type == target) return e;
        if (e.type.kind == TypeKind::Int && target.kind == TypeKind::Real) {
            ir::Expr w;
            w.op = ir::Op::ToReal;
            w.type = target;
            w.span = e.span;
            w.args.push_back(std::move(e));
            return w;
        }
        report(out_, code::type, span, what + ": expected " + tname(target) + ", found " + tname(e.type));
        throw LowerFail{};
    }

    [[noreturn]] void fail(std::string_view c, const SourceSpan& span, std::string msg) {
        report(out_, c, span, std::move(msg));
        throw LowerFail{};
    }

    // Resolves `attr.field.field` to a primitive slot (or a data receiver when
    // want_data is set).
    ir::Expr resolve_storage(const std::vector<std::string>& path, const Scope& s, const SourceSpan& span, bool want_data) {
        const auto* attrs = s.attrs();
        const int ai = attrs ? [&] {
            for (std::size_t i = 0; i < attrs->size(); ++i) {
                if ((*attrs)[i].name == path[0]) return int(i);
            }
            return -1;
        }()
                             : -1;
        if (ai < 0) fail(code::unresolved, span, "unknown name '" + path[0] + "'");
        const ir::AttrInfo* cur = &(*attrs)[ai];
        int slot = cur->slot;
        for (std::size_t k = 1; k < path.size(); ++k) {
            if (cur->type.kind != TypeKind::Data) fail(code::type, span, "'" + cur->name + "' has no fields");
            const ir::DataIR& d = p_.data[cur->type.index];
            auto it = std::find_if(d.fields.begin(), d.fields.end(), [&](const ir::AttrInfo& f) { return f.name == path[k]; });
            if (it == d.fields.end()) fail(code::unresolved, span, "data class '" + d.name + "' has no field '" + path[k] + "'");
            cur = &*it;
            slot += cur->slot;
        }
        const bool is_data = cur->type.kind == TypeKind::Data;
        if (is_data != want_data) {
            fail(code::type, span, want_data ? "'" + cur->name + "' is not a data object" : "'" + cur->name + "' is a data object; access one of its fields");
        }
        ir::Expr e;
        e.op = ir::Op::Slot;
        e.type = cur->type;
        e.slot = slot;
        e.access = path;
        e.span = span;
        return e;
    }

    ir::Expr lower_path(const Expr& e, const Scope& s) {
        const auto& path = e.path;
        if (!s.constant && path.size() == 1 && s.param_names) {
            for (std::size_t i = 0; i < s.param_names->size(); ++i) {
                if ((*s.param_names)[i] == path[0]) {
                    ir::Expr x;
                    x.op = ir::Op::Param;
                    x.index = static_cast<int>(i);
                    x.type = (*s.param_types)[i];
                    x.span = e.span;
                    return x;
                }
            }
        }
        const auto* attrs = s.attrs();
        const bool is_attr = !s.constant && attrs &&
                             std::any_of(attrs->begin(), attrs->end(), [&](const ir::AttrInfo& a) { return a.name == path[0]; });
        if (is_attr) return resolve_storage(path, s, e.span, false);
        if (auto it = enum_idx_.find(path[0]); it != enum_idx_.end()) {
            if (path.size() != 2) fail(code::unresolved, e.span, "enum literal must be written '" + path[0] + ".Member'");
            const auto& members = p_.enums[it->second].members;
            auto m = std::find(members.begin(), members.end(), path[1]);
            if (m == members.end()) fail(code::unresolved, e.span, "enum '" + path[0] + "' has no member '" + path[1] + "'");
            ir::Expr x;
            x.op = ir::Op::Const;
            x.constant = static_cast<std::int64_t>(m - members.begin());
            x.type = Type::of(TypeKind::Enum, it->second);
            x.span = e.span;
            return x;
        }
        fail(code::unresolved, e.span, s.constant ? "'" + path[0] + "' is not a constant" : "unknown name '" + path[0] + "'");
    }

    std::vector<ir::Expr> lower_args(const std::vector<Expr>& args, const std::vector<Type>& types, const Scope& s,
                                     const SourceSpan& span, const std::string& callee) {
        if (args.size() != types.size()) {
            fail(code::type, span, "'" + callee + "' expects " + std::to_string(types.size()) + " argument(s), got " +
                                       std::to_string(args.size()));
        }
        std::vector<ir::Expr> out;
        for (std::size_t i = 0; i < args.size(); ++i) {
            out.push_back(coerce(lower_expr(args[i], s), types[i], args[i].span, "argument " + std::to_string(i + 1) + " of '" + callee + "'"));
        }
        return out;
    }

    ir::Expr lower_call(const Expr& e, const Scope& s) {
        if (s.constant) fail(code::type, e.span, "calls are not allowed in constants");
        const std::string& name = e.path.back();
        std::vector<std::string> recv(e.path.begin(), e.path.end() - 1);
        if (recv.empty()) fail(code::unresolved, e.span, "call to '" + name + "' needs a port or data receiver");
        if (s.actor && recv.size() == 1) {
            const int pi = s.actor->find_port(recv[0]);
            if (pi >= 0) {
                const auto& port = s.actor->ports[pi];
                if (port.direction != PortDirection::Required) {
                    fail(code::type, e.span, "port '" + port.name + "' is provided; calls go through required ports");
                }
                if (port.protocol < 0) throw LowerFail{};
                const auto& proto = p_.protocols[port.protocol];
                const int si = proto.find(name);
                if (si < 0) fail(code::unresolved, e.span, "protocol '" + proto.name + "' has no signature '" + name + "'");
                const auto& sig = proto.sigs[si];
                if (sig.message) fail(code::type, e.span, "'" + name + "' is a message; use 'send'");
                ir::Expr x;
                x.op = ir::Op::PortCall;
                x.index = pi;
                x.member = si;
                x.type = sig.ret;
                x.span = e.span;
                x.args = lower_args(e.args, sig.params, s, e.span, name);
                return x;
            }
        }
        ir::Expr x = resolve_storage(recv, s, e.span, true);
        const ir::DataIR& d = p_.data[x.type.index];
        const int mi = d.find_method(name);
        if (mi < 0) fail(code::unresolved, e.span, "data class '" + d.name + "' has no accessor '" + name + "'");
        x.op = ir::Op::DataCall;
        x.index = x.type.index;
        x.member = mi;
        x.type = d.methods[mi].ret;
        x.args = lower_args(e.args, d.methods[mi].params, s, e.span, name);
        return x;
    }

    ir::Expr lower_expr(const Expr& e, const Scope& s) {
        ir::Expr x;
        x.span = e.span;
        switch (e.kind) {
            case ExprKind::Literal:
                x.op = ir::Op::Const;
                if (const auto* b = std::get_if<bool>(&e.literal)) {
                    x.constant = *b;
                    x.type = Type::of(TypeKind::Bool);
                } else if (const auto* i = std::get_if<std::int64_t>(&e.literal)) {
                    x.constant = *i;
                    x.type = Type::of(TypeKind::Int);
                } else {
                    x.constant = std::get<double>(e.literal);
                    x.type = Type::of(TypeKind::Real);
                }
                return x;
            case ExprKind::Path: return lower_path(e, s);
            case ExprKind::Call: {
                ir::Expr c = lower_call(e, s);
                return c;
            }
            case ExprKind::Out:
                if (!s.allow_out) fail(code::type, e.span, "'out' is only available inside a block actor");
                x.op = ir::Op::BlockOut;
                x.type = Type::of(TypeKind::Real);
                return x;
            case ExprKind::Unary: {
                ir::Expr a = lower_expr(e.args[0], s);
                if (e.unary == UnaryOp::Neg) {
                    if (!a.type.numeric()) fail(code::type, e.span, "'-' needs a number, found " + tname(a.type));
                    x.op = ir::Op::Neg;
                } else {
                    if (a.type.kind != TypeKind::Bool) fail(code::type, e.span, "'not' needs bool, found " + tname(a.type));
                    x.op = ir::Op::Not;
                }
                x.type = a.type;
                x.args.push_back(std::move(a));
                return x;
            }
            case ExprKind::Binary: return lower_binary(e, s);
        }
        throw LowerFail{};
    }

    ir::Expr lower_binary(const Expr& e, const Scope& s) {
        ir::Expr a = lower_expr(e.args[0], s);
        ir::Expr b = lower_expr(e.args[1], s);
        ir::Expr x;
        x.op = ir::Op::Binary;
        x.bop = e.binary;
        x.span = e.span;
        const BinaryOp op = e.binary;
        auto mismatch = [&] {
            fail(code::type, e.span, "operands " + tname(a.type) + " and " + tname(b.type) + " do not fit this operator");
        };
        if (op == BinaryOp::And || op == BinaryOp::Or) {
            if (a.type.kind != TypeKind::Bool || b.type.kind != TypeKind::Bool) mismatch();
            x.type = Type::of(TypeKind::Bool);
        } else if (a.type.numeric() && b.type.numeric()) {
            const bool real = a.type.kind == TypeKind::Real || b.type.kind == TypeKind::Real;
            if (real) {
                a = coerce(std::move(a), Type::of(TypeKind::Real), e.span, "operand");
                b = coerce(std::move(b), Type::of(TypeKind::Real), e.span, "operand");
            }
            x.type = is_comparison(op) ? Type::of(TypeKind::Bool) : a.type;
        } else if ((op == BinaryOp::Eq || op == BinaryOp::Ne) && a.type == b.type && a.type.primitive()) {
            x.type = Type::of(TypeKind::Bool);
        } else {
            mismatch();
        }
        x.args.push_back(std::move(a));
        x.args.push_back(std::move(b));
        return x;
    }

    // ---------------------------------------------------------- statements
    std::optional<ir::Stmt> lower_stmt(const Stmt& st, const Scope& s) {
        try {
            ir::Stmt out;
            out.span = st.span;
            switch (st.kind) {
                case StmtKind::Assign: {
                    if (s.param_names && st.target.size() == 1 &&
                        std::find(s.param_names->begin(), s.param_names->end(), st.target[0]) != s.param_names->end()) {
                        fail(code::type, st.span, "parameter '" + st.target[0] + "' cannot be assigned");
                    }
                    ir::Expr lhs = resolve_storage(st.target, s, st.span, false);
                    out.op = ir::StmtOp::Assign;
                    out.slot = lhs.slot;
                    out.access = lhs.access;
                    out.type = lhs.type;
                    out.value = coerce(lower_expr(st.value, s), lhs.type, st.value.span, "assignment");
                    return out;
                }
                case StmtKind::Eval:
                    out.op = ir::StmtOp::Eval;
                    out.value = lower_expr(st.value, s);
                    return out;
                case StmtKind::Send: {
                    if (!s.actor) fail(code::type, st.span, "data classes are passive and cannot send messages");
                    const int pi = s.actor->find_port(st.target[0]);
                    if (pi < 0) fail(code::unresolved, st.span, "unknown port '" + st.target[0] + "'");
                    const auto& port = s.actor->ports[pi];
                    if (port.direction != PortDirection::Required) fail(code::type, st.span, "messages are sent through required ports");
                    if (port.protocol < 0) throw LowerFail{};
                    const auto& proto = p_.protocols[port.protocol];
                    const int si = proto.find(st.target[1]);
                    if (si < 0) fail(code::unresolved, st.span, "protocol '" + proto.name + "' has no signature '" + st.target[1] + "'");
                    if (!proto.sigs[si].message) fail(code::type, st.span, "'" + st.target[1] + "' is a method; call it instead of sending");
                    out.op = ir::StmtOp::Send;
                    out.port = pi;
                    out.member = si;
                    out.args = lower_args(st.args, proto.sigs[si].params, s, st.span, st.target[1]);
                    return out;
                }
                case StmtKind::SetTimer:
                case StmtKind::CancelTimer: {
                    if (!s.actor) fail(code::type, st.span, "data classes are passive and cannot use timers");
                    auto it = std::find(s.actor->timers.begin(), s.actor->timers.end(), st.target[0]);
                    if (it == s.actor->timers.end()) fail(code::unresolved, st.span, "unknown timer '" + st.target[0] + "'");
                    out.timer = static_cast<int>(it - s.actor->timers.begin());
                    if (st.kind == StmtKind::SetTimer) {
                        out.op = ir::StmtOp::SetTimer;
                        out.value = coerce(lower_expr(st.value, s), Type::of(TypeKind::Int), st.value.span, "timer ticks");
                    } else {
                        out.op = ir::StmtOp::CancelTimer;
                    }
                    return out;
                }
                case StmtKind::Return: fail(code::type, st.span, "'return' is only allowed as the last statement of a method");
            }
        } catch (const LowerFail&) {
        }
        return std::nullopt;
    }

    ir::MethodIR lower_method(const Method& m, Scope s) {
        ir::MethodIR out;
        out.name = m.name;
        out.span = m.span;
        for (const auto& p : m.params) {
            out.params.push_back(resolve_type(p.type, false).value_or(Type::of(TypeKind::Real)));
            out.param_names.push_back(p.name);
        }
        if (m.ret) out.ret = resolve_type(*m.ret, false).value_or(Type{});
        s.param_names = &out.param_names;
        s.param_types = &out.params;
        for (std::size_t i = 0; i < m.body.size(); ++i) {
            const Stmt& st = m.body[i];
            if (st.kind == StmtKind::Return) {
                if (i + 1 != m.body.size()) {
                    report(out_, code::type, st.span, "'return' must be the last statement of a method");
                    continue;
                }
                if (out.ret.kind == TypeKind::Void) {
                    report(out_, code::type, st.span, "method '" + m.name + "' returns nothing");
                    continue;
                }
                try {
                    out.result = coerce(lower_expr(st.value, s), out.ret, st.value.span, "return value");
                } catch (const LowerFail&) {
                }
                continue;
            }
            if (auto x = lower_stmt(st, s)) out.body.push_back(std::move(*x));
        }
        if (out.ret.kind != TypeKind::Void && !out.result &&
            (m.body.empty() || m.body.back().kind != StmtKind::Return)) {
            report(out_, code::type, m.span, "method '" + m.name + "' must end with 'return'");
        }
        return out;
    }

    // Accessors may call accessors of nested data objects declared in any
    // order, so every signature is registered before any body is lowered.
    void declare_data_methods(const DataClass& d, ir::DataIR& out) {
        for (const auto& m : d.accessors) {
            ir::MethodIR sig;
            sig.name = m.name;
            sig.span = m.span;
            for (const auto& p : m.params) sig.params.push_back(resolve_type(p.type, false).value_or(Type::of(TypeKind::Real)));
            if (m.ret) sig.ret = resolve_type(*m.ret, false).value_or(Type{});
            out.methods.push_back(std::move(sig));
        }
    }

    void lower_data_methods(const DataClass& d, ir::DataIR& out) {
        const int index = static_cast<int>(&out - p_.data.data());
        if (bad_data_.count(index)) return;
        Scope s;
        s.data = &out;
        for (std::size_t i = 0; i < d.accessors.size(); ++i) {
            std::vector<Diagnostic> scratch;
            std::swap(scratch, out_);
            ir::MethodIR m = lower_method(d.accessors[i], s);
            std::swap(scratch, out_);
            // Parameter/return type errors were already reported by declare_data_methods.
            for (auto& diag : scratch) {
                const bool dup = std::any_of(out_.begin(), out_.end(), [&](const Diagnostic& x) {
                    return x.code == diag.code && x.message == diag.message && x.span.line == diag.span.line &&
                           x.span.column == diag.span.column && x.span.file == diag.span.file;
                });
                if (!dup) out_.push_back(std::move(diag));
            }
            check_no_self_calls(m, index);
            out.methods[i] = std::move(m);
        }
    }

    void check_no_self_calls(const ir::MethodIR& m, int data_index) {
        std::function<void(const ir::Expr&)> walk = [&](const ir::Expr& e) {
            if (e.op == ir::Op::DataCall && e.index == data_index) {
                report(out_, code::call_cycle, e.span, "accessor calls on the same data class could recurse");
            }
            for (const auto& a : e.args) walk(a);
        };
        for (const auto& st : m.body) {
            walk(st.value);
            for (const auto& a : st.args) walk(a);
        }
        if (m.result) walk(*m.result);
    }

    void lower_behavior(const ActorClass& a, ir::ActorIR& c) {
        Scope base;
        base.actor = &c;
        base.allow_out = a.block.has_value();

        for (const auto& m : a.methods) {
            const int ti = c.find_trigger(m.name);
            if (ti < 0 || c.triggers[ti].kind == ir::TriggerKind::Timer) {
                report(out_, code::unresolved, m.span, "method '" + m.name + "' does not implement any provided signature");
                continue;
            }
            ir::MethodIR lowered = lower_method(m, base);
            const auto& trig = c.triggers[ti];
            if (lowered.params != trig.params || lowered.ret != trig.ret) {
                report(out_, code::type, m.span, "method '" + m.name + "' does not match its protocol signature");
                continue;
            }
            c.triggers[ti].method = static_cast<int>(c.methods.size());
            c.methods.push_back(std::move(lowered));
        }

        if (a.machine && a.block) {
            report(out_, code::invalid, a.block->span, "actor class '" + a.name + "' cannot have both a state machine and a block");
        }
        if (a.machine) lower_machine(*a.machine, c, base);
        if (a.block) lower_block(*a.block, c, base);
    }

    void lower_machine(const StateMachine& sm, ir::ActorIR& c, const Scope& base) {
        c.states = sm.states;
        c.initial_state = c.find_state(sm.initial);
        if (c.initial_state < 0) {
            report(out_, code::unresolved, sm.span, "initial state '" + sm.initial + "' is not a declared state");
            c.initial_state = 0;
        }
        for (const auto& t : sm.transitions) {
            ir::TransitionIR tr;
            tr.span = t.span;
            tr.from = c.find_state(t.from);
            tr.to = c.find_state(t.to);
            if (tr.from < 0) report(out_, code::unresolved, t.span, "unknown state '" + t.from + "'");
            if (tr.to < 0) report(out_, code::unresolved, t.span, "unknown state '" + t.to + "'");
            tr.trigger = c.find_trigger(t.trigger);
            if (tr.trigger < 0) {
                report(out_, code::unresolved, t.span,
                       "trigger '" + t.trigger + "' is not a provided message, method or timer of '" + c.name + "'");
                continue;
            }
            if (tr.from < 0 || tr.to < 0) continue;
            Scope s = base;
            s.param_names = &c.triggers[tr.trigger].param_names;
            s.param_types = &c.triggers[tr.trigger].params;
            if (t.guard) {
                try {
                    tr.guard = coerce(lower_expr(*t.guard, s), Type::of(TypeKind::Bool), t.guard->span, "guard");
                } catch (const LowerFail&) {
                }
            }
            for (const auto& st : t.actions) {
                if (auto x = lower_stmt(st, s)) tr.actions.push_back(std::move(*x));
            }
            c.triggers[tr.trigger].transitions.push_back(static_cast<int>(c.transitions.size()));
            c.transitions.push_back(std::move(tr));
        }
    }

    void lower_block(const BlockRef& b, ir::ActorIR& c, const Scope& base) {
        ir::BlockIR out;
        out.kind = b.kind;
        out.params = b.params;
        out.span = b.span;
        for (double v : b.params) {
            if (!std::isfinite(v)) report(out_, code::invalid, b.span, "block parameters must be finite");
        }
        if (b.kind == BlockKind::Pt1 && !(b.params.at(1) > 0.0)) {
            report(out_, code::invalid, b.span, "pt1 time constant must be positive");
        }
        const std::size_t lo = b.kind == BlockKind::Pi ? 2 : 0;
        if (b.kind != BlockKind::Pt1 && !(b.params.at(lo) < b.params.at(lo + 1))) {
            report(out_, code::invalid, b.span, "block limits need lo < hi");
        }
        try {
            out.input = coerce(lower_expr(b.input, base), Type::of(TypeKind::Real), b.input.span, "block input");
        } catch (const LowerFail&) {
        }
        c.block = std::move(out);
    }

    const ModelUnit& m_;
    std::vector<Diagnostic>& out_;
    ir::Program p_;
    std::map<std::string, int> enum_idx_, proto_idx_, data_idx_, actor_idx_;
    std::set<int> bad_data_;
};

}  // namespace

std::shared_ptr<const ir::Program> lower_program(const ModelUnit& flat, std::vector<Diagnostic>& out) {
    return Lowerer(flat, out).run();
}

}  // namespace detail

std::shared_ptr<const ir::Program> lower(const ModelUnit& flat) {
    std::vector<Diagnostic> diags;
    auto p = detail::lower_program(flat, diags);
    if (detail::has_errors(diags)) {
        sort_diagnostics(diags);
        throw DiagnosticError(std::move(diags));
    }
    return p;
}

}  // namespace broom
