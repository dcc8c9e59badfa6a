#include <functional>
#include <map>
#include <set>

#include "broom/model.hpp"
#include "model_internal.hpp"

namespace broom {
namespace detail {

void report(std::vector<Diagnostic>& out, std::string_view c, const SourceSpan& span, std::string msg) {
    out.push_back(Diagnostic{std::string(c), span, std::move(msg)});
}

bool has_errors(const std::vector<Diagnostic>& diags) {
    for (const auto& d : diags) {
        if (!d.is_warning()) return true;
    }
    return false;
}

namespace {

class NameSet {
public:
    NameSet(std::vector<Diagnostic>& out, std::string what) : out_(out), what_(std::move(what)) {}

    void add(const std::string& name, const SourceSpan& span) {
        if (!seen_.insert(name).second) report(out_, code::duplicate, span, what_ + " '" + name + "' declared twice");
    }

private:
    std::vector<Diagnostic>& out_;
    std::string what_;
    std::set<std::string> seen_;
};

void check_params(const std::vector<Param>& ps, std::vector<Diagnostic>& out) {
    NameSet names(out, "parameter");
    for (const auto& p : ps) names.add(p.name, p.span);
}

void check_class_members(const ActorClass& a, std::vector<Diagnostic>& out) {
    NameSet members(out, "member");
    for (const auto& p : a.ports) members.add(p.name, p.span);
    for (const auto& at : a.attributes) members.add(at.name, at.span);
    for (const auto& t : a.timers) members.add(t.name, t.span);
    for (const auto& p : a.parts) members.add(p.name, p.span);
    // Methods implement port signatures, so they live in their own namespace.
    NameSet methods(out, "method");
    for (const auto& m : a.methods) {
        methods.add(m.name, m.span);
        check_params(m.params, out);
    }
    if (a.machine) {
        NameSet states(out, "state");
        for (const auto& s : a.machine->states) states.add(s, a.machine->span);
    }
}

}  // namespace

void check_names(const ModelUnit& m, std::vector<Diagnostic>& out) {
    NameSet top(out, "type");
    for (const auto& e : m.enums) {
        top.add(e.name, e.span);
        NameSet members(out, "enum member");
        for (const auto& mem : e.members) members.add(mem, e.span);
    }
    for (const auto& p : m.protocols) {
        top.add(p.name, p.span);
        NameSet sigs(out, "signature");
        for (const auto& s : p.methods) {
            sigs.add(s.name, s.span);
            check_params(s.params, out);
        }
        for (const auto& s : p.messages) {
            sigs.add(s.name, s.span);
            check_params(s.params, out);
        }
    }
    for (const auto& d : m.data_classes) {
        top.add(d.name, d.span);
        NameSet fields(out, "field");
        for (const auto& f : d.fields) fields.add(f.name, f.span);
        NameSet methods(out, "accessor");
        for (const auto& a : d.accessors) {
            methods.add(a.name, a.span);
            check_params(a.params, out);
        }
    }
    for (const auto& a : m.actor_classes) {
        top.add(a.name, a.span);
        check_class_members(a, out);
    }
}

void check_inheritance(const ModelUnit& m, std::vector<Diagnostic>& out) {
    for (const auto& a : m.actor_classes) {
        if (a.superclasses.size() > 1) {
            report(out, code::multi_inherit, a.superclasses[1].span,
                   "actor class '" + a.name + "' may only have one superclass");
        }
        for (const auto& s : a.superclasses) {
            if (!m.find_actor(s.name)) {
                report(out, code::unresolved, s.span, "superclass '" + s.name + "' is not an actor class");
            }
        }
    }
    if (has_errors(out)) return;
    // Single superclass each: walk the chain and look for a repeat.
    for (const auto& a : m.actor_classes) {
        std::set<std::string> seen{a.name};
        const ActorClass* cur = &a;
        while (!cur->superclasses.empty()) {
            const std::string& next = cur->superclasses.front().name;
            if (!seen.insert(next).second) {
                report(out, code::invalid, a.span, "inheritance cycle through actor class '" + a.name + "'");
                break;
            }
            cur = m.find_actor(next);
        }
    }
}

ModelUnit flatten(const ModelUnit& m, std::vector<Diagnostic>& out) {
    ModelUnit result = m;
    std::map<std::string, ActorClass> done;

    std::function<const ActorClass&(const ActorClass&)> flat = [&](const ActorClass& a) -> const ActorClass& {
        if (auto it = done.find(a.name); it != done.end()) return it->second;
        if (a.superclasses.empty()) return done.emplace(a.name, a).first->second;

        const ActorClass& base = flat(*m.find_actor(a.superclasses.front().name));
        ActorClass c = base;
        c.name = a.name;
        c.span = a.span;
        c.superclasses.clear();

        std::set<std::string> inherited;
        for (const auto& p : base.ports) inherited.insert(p.name);
        for (const auto& x : base.attributes) inherited.insert(x.name);
        for (const auto& t : base.timers) inherited.insert(t.name);
        for (const auto& p : base.parts) inherited.insert(p.name);
        std::set<std::string> inherited_methods;
        for (const auto& x : base.methods) inherited_methods.insert(x.name);

        auto clash = [&](const std::string& name, const SourceSpan& span, const std::set<std::string>& names) {
            if (!names.count(name)) return false;
            report(out, code::override_member, span,
                   "'" + a.name + "' redeclares inherited member '" + name + "'");
            return true;
        };
        for (const auto& p : a.ports) {
            if (!clash(p.name, p.span, inherited)) c.ports.push_back(p);
        }
        for (const auto& x : a.attributes) {
            if (!clash(x.name, x.span, inherited)) c.attributes.push_back(x);
        }
        for (const auto& t : a.timers) {
            if (!clash(t.name, t.span, inherited)) c.timers.push_back(t);
        }
        for (const auto& x : a.methods) {
            if (!clash(x.name, x.span, inherited_methods)) c.methods.push_back(x);
        }
        for (const auto& p : a.parts) {
            if (!clash(p.name, p.span, inherited)) c.parts.push_back(p);
        }
        for (const auto& ch : a.channels) c.channels.push_back(ch);
        if (a.machine) {
            if (base.machine) {
                report(out, code::override_member, a.machine->span,
                       "'" + a.name + "' redefines the inherited state machine");
            } else {
                c.machine = a.machine;
            }
        }
        if (a.block) {
            if (base.block) {
                report(out, code::override_member, a.block->span, "'" + a.name + "' redefines the inherited block");
            } else {
                c.block = a.block;
            }
        }
        if (a.deadline_ticks) {
            if (base.deadline_ticks) {
                report(out, code::override_member, a.deadline_span,
                       "'" + a.name + "' redefines the inherited deadline");
            } else {
                c.deadline_ticks = a.deadline_ticks;
                c.deadline_span = a.deadline_span;
            }
        }
        return done.emplace(a.name, std::move(c)).first->second;
    };

    for (auto& a : result.actor_classes) a = flat(a);
    return result;
}

}  // namespace detail

ModelUnit flatten_inheritance(const ModelUnit& model) {
    std::vector<Diagnostic> diags;
    detail::check_inheritance(model, diags);
    if (detail::has_errors(diags)) throw DiagnosticError(std::move(diags));
    ModelUnit flat = detail::flatten(model, diags);
    if (detail::has_errors(diags)) {
        sort_diagnostics(diags);
        throw DiagnosticError(std::move(diags));
    }
    return flat;
}

std::vector<Diagnostic> validate(const ModelUnit& model) {
    std::vector<Diagnostic> diags;
    detail::check_names(model, diags);
    detail::check_inheritance(model, diags);
    if (!detail::has_errors(diags)) {
        ModelUnit flat = detail::flatten(model, diags);
        if (!detail::has_errors(diags)) {
            auto program = detail::lower_program(flat, diags);
            if (!detail::has_errors(diags)) detail::build_tree(program, diags);
        }
    }
    sort_diagnostics(diags);
    // The same rule can fire once per instance of a class; keep one copy.
    diags.erase(std::unique(diags.begin(), diags.end(),
                            [](const Diagnostic& a, const Diagnostic& b) {
                                return a.code == b.code && a.message == b.message && a.span.file == b.span.file &&
                                       a.span.line == b.span.line && a.span.column == b.span.column;
                            }),
                diags.end());
    return diags;
}

}  // namespace broom
