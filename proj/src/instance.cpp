#include <algorithm>
#include <functional>
#include <map>
#include <queue>
#include <set>

#include "model_internal.hpp"

namespace broom {

int InstanceTree::find(std::string_view path) const {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].path == path) return static_cast<int>(i);
    }
    return -1;
}

namespace {

// Index of `node` among its parent's parts.
int part_index(const InstanceTree& t, int node) {
    const auto& parent = t.nodes[t.nodes[node].parent];
    const auto& siblings = parent.children;
    return static_cast<int>(std::find(siblings.begin(), siblings.end(), node) - siblings.begin());
}

// The endpoint joined to (part, port) by a channel of `cls`, if any.
const ir::EndpointIR* peer(const ir::ActorIR& cls, int part, int port) {
    for (const auto& ch : cls.channels) {
        if (ch.a.part == part && ch.a.port == port) return &ch.b;
        if (ch.b.part == part && ch.b.port == port) return &ch.a;
    }
    return nullptr;
}

}  // namespace

std::optional<CallTarget> InstanceTree::resolve_provided(int node, int port) const {
    for (;;) {
        const ir::EndpointIR* inner = peer(cls(node), -1, port);
        if (!inner) return CallTarget{node, port, -1};
        if (inner->part < 0) return std::nullopt;
        node = nodes[node].children[inner->part];
        port = inner->port;
    }
}

namespace {

std::optional<CallTarget> resolve_required(const InstanceTree& t, int node, int port) {
    for (;;) {
        if (t.nodes[node].parent < 0) return std::nullopt;
        const int parent = t.nodes[node].parent;
        const ir::EndpointIR* other = peer(t.cls(parent), part_index(t, node), port);
        if (!other) return std::nullopt;
        if (other->part >= 0) return t.resolve_provided(t.nodes[parent].children[other->part], other->port);
        node = parent;
        port = other->port;
    }
}

}  // namespace

std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::string, std::string>>
InstanceTree::binding_map() const {
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::string, std::string>> out;
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const auto& c = cls(static_cast<int>(n));
        for (std::size_t p = 0; p < bindings[n].size(); ++p) {
            if (bindings[n][p].empty()) continue;
            const auto& proto = program->protocols[c.ports[p].protocol];
            for (std::size_t s = 0; s < bindings[n][p].size(); ++s) {
                const CallTarget& target = bindings[n][p][s];
                out[{nodes[n].path, c.ports[p].name, proto.sigs[s].name}] = {
                    nodes[target.instance].path, cls(target.instance).ports[target.port].name};
            }
        }
    }
    return out;
}

bool InstanceTree::delayed(int reader, int source) const {
    if (reader < 0 || reader >= static_cast<int>(delayed_inputs.size())) return false;
    const auto& d = delayed_inputs[reader];
    return std::find(d.begin(), d.end(), source) != d.end();
}

namespace detail {
namespace {

void for_each_expr(const ir::Expr& e, const std::function<void(const ir::Expr&)>& f) {
    f(e);
    for (const auto& a : e.args) for_each_expr(a, f);
}

void for_each_stmt_expr(const ir::Stmt& s, const std::function<void(const ir::Expr&)>& f) {
    for_each_expr(s.value, f);
    for (const auto& a : s.args) for_each_expr(a, f);
}

// Every expression evaluated when `trigger` is delivered to an instance of `c`.
void for_each_handler_expr(const ir::ActorIR& c, int trigger, const std::function<void(const ir::Expr&)>& f) {
    const auto& t = c.triggers[trigger];
    for (int ti : t.transitions) {
        const auto& tr = c.transitions[ti];
        if (tr.guard) for_each_expr(*tr.guard, f);
        for (const auto& s : tr.actions) for_each_stmt_expr(s, f);
    }
    if (t.method >= 0) {
        const auto& m = c.methods[t.method];
        for (const auto& s : m.body) for_each_stmt_expr(s, f);
        if (m.result) for_each_expr(*m.result, f);
    }
}

class TreeBuilder {
public:
    TreeBuilder(std::shared_ptr<const ir::Program> p, std::vector<Diagnostic>& out) : out_(out) {
        t_.program = std::move(p);
    }

    std::optional<InstanceTree> run() {
        if (t_.program->root < 0) return std::nullopt;
        add_node(t_.program->root, "root", "", -1, SourceSpan{});
        bind();
        if (has_errors(out_)) return std::nullopt;
        check_call_cycles();
        if (has_errors(out_)) return std::nullopt;
        order_blocks();
        if (has_errors(out_)) return std::nullopt;
        return std::move(t_);
    }

private:
    void add_node(int cls, std::string path, std::string part, int parent, SourceSpan span) {
        const int id = static_cast<int>(t_.nodes.size());
        t_.nodes.push_back(InstanceNode{path, std::move(part), cls, parent, {}, std::move(span)});
        if (parent >= 0) t_.nodes[parent].children.push_back(id);
        for (const auto& p : t_.program->actors[cls].parts) add_node(p.cls, path + "." + p.name, p.name, id, p.span);
    }

    void bind() {
        t_.bindings.resize(t_.nodes.size());
        for (std::size_t n = 0; n < t_.nodes.size(); ++n) {
            const auto& c = t_.cls(static_cast<int>(n));
            t_.bindings[n].resize(c.ports.size());
            for (std::size_t p = 0; p < c.ports.size(); ++p) {
                const auto& port = c.ports[p];
                if (port.direction != PortDirection::Required) continue;
                auto target = resolve_required(t_, static_cast<int>(n), static_cast<int>(p));
                if (!target) {
                    report(out_, code::unbound, port.span,
                           "required port '" + port.name + "' of instance '" + t_.nodes[n].path + "' is not bound to a provider");
                    continue;
                }
                const auto& serving = t_.cls(target->instance);
                for (const auto& sig : t_.program->protocols[port.protocol].sigs) {
                    CallTarget ct = *target;
                    ct.trigger = serving.find_trigger(sig.name);
                    t_.bindings[n][p].push_back(ct);
                }
            }
        }
    }

    using Handler = std::pair<int, int>;  // (instance, trigger)

    // Sync calls made while handling (instance, trigger), with the call site.
    std::vector<std::pair<Handler, SourceSpan>> callees(Handler h) const {
        std::vector<std::pair<Handler, SourceSpan>> out;
        for_each_handler_expr(t_.cls(h.first), h.second, [&](const ir::Expr& e) {
            if (e.op != ir::Op::PortCall) return;
            const CallTarget& ct = t_.bindings[h.first][e.index][e.member];
            out.push_back({{ct.instance, ct.trigger}, e.span});
        });
        return out;
    }

    std::string handler_name(Handler h) const {
        return t_.nodes[h.first].path + "." + t_.cls(h.first).triggers[h.second].name;
    }

    void check_call_cycles() {
        std::map<Handler, int> state;  // 1 on stack, 2 done
        std::vector<Handler> stack;
        std::function<void(Handler)> visit = [&](Handler h) {
            state[h] = 1;
            stack.push_back(h);
            for (const auto& [next, span] : callees(h)) {
                const int s = state.count(next) ? state[next] : 0;
                if (s == 1) {
                    std::string chain;
                    auto it = std::find(stack.begin(), stack.end(), next);
                    for (; it != stack.end(); ++it) chain += handler_name(*it) + " -> ";
                    report(out_, code::call_cycle, span, "synchronous call cycle: " + chain + handler_name(next));
                } else if (s == 0) {
                    visit(next);
                }
            }
            stack.pop_back();
            state[h] = 2;
        };
        for (std::size_t n = 0; n < t_.nodes.size(); ++n) {
            for (std::size_t tr = 0; tr < t_.cls(static_cast<int>(n)).triggers.size(); ++tr) {
                Handler h{static_cast<int>(n), static_cast<int>(tr)};
                if (!state.count(h)) visit(h);
            }
        }
    }

    // Block instances whose `out` is read, directly or through sync calls,
    // while handling h.
    const std::set<int>& handler_reads(Handler h) {
        if (auto it = reads_.find(h); it != reads_.end()) return it->second;
        std::set<int> out;
        for_each_handler_expr(t_.cls(h.first), h.second, [&](const ir::Expr& e) {
            if (e.op == ir::Op::BlockOut) out.insert(h.first);
        });
        for (const auto& [next, span] : callees(h)) {
            const auto& r = handler_reads(next);
            out.insert(r.begin(), r.end());
        }
        return reads_[h] = std::move(out);
    }

    std::set<int> block_reads(int node) {
        std::set<int> out;
        for_each_expr(t_.cls(node).block->input, [&](const ir::Expr& e) {
            if (e.op != ir::Op::PortCall) return;
            const CallTarget& ct = t_.bindings[node][e.index][e.member];
            const auto& r = handler_reads({ct.instance, ct.trigger});
            out.insert(r.begin(), r.end());
        });
        // A block's own previous output is its state, not a dataflow input.
        out.erase(node);
        return out;
    }

    // Tarjan SCC over the block graph; edges source -> reader.
    static std::vector<int> components(const std::vector<int>& blocks, const std::map<int, std::set<int>>& edges) {
        std::map<int, int> index, low, comp;
        std::vector<int> stack;
        std::set<int> on_stack;
        int counter = 0, ncomp = 0;
        std::function<void(int)> strong = [&](int v) {
            index[v] = low[v] = counter++;
            stack.push_back(v);
            on_stack.insert(v);
            if (auto it = edges.find(v); it != edges.end()) {
                for (int w : it->second) {
                    if (!index.count(w)) {
                        strong(w);
                        low[v] = std::min(low[v], low[w]);
                    } else if (on_stack.count(w)) {
                        low[v] = std::min(low[v], index[w]);
                    }
                }
            }
            if (low[v] == index[v]) {
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack.erase(w);
                    comp[w] = ncomp;
                } while (w != v);
                ++ncomp;
            }
        };
        for (int b : blocks) {
            if (!index.count(b)) strong(b);
        }
        std::vector<int> out;
        for (int b : blocks) out.push_back(comp[b]);
        return out;
    }

    void order_blocks() {
        t_.delayed_inputs.assign(t_.nodes.size(), {});
        std::vector<int> blocks;
        for (std::size_t n = 0; n < t_.nodes.size(); ++n) {
            if (t_.cls(static_cast<int>(n)).block) blocks.push_back(static_cast<int>(n));
        }
        std::map<int, std::set<int>> readers_of;  // source -> readers
        std::map<int, std::set<int>> sources_of;
        for (int b : blocks) {
            for (int src : block_reads(b)) {
                readers_of[src].insert(b);
                sources_of[b].insert(src);
            }
        }

        const auto comp = components(blocks, readers_of);
        std::map<int, int> comp_of;
        for (std::size_t i = 0; i < blocks.size(); ++i) comp_of[blocks[i]] = comp[i];

        // Inside a cycle, a state-bearing reader takes last tick's values.
        std::map<int, std::set<int>> live;  // remaining source -> readers
        for (int b : blocks) {
            for (int src : sources_of[b]) {
                if (comp_of[src] == comp_of[b] && t_.cls(b).block->stateful()) {
                    t_.delayed_inputs[b].push_back(src);
                } else {
                    live[src].insert(b);
                }
            }
        }

        const auto comp2 = components(blocks, live);
        std::map<int, std::vector<int>> members;
        for (std::size_t i = 0; i < blocks.size(); ++i) members[comp2[i]].push_back(blocks[i]);
        for (const auto& [id, group] : members) {
            if (group.size() < 2) continue;
            std::string names;
            for (int b : group) names += (names.empty() ? "" : ", ") + t_.nodes[b].path;
            report(out_, code::algebraic_loop, t_.cls(group.front()).block->span,
                   "continuous loop without a state-bearing block: " + names);
        }
        if (has_errors(out_)) return;

        std::map<int, int> indegree;
        for (int b : blocks) indegree[b] = 0;
        for (const auto& [src, rs] : live) {
            for (int r : rs) ++indegree[r];
        }
        std::priority_queue<int, std::vector<int>, std::greater<>> ready;
        for (int b : blocks) {
            if (indegree[b] == 0) ready.push(b);
        }
        while (!ready.empty()) {
            const int b = ready.top();
            ready.pop();
            t_.block_order.push_back(b);
            for (int r : live[b]) {
                if (--indegree[r] == 0) ready.push(r);
            }
        }
    }

    InstanceTree t_;
    std::vector<Diagnostic>& out_;
    std::map<Handler, std::set<int>> reads_;
};

}  // namespace

std::optional<InstanceTree> build_tree(std::shared_ptr<const ir::Program> program, std::vector<Diagnostic>& out) {
    return TreeBuilder(std::move(program), out).run();
}

}  // namespace detail

InstanceTree instantiate(const ModelUnit& model) {
    std::vector<Diagnostic> diags;
    detail::check_names(model, diags);
    detail::check_inheritance(model, diags);
    std::optional<InstanceTree> tree;
    if (!detail::has_errors(diags)) {
        ModelUnit flat = detail::flatten(model, diags);
        if (!detail::has_errors(diags)) {
            auto program = detail::lower_program(flat, diags);
            if (!detail::has_errors(diags)) tree = detail::build_tree(program, diags);
        }
    }
    if (!tree || detail::has_errors(diags)) {
        sort_diagnostics(diags);
        throw DiagnosticError(std::move(diags));
    }
    return std::move(*tree);
}

}  // namespace broom
