#include "broom/codegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace broom::codegen {

namespace {

using ir::Type;
using ir::TypeKind;

constexpr std::int64_t kMaxQueue = 1000000;

std::string c_real(double v) {
    if (std::isnan(v)) return "(HUGE_VAL - HUGE_VAL)";
    if (std::isinf(v)) return v > 0 ? "HUGE_VAL" : "(-HUGE_VAL)";
    const std::string s = format_double(v);
    return s[0] == '-' ? "(" + s + ")" : s;
}

std::string c_int(std::int64_t v) {
    if (v == std::numeric_limits<std::int64_t>::min()) return "(-9223372036854775807LL - 1LL)";
    if (v < 0) return "(" + std::to_string(v) + "LL)";
    return std::to_string(v) + "LL";
}

std::string c_string(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string c_value(const ir::Value& v, const Type& t) {
    switch (t.kind) {
        case TypeKind::Bool: return std::get<bool>(v) ? "1" : "0";
        case TypeKind::Int:
        case TypeKind::Enum: return c_int(std::get<std::int64_t>(v));
        case TypeKind::Real: return c_real(std::get<double>(v));
        default: throw Error(code::unsupported, "constant of non-primitive type");
    }
}

// Union member holding a value of type t.
std::string arg_field(const Type& t) { return t.kind == TypeKind::Real ? "r" : "i"; }

std::string unpack(const std::string& a, const Type& t) {
    if (t.kind == TypeKind::Bool) return "(int)" + a + ".i";
    return a + "." + arg_field(t);
}

// A function body under construction: temporaries first (C89), then code.
struct Fn {
    std::vector<std::string> temps;
    std::vector<std::string> lines;
    int depth = 1;
    int next = 0;
    int labels = 0;

    std::string temp(const std::string& ctype) {
        std::string name = "t" + std::to_string(next++);
        temps.push_back(ctype + " " + name + ";");
        return name;
    }
    void line(const std::string& s) { lines.push_back(std::string(static_cast<std::size_t>(depth) * 4, ' ') + s); }
    void open(const std::string& s) {
        line(s);
        ++depth;
    }
    void close(const std::string& s = "}") {
        --depth;
        line(s);
    }
    std::string text(const std::string& signature) const {
        std::string out = signature + "\n{\n";
        for (const auto& t : temps) out += "    " + t + "\n";
        for (const auto& l : lines) out += l + "\n";
        return out + "}\n\n";
    }
};

class Emitter {
public:
    Emitter(const FlatProgram& fp, const CodegenConfig& cfg) : fp_(fp), tree_(fp.tree), prog_(*fp.tree.program), cfg_(cfg) {
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            used_classes_.insert(tree_.nodes[n].cls);
            max_path_ = std::max(max_path_, tree_.nodes[n].path.size());
        }
        for (const auto& p : prog_.protocols) {
            for (const auto& s : p.sigs) max_args_ = std::max(max_args_, s.params.size());
        }
        for (int c : used_classes_) {
            for (const auto& t : prog_.actors[c].triggers) max_args_ = std::max(max_args_, t.params.size());
        }
    }

    std::map<std::string, std::string> files() {
        std::map<std::string, std::string> out;
        out["model.h"] = header();
        out["model.c"] = source();
        out["SCHEDULE.txt"] = fp_.listing();
        if (cfg_.emit_trace) out["trace_shim.c"] = shim();
        return out;
    }

    std::string driver(const std::vector<Stimulus>& stimuli) {
        std::vector<Stimulus> script = stimuli;
        std::stable_sort(script.begin(), script.end(), [](const Stimulus& a, const Stimulus& b) { return a.at_tick < b.at_tick; });
        std::string o = "#include <stdio.h>\n\n#include \"model.h\"\n\nint main(void)\n{\n    model_int tick;\n";
        o += "    static char buf[1 << 16];\n    setvbuf(stdout, buf, _IOFBF, sizeof buf);\n";
        o += "    model_init();\n";
        if (cfg_.emit_trace) o += "    model_trace_header();\n";
        o += "    for (tick = 0; tick < MODEL_TICKS && !model_halted(); ++tick) {\n";
        std::size_t i = 0;
        while (i < script.size()) {
            const std::int64_t at = script[i].at_tick;
            o += "        if (tick == " + c_int(at) + ") {\n";
            for (; i < script.size() && script[i].at_tick == at; ++i) {
                const auto& s = script[i];
                const ResolvedStimulus r = resolve_stimulus(tree_, s);
                const auto& t = tree_.cls(r.node).triggers[r.trigger];
                std::string call = inject_name(s.target, s.port, s.name) + "(";
                for (std::size_t k = 0; k < r.args.size(); ++k) {
                    if (k) call += ", ";
                    call += c_value(r.args[k], t.params[k]);
                }
                o += "            " + call + ");\n";
            }
            o += "        }\n";
        }
        o += "        model_tick();\n    }\n    fflush(stdout);\n    return model_halted() ? 3 : 0;\n}\n";
        return o;
    }

private:
    const FlatProgram& fp_;
    const InstanceTree& tree_;
    const ir::Program& prog_;
    CodegenConfig cfg_;
    std::set<int> used_classes_;
    std::size_t max_path_ = 4;
    std::size_t max_args_ = 0;

    // ------------------------------------------------------------ names
    std::string cls_name(int c) const { return mangle(prog_.actors[c].name); }
    std::string inst(int n) const { return mangle(tree_.nodes[n].path); }
    std::string inject_name(const std::string& path, const std::string& port, const std::string& sig) const {
        return "model_inject_" + mangle(path + "." + port + "." + sig);
    }
    std::string maxa() const { return std::to_string(std::max<std::size_t>(max_args_, 1)); }

    std::string ctype(const Type& t) const {
        switch (t.kind) {
            case TypeKind::Void: return "void";
            case TypeKind::Bool: return "int";
            case TypeKind::Int:
            case TypeKind::Enum: return "model_int";
            case TypeKind::Real: return "double";
            case TypeKind::Data: return "struct dat_" + mangle(prog_.data[t.index].name);
        }
        return "void";
    }

    bool has_queue(int n) const {
        const auto& c = tree_.cls(n);
        return std::any_of(c.triggers.begin(), c.triggers.end(),
                           [](const ir::Trigger& t) { return t.kind != ir::TriggerKind::Method; });
    }

    std::vector<int> instances_of(int c) const {
        std::vector<int> out;
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            if (tree_.nodes[n].cls == c) out.push_back(static_cast<int>(n));
        }
        return out;
    }

    // ----------------------------------------------------------- tracing
    void payload(Fn& f, const std::string& v, const Type& t) const {
        switch (t.kind) {
            case TypeKind::Real: f.line("model_trace_real(" + v + ");"); break;
            case TypeKind::Int: f.line("model_trace_int(" + v + ");"); break;
            case TypeKind::Bool: f.line("model_trace_bool(" + v + ");"); break;
            case TypeKind::Enum: f.line("model_trace_str(en_" + mangle(prog_.enums[t.index].name) + "[" + v + "]);"); break;
            default: break;
        }
    }

    void event(Fn& f, const std::string& kind, const std::string& src, const std::string& dst, const std::string& name,
               const std::vector<std::pair<std::string, Type>>& args) const {
        if (!cfg_.emit_trace) return;
        f.line("ev_begin(\"" + kind + "\", " + src + ", " + dst + ", " + name + ");");
        for (const auto& [v, t] : args) payload(f, v, t);
        f.line("model_trace_end();");
    }

    // ------------------------------------------------------- expressions
    struct Scope {
        bool data = false;  // self is a data struct
        int cls = -1;       // actor class or data class
    };

    std::string access(const std::vector<std::string>& path, const Scope& sc) const {
        std::string out = "self->";
        for (std::size_t i = 0; i < path.size(); ++i) {
            if (i) out += '.';
            out += (i == 0 && !sc.data ? "a_" : "f_") + mangle(path[i]);
        }
        return out;
    }

    std::vector<std::string> args(Fn& f, const std::vector<ir::Expr>& xs, const Scope& sc) const {
        std::vector<std::string> out;
        for (const auto& x : xs) out.push_back(expr(f, x, sc));
        return out;
    }

    static std::string join(const std::vector<std::string>& xs) {
        std::string out;
        for (const auto& x : xs) out += ", " + x;
        return out;
    }

    std::string expr(Fn& f, const ir::Expr& e, const Scope& sc) const {
        switch (e.op) {
            case ir::Op::Const: return c_value(e.constant, e.type);
            case ir::Op::Slot: {
                const auto t = f.temp(ctype(e.type));
                f.line(t + " = " + access(e.access, sc) + ";");
                return t;
            }
            case ir::Op::Param: return "p" + std::to_string(e.index);
            case ir::Op::BlockOut: {
                if (sc.data) throw Error(code::unsupported, "'out' inside a data method");
                const auto t = f.temp("double");
                f.line(t + " = model_delayed(reader, id) ? self->prev : self->out;");
                return t;
            }
            case ir::Op::PortCall: {
                if (sc.data) throw Error(code::unsupported, "port call inside a data method");
                const auto a = args(f, e.args, sc);
                const auto& c = prog_.actors[sc.cls];
                const auto& port = c.ports[e.index];
                const auto& sig = prog_.protocols[port.protocol].sigs[e.member];
                const std::string call =
                    "call_" + cls_name(sc.cls) + "_" + mangle(port.name) + "_" + mangle(sig.name) + "(id, reader" + join(a) + ")";
                if (sig.ret.kind == TypeKind::Void) {
                    f.line(call + ";");
                    return "0";
                }
                const auto t = f.temp(ctype(sig.ret));
                f.line(t + " = " + call + ";");
                return t;
            }
            case ir::Op::DataCall: {
                const auto a = args(f, e.args, sc);
                const auto& d = prog_.data[e.index];
                const auto& m = d.methods[e.member];
                const std::string call = "dm_" + mangle(d.name) + "_" + mangle(m.name) + "(&" + access(e.access, sc) + ", id" + join(a) + ")";
                if (m.ret.kind == TypeKind::Void) {
                    f.line(call + ";");
                    return "0";
                }
                const auto t = f.temp(ctype(m.ret));
                f.line(t + " = " + call + ";");
                return t;
            }
            case ir::Op::Neg: {
                const auto a = expr(f, e.args[0], sc);
                const auto t = f.temp(ctype(e.type));
                f.line(t + " = " + (e.type.kind == TypeKind::Real ? "-" + a : "m_neg(" + a + ")") + ";");
                return t;
            }
            case ir::Op::Not: {
                const auto a = expr(f, e.args[0], sc);
                const auto t = f.temp("int");
                f.line(t + " = !" + a + ";");
                return t;
            }
            case ir::Op::ToReal: {
                const auto a = expr(f, e.args[0], sc);
                const auto t = f.temp("double");
                f.line(t + " = (double)" + a + ";");
                return t;
            }
            case ir::Op::Binary: {
                const auto a = expr(f, e.args[0], sc);
                const auto b = expr(f, e.args[1], sc);
                const auto t = f.temp(ctype(e.type));
                f.line(t + " = " + binary(e.bop, e.args[0].type, a, b) + ";");
                return t;
            }
        }
        throw Error(code::unsupported, "unknown expression");
    }

    static std::string binary(BinaryOp op, const Type& operand, const std::string& a, const std::string& b) {
        const bool real = operand.kind == TypeKind::Real;
        auto infix = [&](const char* o) { return "(" + a + " " + o + " " + b + ")"; };
        switch (op) {
            case BinaryOp::Add: return real ? infix("+") : "m_add(" + a + ", " + b + ")";
            case BinaryOp::Sub: return real ? infix("-") : "m_sub(" + a + ", " + b + ")";
            case BinaryOp::Mul: return real ? infix("*") : "m_mul(" + a + ", " + b + ")";
            case BinaryOp::Div: return (real ? "r_div(id, " : "m_div(id, ") + a + ", " + b + ")";
            case BinaryOp::Lt: return infix("<");
            case BinaryOp::Le: return infix("<=");
            case BinaryOp::Gt: return infix(">");
            case BinaryOp::Ge: return infix(">=");
            case BinaryOp::Eq: return infix("==");
            case BinaryOp::Ne: return infix("!=");
            case BinaryOp::And: return infix("&&");
            case BinaryOp::Or: return infix("||");
        }
        return "0";
    }

    void stmt(Fn& f, const ir::Stmt& s, const Scope& sc) const {
        switch (s.op) {
            case ir::StmtOp::Assign: {
                const auto v = expr(f, s.value, sc);
                f.line(access(s.access, sc) + " = " + v + ";");
                break;
            }
            case ir::StmtOp::Eval: expr(f, s.value, sc); break;
            case ir::StmtOp::Send: {
                const auto a = args(f, s.args, sc);
                const auto& c = prog_.actors[sc.cls];
                const auto& port = c.ports[s.port];
                const auto& sig = prog_.protocols[port.protocol].sigs[s.member];
                f.line("send_" + cls_name(sc.cls) + "_" + mangle(port.name) + "_" + mangle(sig.name) + "(id" + join(a) + ");");
                break;
            }
            case ir::StmtOp::SetTimer: {
                const auto v = expr(f, s.value, sc);
                const auto& name = prog_.actors[sc.cls].timers[s.timer];
                f.line("if (" + v + " < 1) fault_timer(id, " + c_string(name) + ", " + v + ");");
                f.line("self->t_" + mangle(name) + " = model_now + " + v + ";");
                break;
            }
            case ir::StmtOp::CancelTimer:
                f.line("self->t_" + mangle(prog_.actors[sc.cls].timers[s.timer]) + " = -1;");
                break;
        }
    }

    // ------------------------------------------------------------ layout
    std::string data_structs() const {
        std::string out;
        std::vector<bool> done(prog_.data.size(), false);
        std::function<void(int)> visit = [&](int d) {
            if (done[d]) return;
            done[d] = true;
            for (const auto& f : prog_.data[d].fields) {
                if (f.type.kind == TypeKind::Data) visit(f.type.index);
            }
            out += "struct dat_" + mangle(prog_.data[d].name) + " {\n";
            for (const auto& f : prog_.data[d].fields) out += "    " + ctype(f.type) + " f_" + mangle(f.name) + ";\n";
            if (prog_.data[d].fields.empty()) out += "    int unused_;\n";
            out += "};\n\n";
        };
        for (std::size_t d = 0; d < prog_.data.size(); ++d) visit(static_cast<int>(d));
        return out;
    }

    std::string class_struct(int ci) const {
        const auto& c = prog_.actors[ci];
        std::string out = "struct cls_" + cls_name(ci) + " {\n";
        for (const auto& a : c.attrs) out += "    " + ctype(a.type) + " a_" + mangle(a.name) + ";\n";
        if (c.has_machine()) out += "    int fsm;\n    int sampled;\n";
        if (c.block) {
            if (c.block->kind == BlockKind::Pt1) out += "    double y;\n";
            if (c.block->kind == BlockKind::Pi) out += "    double i;\n";
            out += "    double out;\n    double prev;\n";
        }
        for (const auto& t : c.timers) out += "    model_int t_" + mangle(t) + ";\n";
        if (c.attrs.empty() && !c.has_machine() && !c.block && c.timers.empty()) out += "    int unused_;\n";
        return out + "};\n\n";
    }

    // Initial values of every primitive slot, addressed by field path.
    void init_attrs(std::string& out, const std::string& base, const std::vector<ir::AttrInfo>& fields, int slot0,
                    const std::vector<ir::Value>& initial, const std::vector<Type>& slot_types, bool top) const {
        for (const auto& a : fields) {
            const std::string here = base + "." + (top ? "a_" : "f_") + mangle(a.name);
            if (a.type.kind == TypeKind::Data) {
                init_attrs(out, here, prog_.data[a.type.index].fields, slot0 + a.slot, initial, slot_types, false);
            } else {
                const int s = slot0 + a.slot;
                out += "    " + here + " = " + c_value(initial[s], slot_types[s]) + ";\n";
            }
        }
    }

    // ---------------------------------------------------------- sections
    std::string header() const {
        std::string h = "#ifndef MODEL_H\n#define MODEL_H\n\n";
        h += "/* Generated from model " + prog_.model_name + ". */\n\n";
        h += "typedef long long model_int;\n\n";
        h += "#define MODEL_NAME " + c_string(prog_.model_name) + "\n";
        h += "#define MODEL_VERSION " + c_string(BROOM_VERSION) + "\n";
        h += "#define MODEL_DT " + c_real(fp_.config.dt) + "\n";
        h += "#define MODEL_DURATION " + c_real(fp_.config.duration) + "\n";
        h += "#define MODEL_TICKS " + c_int(fp_.config.ticks()) + "\n\n";
        h += "void model_init(void);\nvoid model_tick(void);\nint model_halted(void);\nmodel_int model_tick_count(void);\n\n";
        h += "/* Stimuli, delivered at the start of the next tick; 0 on success, -1 when the buffer is full. */\n";
        for (const auto& sig : inject_signatures()) h += sig + ";\n";
        if (cfg_.emit_trace) {
            h += "\n/* Trace sink, see trace_shim.c. */\n";
            h += "void model_trace_header(void);\n";
            h += "void model_trace_begin(model_int tick, const char *kind, const char *src, const char *dst, const char *name);\n";
            h += "void model_trace_real(double v);\nvoid model_trace_int(model_int v);\nvoid model_trace_bool(int v);\n";
            h += "void model_trace_str(const char *s);\nvoid model_trace_end(void);\n";
        }
        return h + "\n#endif\n";
    }

    struct Inject {
        std::string name;
        std::string params;
        int kind;
        int node;
        int trigger;
        std::vector<Type> types;
    };

    std::vector<Inject> injects() const {
        std::vector<Inject> out;
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            const auto& c = tree_.cls(static_cast<int>(n));
            for (std::size_t p = 0; p < c.ports.size(); ++p) {
                if (c.ports[p].direction != PortDirection::Provided) continue;
                const auto target = tree_.resolve_provided(static_cast<int>(n), static_cast<int>(p));
                if (!target) continue;
                for (const auto& sig : prog_.protocols[c.ports[p].protocol].sigs) {
                    const int trig = tree_.cls(target->instance).find_trigger(sig.name);
                    if (trig < 0) continue;
                    Inject in;
                    in.name = inject_name(tree_.nodes[n].path, c.ports[p].name, sig.name);
                    for (std::size_t k = 0; k < sig.params.size(); ++k) {
                        if (k) in.params += ", ";
                        in.params += ctype(sig.params[k]) + " p" + std::to_string(k);
                    }
                    if (in.params.empty()) in.params = "void";
                    in.kind = sig.message ? 0 : 1;
                    in.node = target->instance;
                    in.trigger = trig;
                    in.types = sig.params;
                    out.push_back(std::move(in));
                }
            }
        }
        return out;
    }

    std::vector<std::string> inject_signatures() const {
        std::vector<std::string> out;
        for (const auto& in : injects()) out.push_back("int " + in.name + "(" + in.params + ")");
        return out;
    }

    std::string source() const {
        const auto& cfg = fp_.config;
        if (cfg.drain_cap > kMaxQueue) {
            throw Error(code::unsupported, "drain_cap " + std::to_string(cfg.drain_cap) + " exceeds the generated queue limit");
        }
        std::string o;
        o += "/* Generated from model " + prog_.model_name + "; see SCHEDULE.txt for the per-tick order. */\n\n";
        o += "#include <math.h>\n#include <setjmp.h>\n#include <stdio.h>\n\n#include \"model.h\"\n\n";
        o += "#define MODEL_NINST " + std::to_string(tree_.nodes.size()) + "\n";
        o += "#define MODEL_MAXA " + maxa() + "\n";
        o += "#define MODEL_CAP " + std::to_string(cfg.drain_cap) + "\n";
        o += "#define MODEL_SNAP " + c_int(cfg.snapshot_every) + "\n";
        o += "#define MODEL_MAX_PENDING 256\n\n";
        o += "union model_arg {\n    double r;\n    model_int i;\n};\n\n";
        o += "struct model_msg {\n    int trig;\n    int sender;\n    int timer;\n    union model_arg a[MODEL_MAXA];\n};\n\n";
        o += "struct model_queue {\n    long head;\n    long count;\n    struct model_msg m[MODEL_CAP];\n};\n\n";
        o += "struct model_pending {\n    int kind;\n    int node;\n    int trig;\n    union model_arg a[MODEL_MAXA];\n};\n\n";
        o += data_structs();
        for (int c : used_classes_) o += class_struct(c);

        o += "/* Instance state. */\n";
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            o += "static struct cls_" + cls_name(tree_.nodes[n].cls) + " " + inst(static_cast<int>(n)) + ";\n";
        }
        o += "\n/* Message queues. */\n";
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            if (has_queue(static_cast<int>(n))) o += "static struct model_queue q_" + inst(static_cast<int>(n)) + ";\n";
        }
        o += "\nstatic const char *const model_paths[MODEL_NINST] = {\n";
        for (const auto& node : tree_.nodes) o += "    " + c_string(node.path) + ",\n";
        o += "};\n\n";
        for (const auto& e : prog_.enums) {
            o += "static const char *const en_" + mangle(e.name) + "[] = {";
            for (std::size_t i = 0; i < e.members.size(); ++i) o += (i ? ", " : "") + c_string(e.name + "." + e.members[i]);
            o += "};\n";
        }
        for (int c : used_classes_) {
            const auto& a = prog_.actors[c];
            if (!a.has_machine()) continue;
            o += "static const char *const st_" + cls_name(c) + "[] = {";
            for (std::size_t i = 0; i < a.states.size(); ++i) o += (i ? ", " : "") + c_string(a.states[i]);
            o += "};\n";
        }
        o += "\nstatic model_int model_now;\nstatic int model_halted_flag;\nstatic jmp_buf model_jb;\n";
        o += "static struct model_pending model_pend[MODEL_MAX_PENDING];\nstatic int model_npend;\n";
        o += "static const union model_arg model_noargs[MODEL_MAXA];\n\n";
        o += runtime_helpers();
        o += prototypes();
        for (int c : used_classes_) o += class_code(c);
        for (std::size_t d = 0; d < prog_.data.size(); ++d) o += data_code(static_cast<int>(d));
        o += dispatchers();
        o += tick_code();
        o += init_code();
        o += inject_code();
        return o;
    }

    std::string runtime_helpers() const {
        std::string o;
        if (cfg_.emit_trace) {
            o += "static void ev_begin(const char *kind, int src, int dst, const char *name)\n{\n";
            o += "    model_trace_begin(model_now, kind, src < 0 ? \"env\" : model_paths[src], dst < 0 ? \"env\" : model_paths[dst], name);\n}\n\n";
        }
        o += "static void fault(int id, const char *code, const char *msg)\n{\n";
        if (cfg_.emit_trace) o += "    ev_begin(\"runtime_error\", id, id, code);\n    model_trace_str(msg);\n    model_trace_end();\n";
        else o += "    (void)id;\n    (void)code;\n    (void)msg;\n";
        o += "    model_halted_flag = 1;\n    longjmp(model_jb, 1);\n}\n\n";
        const std::string buf = std::to_string(max_path_ + 96);
        o += "static void fault_timer(int id, const char *timer, model_int n)\n{\n    char buf[" + buf + "];\n";
        o += "    sprintf(buf, \"timer '%s' set to %lld ticks\", timer, n);\n    fault(id, \"E_RUNTIME\", buf);\n}\n\n";
        o += "static void fault_overflow(int id)\n{\n    char buf[" + buf + "];\n";
        o += "    sprintf(buf, \"message queue of '%s' overflowed\", model_paths[id]);\n    fault(id, \"E_LIVELOCK\", buf);\n}\n\n";
        o += "static void fault_livelock(int id)\n{\n    char buf[96];\n";
        o += "    sprintf(buf, \"more than %lld messages in one tick\", (model_int)MODEL_CAP);\n    fault(id, \"E_LIVELOCK\", buf);\n}\n\n";
        o += "static model_int m_add(model_int a, model_int b) { return (model_int)((unsigned long long)a + (unsigned long long)b); }\n";
        o += "static model_int m_sub(model_int a, model_int b) { return (model_int)((unsigned long long)a - (unsigned long long)b); }\n";
        o += "static model_int m_mul(model_int a, model_int b) { return (model_int)((unsigned long long)a * (unsigned long long)b); }\n";
        o += "static model_int m_neg(model_int a) { return (model_int)(0ULL - (unsigned long long)a); }\n\n";
        o += "static model_int m_div(int id, model_int a, model_int b)\n{\n";
        o += "    if (b == 0) fault(id, \"E_RUNTIME\", \"division by zero\");\n    if (b == -1) return m_neg(a);\n    return a / b;\n}\n\n";
        o += "static double r_div(int id, double a, double b)\n{\n";
        o += "    if (b == 0.0) fault(id, \"E_RUNTIME\", \"division by zero\");\n    return a / b;\n}\n\n";
        o += "static double blk_lim(double u, double lo, double hi)\n{\n    if (u < lo) return lo;\n    if (u > hi) return hi;\n    return u;\n}\n\n";
        o += "static double blk_pt1(double y, double K, double T, double u)\n{\n";
        o += "    double k = MODEL_DT / T;\n    double drive = K * u;\n    double diff = drive - y;\n    double inc = k * diff;\n";
        o += "    return y + inc;\n}\n\n";
        o += "static double blk_pi(double *i, double Kp, double Ki, double lo, double hi, double e)\n{\n";
        o += "    double prop = Kp * e;\n    double integ = Ki * *i;\n    double raw = prop + integ;\n";
        o += "    int windup = (raw > hi && e > 0.0) || (raw < lo && e < 0.0);\n";
        o += "    if (!windup) {\n        double de = e * MODEL_DT;\n        *i = *i + de;\n    }\n";
        o += "    return blk_lim(raw, lo, hi);\n}\n\n";
        o += "static int model_delayed(int reader, int src)\n{\n";
        bool any = false;
        for (std::size_t r = 0; r < tree_.delayed_inputs.size(); ++r) {
            for (int s : tree_.delayed_inputs[r]) {
                o += "    if (reader == " + std::to_string(r) + " && src == " + std::to_string(s) + ") return 1;\n";
                any = true;
            }
        }
        if (!any) o += "    (void)reader;\n    (void)src;\n";
        o += "    return 0;\n}\n\n";
        o += "static struct model_queue *queue_of(int id)\n{\n    switch (id) {\n";
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            if (has_queue(static_cast<int>(n))) o += "    case " + std::to_string(n) + ": return &q_" + inst(static_cast<int>(n)) + ";\n";
        }
        o += "    }\n    return 0;\n}\n\n";
        o += "static void enqueue(int id, int trig, int sender, int timer, const union model_arg *a)\n{\n";
        o += "    struct model_queue *q = queue_of(id);\n    struct model_msg *m;\n    int k;\n";
        o += "    if (q->count >= MODEL_CAP) fault_overflow(id);\n";
        o += "    m = &q->m[(q->head + q->count) % MODEL_CAP];\n";
        o += "    m->trig = trig;\n    m->sender = sender;\n    m->timer = timer;\n";
        o += "    for (k = 0; k < MODEL_MAXA; ++k) m->a[k] = a[k];\n    q->count++;\n}\n\n";
        return o;
    }

    std::string handler_sig(int c, int trig) const {
        const auto& t = prog_.actors[c].triggers[trig];
        std::string s = "static " + ctype(t.ret) + " h_" + cls_name(c) + "_" + mangle(t.name) + "(struct cls_" + cls_name(c) +
                        " *self, int id, int reader";
        for (std::size_t k = 0; k < t.params.size(); ++k) s += ", " + ctype(t.params[k]) + " p" + std::to_string(k);
        return s + ")";
    }

    std::string port_fn_sig(int c, int port, int sig_index) const {
        const auto& cls = prog_.actors[c];
        const auto& p = cls.ports[port];
        const auto& sig = prog_.protocols[p.protocol].sigs[sig_index];
        std::string s = sig.message ? "static void send_" : "static " + ctype(sig.ret) + " call_";
        s += cls_name(c) + "_" + mangle(p.name) + "_" + mangle(sig.name) + (sig.message ? "(int id" : "(int id, int reader");
        for (std::size_t k = 0; k < sig.params.size(); ++k) s += ", " + ctype(sig.params[k]) + " p" + std::to_string(k);
        return s + ")";
    }

    std::string data_sig(int d, int m) const {
        const auto& dc = prog_.data[d];
        const auto& mm = dc.methods[m];
        std::string s = "static " + ctype(mm.ret) + " dm_" + mangle(dc.name) + "_" + mangle(mm.name) + "(struct dat_" +
                        mangle(dc.name) + " *self, int id";
        for (std::size_t k = 0; k < mm.params.size(); ++k) s += ", " + ctype(mm.params[k]) + " p" + std::to_string(k);
        return s + ")";
    }

    std::string prototypes() const {
        std::string o;
        for (int c : used_classes_) {
            const auto& cls = prog_.actors[c];
            for (std::size_t t = 0; t < cls.triggers.size(); ++t) o += handler_sig(c, static_cast<int>(t)) + ";\n";
            for (std::size_t p = 0; p < cls.ports.size(); ++p) {
                if (cls.ports[p].direction != PortDirection::Required) continue;
                for (std::size_t s = 0; s < prog_.protocols[cls.ports[p].protocol].sigs.size(); ++s) {
                    o += port_fn_sig(c, static_cast<int>(p), static_cast<int>(s)) + ";\n";
                }
            }
        }
        for (std::size_t d = 0; d < prog_.data.size(); ++d) {
            for (std::size_t m = 0; m < prog_.data[d].methods.size(); ++m) o += data_sig(static_cast<int>(d), static_cast<int>(m)) + ";\n";
        }
        return o + "\n";
    }

    std::string class_code(int c) const {
        const auto& cls = prog_.actors[c];
        const Scope sc{false, c};
        std::string o;
        for (std::size_t ti = 0; ti < cls.triggers.size(); ++ti) {
            const auto& t = cls.triggers[ti];
            Fn f;
            if (!t.transitions.empty()) {
                for (int tr_index : t.transitions) {
                    const auto& tr = cls.transitions[tr_index];
                    f.open("if (self->fsm == " + std::to_string(tr.from) + ") {");
                    int closes = 0;
                    if (tr.guard) {
                        const auto g = expr(f, *tr.guard, sc);
                        f.open("if (" + g + ") {");
                        ++closes;
                    }
                    f.line("self->fsm = " + std::to_string(tr.to) + ";");
                    event(f, "transition", "id", "id", c_string(cls.states[tr.to]), {});
                    if (cfg_.emit_trace) {
                        // payload [from, trigger] goes between begin and end
                        f.lines.pop_back();
                        f.line("model_trace_str(" + c_string(cls.states[tr.from]) + ");");
                        f.line("model_trace_str(" + c_string(t.name) + ");");
                        f.line("model_trace_end();");
                    }
                    for (const auto& st : tr.actions) stmt(f, st, sc);
                    f.line("goto fired;");
                    for (int k = 0; k < closes; ++k) f.close();
                    f.close();
                }
                f.line("fired:");
            }
            std::string ret;
            if (t.method >= 0) {
                const auto& m = cls.methods[t.method];
                for (const auto& st : m.body) stmt(f, st, sc);
                if (m.result) ret = expr(f, *m.result, sc);
            }
            if (!ret.empty()) {
                f.line("return " + ret + ";");
            } else if (t.ret.kind != TypeKind::Void) {
                f.line("return 0;");
            } else {
                f.line(";");
            }
            o += f.text(handler_sig(c, static_cast<int>(ti)));
        }

        if (cls.block) {
            Fn f;
            const auto v = expr(f, cls.block->input, sc);
            f.line("return " + v + ";");
            o += f.text("static double in_" + cls_name(c) + "(struct cls_" + cls_name(c) + " *self, int id, int reader)");
        }

        const auto insts = instances_of(c);
        for (std::size_t p = 0; p < cls.ports.size(); ++p) {
            if (cls.ports[p].direction != PortDirection::Required) continue;
            const auto& proto = prog_.protocols[cls.ports[p].protocol];
            for (std::size_t s = 0; s < proto.sigs.size(); ++s) {
                const auto& sig = proto.sigs[s];
                Fn f;
                f.temps.push_back("union model_arg a[MODEL_MAXA];");
                if (!sig.message && sig.ret.kind != TypeKind::Void) f.temps.push_back(ctype(sig.ret) + " r;");
                std::vector<std::pair<std::string, Type>> pay;
                for (std::size_t k = 0; k < sig.params.size(); ++k) pay.emplace_back("p" + std::to_string(k), sig.params[k]);
                f.open("switch (id) {");
                for (int n : insts) {
                    const CallTarget& ct = tree_.bindings[n][p][s];
                    if (ct.instance < 0) continue;
                    const std::string tid = std::to_string(ct.instance);
                    f.line("case " + std::to_string(n) + ":");
                    ++f.depth;
                    if (sig.message) {
                        event(f, "msg_send", "id", tid, c_string(sig.name), pay);
                        for (std::size_t k = 0; k < sig.params.size(); ++k) {
                            f.line("a[" + std::to_string(k) + "]." + arg_field(sig.params[k]) + " = p" + std::to_string(k) + ";");
                        }
                        f.line("enqueue(" + tid + ", " + std::to_string(ct.trigger) + ", id, 0, a);");
                        f.line("break;");
                    } else {
                        event(f, "call", "id", tid, c_string(sig.name), pay);
                        std::string call = "h_" + cls_name(tree_.nodes[ct.instance].cls) + "_" +
                                           mangle(tree_.cls(ct.instance).triggers[ct.trigger].name) + "(&" +
                                           inst(ct.instance) + ", " + tid + ", reader";
                        for (std::size_t k = 0; k < sig.params.size(); ++k) call += ", p" + std::to_string(k);
                        call += ")";
                        if (sig.ret.kind == TypeKind::Void) {
                            f.line(call + ";");
                            event(f, "call_return", tid, "id", c_string(sig.name), {});
                            f.line("return;");
                        } else {
                            f.line("r = " + call + ";");
                            event(f, "call_return", tid, "id", c_string(sig.name), {{"r", sig.ret}});
                            f.line("return r;");
                        }
                    }
                    --f.depth;
                }
                f.close();
                f.line("(void)a;");
                if (!sig.message && sig.ret.kind != TypeKind::Void) f.line("return 0;");
                o += f.text(port_fn_sig(c, static_cast<int>(p), static_cast<int>(s)));
            }
        }

        // Per-class dispatch by trigger index.
        {
            Fn f;
            f.open("switch (trig) {");
            for (std::size_t ti = 0; ti < cls.triggers.size(); ++ti) {
                const auto& t = cls.triggers[ti];
                std::string call = "h_" + cls_name(c) + "_" + mangle(t.name) + "(self, id, reader";
                for (std::size_t k = 0; k < t.params.size(); ++k) call += ", " + unpack("a[" + std::to_string(k) + "]", t.params[k]);
                call += ")";
                f.line("case " + std::to_string(ti) + ":");
                ++f.depth;
                if (t.ret.kind == TypeKind::Void) {
                    f.line(call + ";");
                } else {
                    f.line("ret->" + arg_field(t.ret) + " = " + call + ";");
                }
                f.line("break;");
                --f.depth;
            }
            f.close();
            f.line("(void)a;");
            f.line("(void)ret;");
            o += f.text("static void disp_" + cls_name(c) + "(struct cls_" + cls_name(c) +
                        " *self, int id, int trig, const union model_arg *a, int reader, union model_arg *ret)");
        }

        if (cfg_.emit_trace) {
            // Trigger events with typed payloads: arguments, or the return value.
            Fn f;
            f.open("switch (trig) {");
            for (std::size_t ti = 0; ti < cls.triggers.size(); ++ti) {
                const auto& t = cls.triggers[ti];
                f.line("case " + std::to_string(ti) + ":");
                ++f.depth;
                f.line("ev_begin(kind, src, dst, " + c_string(t.name) + ");");
                f.open("if (ret) {");
                if (t.ret.kind != TypeKind::Void) payload(f, unpack("(*a)", t.ret), t.ret);
                f.close("} else {");
                ++f.depth;
                for (std::size_t k = 0; k < t.params.size(); ++k) payload(f, unpack("a[" + std::to_string(k) + "]", t.params[k]), t.params[k]);
                f.close();
                f.line("model_trace_end();");
                f.line("break;");
                --f.depth;
            }
            f.close();
            o += f.text("static void ev_trig_" + cls_name(c) +
                        "(const char *kind, int src, int dst, int trig, const union model_arg *a, int ret)");
        }
        return o;
    }

    std::string data_code(int d) const {
        const auto& dc = prog_.data[d];
        const Scope sc{true, d};
        std::string o;
        for (std::size_t m = 0; m < dc.methods.size(); ++m) {
            const auto& mm = dc.methods[m];
            Fn f;
            for (const auto& st : mm.body) stmt(f, st, sc);
            if (mm.result) {
                f.line("return " + expr(f, *mm.result, sc) + ";");
            } else if (mm.ret.kind != TypeKind::Void) {
                f.line("return 0;");
            }
            f.line("(void)id;");
            // keep `(void)id;` ahead of any return
            if (mm.result || mm.ret.kind != TypeKind::Void) std::rotate(f.lines.end() - 2, f.lines.end() - 1, f.lines.end());
            o += f.text(data_sig(d, static_cast<int>(m)));
        }
        return o;
    }

    std::string dispatchers() const {
        std::string o = "static void dispatch(int id, int trig, const union model_arg *a, int reader, union model_arg *ret)\n{\n    switch (id) {\n";
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            o += "    case " + std::to_string(n) + ": disp_" + cls_name(tree_.nodes[n].cls) + "(&" + inst(static_cast<int>(n)) + ", " +
                 std::to_string(n) + ", trig, a, reader, ret); break;\n";
        }
        o += "    }\n}\n\n";
        if (cfg_.emit_trace) {
            o += "static void ev_trig(const char *kind, int src, int dst, int id, int trig, const union model_arg *a, int ret)\n{\n    switch (id) {\n";
            for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
                o += "    case " + std::to_string(n) + ": ev_trig_" + cls_name(tree_.nodes[n].cls) + "(kind, src, dst, trig, a, ret); break;\n";
            }
            o += "    }\n}\n\n";
        }
        return o;
    }

    std::string tick_code() const {
        Fn f;
        f.temps = {"int k;", "int busy;", "model_int processed;", "double u;", "struct model_msg m;", "union model_arg ret;",
                   "struct model_pending *p;"};
        f.line("/* (1) stimuli */");
        f.open("for (k = 0; k < model_npend; ++k) {");
        f.line("p = &model_pend[k];");
        f.open("if (p->kind == 0) {");
        if (cfg_.emit_trace) f.line("ev_trig(\"msg_send\", -1, p->node, p->node, p->trig, p->a, 0);");
        f.line("enqueue(p->node, p->trig, -1, 0, p->a);");
        f.close("} else {");
        ++f.depth;
        if (cfg_.emit_trace) f.line("ev_trig(\"call\", -1, p->node, p->node, p->trig, p->a, 0);");
        f.line("dispatch(p->node, p->trig, p->a, -1, &ret);");
        if (cfg_.emit_trace) f.line("ev_trig(\"call_return\", p->node, -1, p->node, p->trig, &ret, 1);");
        f.close();
        f.close();
        f.line("model_npend = 0;");

        f.line("/* (2) timers */");
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            const auto& c = tree_.cls(static_cast<int>(n));
            const std::string id = std::to_string(n);
            for (const auto& t : c.timers) {
                const std::string field = inst(static_cast<int>(n)) + ".t_" + mangle(t);
                f.open("if (" + field + " == model_now) {");
                f.line(field + " = -1;");
                event(f, "timer_fire", id, id, c_string(t), {});
                f.line("enqueue(" + id + ", " + std::to_string(c.find_trigger(t)) + ", " + id + ", 1, model_noargs);");
                f.close();
            }
        }

        f.line("/* (3) continuous pass */");
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            if (tree_.cls(static_cast<int>(n)).block) f.line(inst(static_cast<int>(n)) + ".prev = " + inst(static_cast<int>(n)) + ".out;");
        }
        for (int b : tree_.block_order) {
            const auto& blk = *tree_.cls(b).block;
            const std::string x = inst(b);
            const std::string id = std::to_string(b);
            f.line("u = in_" + cls_name(tree_.nodes[b].cls) + "(&" + x + ", " + id + ", " + id + ");");
            const auto& pr = blk.params;
            switch (blk.kind) {
                case BlockKind::Pt1:
                    f.line(x + ".y = blk_pt1(" + x + ".y, " + c_real(pr[0]) + ", " + c_real(pr[1]) + ", u);");
                    f.line(x + ".out = " + x + ".y;");
                    break;
                case BlockKind::Pi:
                    f.line(x + ".out = blk_pi(&" + x + ".i, " + c_real(pr[0]) + ", " + c_real(pr[1]) + ", " + c_real(pr[2]) + ", " +
                           c_real(pr[3]) + ", u);");
                    break;
                case BlockKind::Limiter:
                    f.line(x + ".out = blk_lim(u, " + c_real(pr[0]) + ", " + c_real(pr[1]) + ");");
                    break;
            }
        }

        f.line("/* (4) discrete pass */");
        f.line("processed = 0;");
        f.line("busy = 1;");
        f.open("while (busy) {");
        f.line("busy = 0;");
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            if (!has_queue(static_cast<int>(n))) continue;
            const std::string q = "q_" + inst(static_cast<int>(n));
            const std::string id = std::to_string(n);
            f.open("while (" + q + ".count > 0) {");
            f.line("busy = 1;");
            f.line("if (++processed > MODEL_CAP) fault_livelock(" + id + ");");
            f.line("m = " + q + ".m[" + q + ".head];");
            f.line(q + ".head = (" + q + ".head + 1) % MODEL_CAP;");
            f.line(q + ".count--;");
            if (cfg_.emit_trace) f.line("if (!m.timer) ev_trig(\"msg_recv\", m.sender, " + id + ", " + id + ", m.trig, m.a, 0);");
            f.line("dispatch(" + id + ", m.trig, m.a, -1, &ret);");
            f.close();
        }
        f.close();

        if (cfg_.emit_trace) {
            f.line("/* (5) samples */");
            f.open("if (model_now % MODEL_SNAP == 0) {");
            for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
                const auto& c = tree_.cls(static_cast<int>(n));
                const std::string x = inst(static_cast<int>(n));
                const std::string id = std::to_string(n);
                if (c.block) event(f, "sample", id, id, "\"out\"", {{x + ".out", Type::of(TypeKind::Real)}});
                if (c.has_machine()) {
                    f.open("if (" + x + ".fsm != " + x + ".sampled) {");
                    f.line(x + ".sampled = " + x + ".fsm;");
                    f.line("ev_begin(\"sample\", " + id + ", " + id + ", \"state\");");
                    f.line("model_trace_str(st_" + cls_name(tree_.nodes[n].cls) + "[" + x + ".fsm]);");
                    f.line("model_trace_end();");
                    f.close();
                }
            }
            f.close();
        }
        f.line("(void)u;");
        std::string o = f.text("static void tick_body(void)");
        o += "void model_tick(void)\n{\n    if (model_halted_flag) return;\n";
        o += "    if (setjmp(model_jb) == 0) tick_body();\n    model_now++;\n}\n\n";
        o += "int model_halted(void)\n{\n    return model_halted_flag;\n}\n\n";
        o += "model_int model_tick_count(void)\n{\n    return model_now;\n}\n\n";
        return o;
    }

    std::string init_code() const {
        std::string o = "void model_init(void)\n{\n";
        o += "    model_now = 0;\n    model_halted_flag = 0;\n    model_npend = 0;\n";
        for (std::size_t n = 0; n < tree_.nodes.size(); ++n) {
            const auto& c = tree_.cls(static_cast<int>(n));
            const std::string x = inst(static_cast<int>(n));
            init_attrs(o, x, c.attrs, 0, c.initial, c.slot_types, true);
            if (c.has_machine()) o += "    " + x + ".fsm = " + std::to_string(c.initial_state) + ";\n    " + x + ".sampled = -1;\n";
            if (c.block) {
                if (c.block->kind == BlockKind::Pt1) o += "    " + x + ".y = 0.0;\n";
                if (c.block->kind == BlockKind::Pi) o += "    " + x + ".i = 0.0;\n";
                o += "    " + x + ".out = 0.0;\n    " + x + ".prev = 0.0;\n";
            }
            for (const auto& t : c.timers) o += "    " + x + ".t_" + mangle(t) + " = -1;\n";
            if (has_queue(static_cast<int>(n))) o += "    q_" + x + ".head = 0;\n    q_" + x + ".count = 0;\n";
        }
        return o + "}\n\n";
    }

    std::string inject_code() const {
        std::string o;
        for (const auto& in : injects()) {
            o += "int " + in.name + "(" + in.params + ")\n{\n    struct model_pending *q;\n";
            o += "    if (model_npend >= MODEL_MAX_PENDING) return -1;\n";
            o += "    q = &model_pend[model_npend++];\n";
            o += "    q->kind = " + std::to_string(in.kind) + ";\n    q->node = " + std::to_string(in.node) + ";\n";
            o += "    q->trig = " + std::to_string(in.trigger) + ";\n";
            for (std::size_t k = 0; k < in.types.size(); ++k) {
                o += "    q->a[" + std::to_string(k) + "]." + arg_field(in.types[k]) + " = p" + std::to_string(k) + ";\n";
            }
            o += "    return 0;\n}\n\n";
        }
        return o;
    }

    std::string shim() const {
        std::string o = "/* NDJSON trace sink for the generated model. */\n\n#include <stdio.h>\n#include <string.h>\n\n#include \"model.h\"\n\n";
        o += "static int first;\n\n";
        o += "static void put_double(double v)\n{\n    char buf[40];\n";
        o += "    if (v != v || v - v != 0.0) {\n        fputs(\"null\", stdout);\n        return;\n    }\n";
        o += "    sprintf(buf, \"%.17g\", v);\n    if (!strpbrk(buf, \".en\")) strcat(buf, \".0\");\n    fputs(buf, stdout);\n}\n\n";
        o += "static void put_string(const char *s)\n{\n    putchar('\"');\n    for (; *s; ++s) {\n";
        o += "        unsigned char c = (unsigned char)*s;\n";
        o += "        if (c == '\"') fputs(\"\\\\\\\"\", stdout);\n";
        o += "        else if (c == '\\\\') fputs(\"\\\\\\\\\", stdout);\n";
        o += "        else if (c == '\\n') fputs(\"\\\\n\", stdout);\n";
        o += "        else if (c == '\\t') fputs(\"\\\\t\", stdout);\n";
        o += "        else if (c == '\\r') fputs(\"\\\\r\", stdout);\n";
        o += "        else if (c < 0x20) printf(\"\\\\u%04x\", c);\n";
        o += "        else putchar(c);\n    }\n    putchar('\"');\n}\n\n";
        o += "static void sep(void)\n{\n    if (!first) putchar(',');\n    first = 0;\n}\n\n";
        o += "void model_trace_header(void)\n{\n    fputs(\"{\\\"model\\\":\", stdout);\n    put_string(MODEL_NAME);\n";
        o += "    fputs(\",\\\"dt\\\":\", stdout);\n    put_double(MODEL_DT);\n";
        o += "    fputs(\",\\\"duration\\\":\", stdout);\n    put_double(MODEL_DURATION);\n";
        o += "    printf(\",\\\"ticks\\\":%lld,\\\"version\\\":\", (model_int)MODEL_TICKS);\n    put_string(MODEL_VERSION);\n";
        o += "    fputs(\"}\\n\", stdout);\n}\n\n";
        o += "void model_trace_begin(model_int tick, const char *kind, const char *src, const char *dst, const char *name)\n{\n";
        o += "    printf(\"{\\\"tick\\\":%lld,\\\"time\\\":\", tick);\n    put_double((double)tick * MODEL_DT);\n";
        o += "    fputs(\",\\\"kind\\\":\", stdout);\n    put_string(kind);\n";
        o += "    fputs(\",\\\"src\\\":\", stdout);\n    put_string(src);\n";
        o += "    fputs(\",\\\"dst\\\":\", stdout);\n    put_string(dst);\n";
        o += "    fputs(\",\\\"name\\\":\", stdout);\n    put_string(name);\n";
        o += "    fputs(\",\\\"payload\\\":[\", stdout);\n    first = 1;\n}\n\n";
        o += "void model_trace_real(double v)\n{\n    sep();\n    put_double(v);\n}\n\n";
        o += "void model_trace_int(model_int v)\n{\n    sep();\n    printf(\"%lld\", v);\n}\n\n";
        o += "void model_trace_bool(int v)\n{\n    sep();\n    fputs(v ? \"true\" : \"false\", stdout);\n}\n\n";
        o += "void model_trace_str(const char *s)\n{\n    sep();\n    put_string(s);\n}\n\n";
        o += "void model_trace_end(void)\n{\n    fputs(\"]}\\n\", stdout);\n}\n";
        return o;
    }
};

}  // namespace

std::string mangle(std::string_view dotted) {
    std::string out;
    for (char c : dotted) {
        if (c == '.') {
            out += '_';
        } else if (c == '_') {
            out += "_1";
        } else {
            out += c;
        }
    }
    return out;
}

std::string FlatProgram::listing() const {
    std::ostringstream o;
    o << "model " << tree.program->model_name << "\n";
    o << "dt " << format_double(config.dt) << " s, " << config.ticks() << " ticks, snapshot every " << config.snapshot_every
      << ", drain cap " << config.drain_cap << "\n\n";
    o << "per tick:\n";
    int i = 1;
    for (const auto& s : schedule) o << "  " << i++ << ". " << s.text << "\n";
    o << "\nstate:\n";
    for (const auto& f : state) o << "  " << f.name << " : " << f.c_type << " (" << f.role << ")\n";
    o << "\nqueues:\n";
    for (const auto& q : queues) o << "  " << q << "\n";
    return o.str();
}

FlatProgram flatten(const InstanceTree& tree, const SimConfig& cfg) {
    FlatProgram fp{tree, cfg, {}, {}, {}};
    const auto& prog = *tree.program;
    if (cfg.drain_cap > kMaxQueue) {
        throw Error(code::unsupported, "drain_cap above " + std::to_string(kMaxQueue) + " cannot be compiled to static queues");
    }
    fp.schedule.push_back({StepKind::Stimuli, -1, "stimuli: pending injections in arrival order"});
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        for (const auto& t : tree.cls(static_cast<int>(n)).timers) {
            fp.schedule.push_back({StepKind::Timer, static_cast<int>(n), "timer " + tree.nodes[n].path + "." + t});
        }
    }
    static const char* kinds[] = {"pt1", "pi", "limiter"};
    for (int b : tree.block_order) {
        const auto& blk = *tree.cls(b).block;
        std::string text = "block " + tree.nodes[b].path + " " + kinds[static_cast<int>(blk.kind)] + "(";
        for (std::size_t k = 0; k < blk.params.size(); ++k) text += (k ? ", " : "") + format_double(blk.params[k]);
        text += ")";
        if (!tree.delayed_inputs[b].empty()) {
            text += " reads previous tick of";
            for (int s : tree.delayed_inputs[b]) text += " " + tree.nodes[s].path;
        }
        fp.schedule.push_back({StepKind::Block, b, text});
    }
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        const auto& c = tree.cls(static_cast<int>(n));
        const bool queue = std::any_of(c.triggers.begin(), c.triggers.end(),
                                       [](const ir::Trigger& t) { return t.kind != ir::TriggerKind::Method; });
        if (queue) {
            fp.schedule.push_back({StepKind::Drain, static_cast<int>(n), "drain " + tree.nodes[n].path});
            fp.queues.push_back("q_" + mangle(tree.nodes[n].path) + " capacity " + std::to_string(cfg.drain_cap));
        }
    }
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        const auto& c = tree.cls(static_cast<int>(n));
        if (c.block) fp.schedule.push_back({StepKind::Sample, static_cast<int>(n), "sample " + tree.nodes[n].path + ".out"});
        if (c.has_machine()) fp.schedule.push_back({StepKind::Sample, static_cast<int>(n), "sample " + tree.nodes[n].path + " state"});
    }

    auto ctype = [&](const Type& t) -> std::string {
        if (t.kind == TypeKind::Real) return "double";
        if (t.kind == TypeKind::Bool) return "int";
        return "model_int";
    };
    std::function<void(const std::string&, const std::vector<ir::AttrInfo>&, bool)> attrs =
        [&](const std::string& base, const std::vector<ir::AttrInfo>& fields, bool top) {
            for (const auto& a : fields) {
                const std::string here = base + "." + (top ? "a_" : "f_") + mangle(a.name);
                if (a.type.kind == TypeKind::Data) {
                    attrs(here, prog.data[a.type.index].fields, false);
                } else {
                    fp.state.push_back({here, ctype(a.type), a.tunable ? "tunable attribute" : "attribute"});
                }
            }
        };
    for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
        const auto& c = tree.cls(static_cast<int>(n));
        const std::string x = mangle(tree.nodes[n].path);
        attrs(x, c.attrs, true);
        if (c.has_machine()) fp.state.push_back({x + ".fsm", "int", "state machine"});
        if (c.block) {
            if (c.block->kind == BlockKind::Pt1) fp.state.push_back({x + ".y", "double", "pt1 state"});
            if (c.block->kind == BlockKind::Pi) fp.state.push_back({x + ".i", "double", "pi integral"});
            fp.state.push_back({x + ".out", "double", "block output"});
            fp.state.push_back({x + ".prev", "double", "previous block output"});
        }
        for (const auto& t : c.timers) fp.state.push_back({x + ".t_" + mangle(t), "model_int", "timer due tick"});
    }
    return fp;
}

std::map<std::string, std::string> emit(const FlatProgram& prog, const CodegenConfig& cfg) { return Emitter(prog, cfg).files(); }

std::string emit_driver(const FlatProgram& prog, const std::vector<Stimulus>& stimuli) {
    return Emitter(prog, CodegenConfig{true}).driver(stimuli);
}

void write_sources(const std::string& dir, const std::map<std::string, std::string>& files) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(code::io, "cannot create '" + dir + "': " + ec.message());
    for (const auto& [name, text] : files) write_file((std::filesystem::path(dir) / name).string(), text);
}

}  // namespace broom::codegen
