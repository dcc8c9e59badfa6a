#include <charconv>
#include <cmath>
#include <sstream>

#include "broom/dsl.hpp"

namespace broom::dsl {
namespace {

int precedence(const Expr& e) {
    switch (e.kind) {
        case ExprKind::Literal:
        case ExprKind::Path:
        case ExprKind::Call:
        case ExprKind::Out: return 8;
        case ExprKind::Unary: return e.unary == UnaryOp::Neg ? 7 : 3;
        case ExprKind::Binary:
            switch (e.binary) {
                case BinaryOp::Mul:
                case BinaryOp::Div: return 6;
                case BinaryOp::Add:
                case BinaryOp::Sub: return 5;
                case BinaryOp::And: return 2;
                case BinaryOp::Or: return 1;
                default: return 4;
            }
    }
    return 0;
}

const char* op_text(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return "+";
        case BinaryOp::Sub: return "-";
        case BinaryOp::Mul: return "*";
        case BinaryOp::Div: return "/";
        case BinaryOp::Lt: return "<";
        case BinaryOp::Le: return "<=";
        case BinaryOp::Gt: return ">";
        case BinaryOp::Ge: return ">=";
        case BinaryOp::Eq: return "==";
        case BinaryOp::Ne: return "!=";
        case BinaryOp::And: return "and";
        case BinaryOp::Or: return "or";
    }
    return "?";
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// In a transition guard a bare '/' would start the action list, so divisions
// outside parentheses are wrapped (bare_div = false).
void write_expr(std::ostream& os, const Expr& e, bool bare_div = true) {
    if (!bare_div && e.kind == ExprKind::Binary && e.binary == BinaryOp::Div) {
        os << '(';
        write_expr(os, e, true);
        os << ')';
        return;
    }
    auto sub = [&](const Expr& child, bool parens) {
        if (parens) os << '(';
        write_expr(os, child, parens || bare_div);
        if (parens) os << ')';
    };
    switch (e.kind) {
        case ExprKind::Literal:
            if (const auto* b = std::get_if<bool>(&e.literal)) os << (*b ? "true" : "false");
            else if (const auto* i = std::get_if<std::int64_t>(&e.literal)) os << *i;
            else os << format_real_literal(std::get<double>(e.literal));
            break;
        case ExprKind::Path: os << join(e.path, "."); break;
        case ExprKind::Out: os << "out"; break;
        case ExprKind::Call:
            os << join(e.path, ".") << '(';
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                if (i) os << ", ";
                write_expr(os, e.args[i]);
            }
            os << ')';
            break;
        case ExprKind::Unary:
            os << (e.unary == UnaryOp::Neg ? "-" : "not ");
            sub(e.args[0], precedence(e.args[0]) <= precedence(e));
            break;
        case ExprKind::Binary:
            sub(e.args[0], precedence(e.args[0]) < precedence(e));
            os << ' ' << op_text(e.binary) << ' ';
            sub(e.args[1], precedence(e.args[1]) <= precedence(e));
            break;
    }
}

std::string type_text(const TypeRef& t) {
    switch (t.kind) {
        case PrimKind::Bool: return "bool";
        case PrimKind::Int: return "int";
        case PrimKind::Real: return "real";
        case PrimKind::Named: return t.name;
    }
    return "?";
}

std::string params_text(const std::vector<Param>& ps) {
    std::string out = "(";
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (i) out += ", ";
        out += ps[i].name + " : " + type_text(ps[i].type);
    }
    return out + ")";
}

std::string stmt_text(const Stmt& s) {
    std::ostringstream os;
    switch (s.kind) {
        case StmtKind::Assign:
            os << join(s.target, ".") << " = ";
            write_expr(os, s.value);
            break;
        case StmtKind::Eval: write_expr(os, s.value); break;
        case StmtKind::Send:
            os << "send " << join(s.target, ".") << '(';
            for (std::size_t i = 0; i < s.args.size(); ++i) {
                if (i) os << ", ";
                write_expr(os, s.args[i]);
            }
            os << ')';
            break;
        case StmtKind::SetTimer:
            os << "set " << s.target.at(0) << '(';
            write_expr(os, s.value);
            os << ')';
            break;
        case StmtKind::CancelTimer: os << "cancel " << s.target.at(0); break;
        case StmtKind::Return:
            os << "return ";
            write_expr(os, s.value);
            break;
    }
    return os.str();
}

std::string number_text(double v) {
    // Block parameters may be negative; the parser accepts a leading '-'.
    return format_real_literal(v);
}

void write_attribute(std::ostream& os, const Attribute& a, const char* ind) {
    os << ind << (a.tunable ? "tunable var " : "var ") << a.name << " : " << type_text(a.type);
    if (a.init) os << " = " << render_expr(*a.init);
    os << ";\n";
}

void write_method(std::ostream& os, const Method& m, const char* ind) {
    os << ind << "method " << m.name << params_text(m.params);
    if (m.ret) os << " : " << type_text(*m.ret);
    os << " {\n";
    for (const auto& s : m.body) os << ind << "  " << stmt_text(s) << ";\n";
    os << ind << "}\n";
}

void write_actor(std::ostream& os, const ActorClass& a) {
    os << "  actor " << a.name;
    if (!a.superclasses.empty()) {
        os << " : ";
        for (std::size_t i = 0; i < a.superclasses.size(); ++i) {
            if (i) os << ", ";
            os << a.superclasses[i].name;
        }
    }
    os << " {\n";
    for (const auto& p : a.ports) {
        os << "    " << (p.direction == PortDirection::Provided ? "provides " : "requires ") << p.name << " : "
           << p.protocol << ";\n";
    }
    for (const auto& at : a.attributes) write_attribute(os, at, "    ");
    for (const auto& t : a.timers) os << "    timer " << t.name << ";\n";
    for (const auto& m : a.methods) write_method(os, m, "    ");
    for (const auto& p : a.parts) os << "    part " << p.name << " : " << p.class_name << ";\n";
    for (const auto& c : a.channels) {
        os << "    connect " << c.a.part << '.' << c.a.port << " -- " << c.b.part << '.' << c.b.port << ";\n";
    }
    if (a.machine) {
        const auto& sm = *a.machine;
        os << "    machine {\n";
        os << "      initial " << sm.initial << ";\n";
        if (!sm.states.empty()) os << "      states " << join(sm.states, ", ") << ";\n";
        for (const auto& t : sm.transitions) {
            os << "      " << t.from << " -> " << t.to << " on " << t.trigger;
            if (t.guard) {
                os << " if ";
                write_expr(os, *t.guard, false);
            }
            if (!t.actions.empty()) {
                os << " / ";
                for (std::size_t i = 0; i < t.actions.size(); ++i) {
                    if (i) os << ", ";
                    os << stmt_text(t.actions[i]);
                }
            }
            os << ";\n";
        }
        os << "    }\n";
    }
    if (a.block) {
        const auto& b = *a.block;
        const char* kind = b.kind == BlockKind::Pt1 ? "pt1" : b.kind == BlockKind::Pi ? "pi" : "limiter";
        os << "    block " << kind << '(';
        for (std::size_t i = 0; i < b.params.size(); ++i) {
            if (i) os << ", ";
            os << number_text(b.params[i]);
        }
        os << ") input " << render_expr(b.input) << ";\n";
    }
    if (a.deadline_ticks) os << "    deadline " << *a.deadline_ticks << ";\n";
    os << "  }\n";
}

void write_signature(std::ostream& os, const Signature& s, const char* kw) {
    os << "    " << kw << ' ' << s.name << params_text(s.params);
    if (s.ret) os << " : " << type_text(*s.ret);
    os << ";\n";
}

}  // namespace

std::string format_real_literal(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string render_expr(const Expr& e) {
    std::ostringstream os;
    write_expr(os, e);
    return os.str();
}

std::string render(const ModelUnit& m) {
    std::ostringstream os;
    os << "model " << m.name << " {\n";
    for (const auto& e : m.enums) os << "  enum " << e.name << " { " << join(e.members, ", ") << " }\n";
    for (const auto& p : m.protocols) {
        os << "  protocol " << p.name << " {\n";
        for (const auto& s : p.methods) write_signature(os, s, "method");
        for (const auto& s : p.messages) write_signature(os, s, "message");
        os << "  }\n";
    }
    for (const auto& d : m.data_classes) {
        os << "  data " << d.name << " {\n";
        for (const auto& f : d.fields) write_attribute(os, f, "    ");
        for (const auto& a : d.accessors) write_method(os, a, "    ");
        os << "  }\n";
    }
    for (const auto& a : m.actor_classes) write_actor(os, a);
    os << "  root " << m.root << "\n}\n";
    return os.str();
}

}  // namespace broom::dsl
