#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "broom/dsl.hpp"

namespace broom::dsl {
namespace {

constexpr std::array kKeywords = {
    "model",  "root",    "actor",  "data",     "protocol", "enum",   "method", "message",
    "provides", "requires", "var", "tunable",  "part",     "connect", "self",  "machine",
    "initial", "states", "on",     "if",       "block",    "pt1",    "pi",     "limiter",
    "input",  "deadline", "timer", "send",     "set",      "cancel", "return", "true",
    "false",  "and",     "or",     "not",      "out",      "bool",   "int",    "real"};

// Guards the recursive-descent expression parser against stack exhaustion.
constexpr int kMaxDepth = 200;

enum class Tok { Ident, Int, Real, Punct, End, Bad };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    int line = 1;
    int column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {
        if (src_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
    }

    Token next() {
        skip_space();
        Token t;
        t.line = line_;
        t.column = col_;
        if (pos_ >= src_.size()) {
            t.kind = Tok::End;
            return t;
        }
        const char c = src_[pos_];
        if (is_ident_start(c)) {
            const std::size_t start = pos_;
            while (pos_ < src_.size() && is_ident_char(src_[pos_])) advance();
            t.kind = Tok::Ident;
            t.text = std::string(src_.substr(start, pos_ - start));
            return t;
        }
        if (c >= '0' && c <= '9') return number(t);
        static constexpr std::array kTwo = {"->", "--", "<=", ">=", "==", "!="};
        for (const char* two : kTwo) {
            if (src_.substr(pos_, 2) == two) {
                advance();
                advance();
                t.kind = Tok::Punct;
                t.text = two;
                return t;
            }
        }
        if (std::string_view("{}():;,.=+-*/<>").find(c) != std::string_view::npos) {
            advance();
            t.kind = Tok::Punct;
            t.text = std::string(1, c);
            return t;
        }
        advance();
        t.kind = Tok::Bad;
        t.text = printable(c);
        return t;
    }

private:
    static bool is_ident_start(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    }
    static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

    static std::string printable(char c) {
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x20 && u < 0x7f) return std::string(1, c);
        char buf[8];
        std::snprintf(buf, sizeof buf, "\\x%02X", u);
        return buf;
    }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    Token number(Token t) {
        const std::size_t start = pos_;
        bool real = false;
        auto digits = [&] {
            while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') advance();
        };
        digits();
        if (pos_ + 1 < src_.size() && src_[pos_] == '.' && src_[pos_ + 1] >= '0' && src_[pos_ + 1] <= '9') {
            real = true;
            advance();
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t look = pos_ + 1;
            if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
            if (look < src_.size() && src_[look] >= '0' && src_[look] <= '9') {
                real = true;
                while (pos_ < look) advance();
                digits();
            }
        }
        t.kind = real ? Tok::Real : Tok::Int;
        t.text = std::string(src_.substr(start, pos_ - start));
        return t;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

struct SyntaxError {
    Diagnostic diag;
};

class Parser {
public:
    Parser(std::string_view text, std::string file) : lexer_(text), file_(std::move(file)) {
        cur_ = lexer_.next();
    }

    ModelUnit unit() {
        ModelUnit m;
        m.span = span_here();
        expect_word("model");
        m.name = ident("model name");
        expect("{");
        while (true) {
            if (at_word("actor")) {
                m.actor_classes.push_back(actor());
            } else if (at_word("data")) {
                m.data_classes.push_back(data());
            } else if (at_word("protocol")) {
                m.protocols.push_back(protocol());
            } else if (at_word("enum")) {
                m.enums.push_back(enum_decl());
            } else {
                break;
            }
        }
        if (!at_word("root")) fail("'actor', 'data', 'protocol', 'enum' or 'root'");
        next();
        m.root_span = span_here();
        m.root = ident("root actor class name");
        expect("}");
        if (cur_.kind != Tok::End) fail("end of input");
        return m;
    }

    std::vector<Diagnostic> semantic;

private:
    // --- token helpers -------------------------------------------------
    SourceSpan span_here() const {
        return SourceSpan{file_, cur_.line, cur_.column,
                          static_cast<int>(std::max<std::size_t>(cur_.text.size(), 1))};
    }

    [[noreturn]] void fail(const std::string& expected) {
        std::string found;
        switch (cur_.kind) {
            case Tok::End: found = "end of input"; break;
            case Tok::Bad: found = "unexpected character '" + cur_.text + "'"; break;
            default: found = "'" + cur_.text + "'"; break;
        }
        throw SyntaxError{Diagnostic{std::string(code::syntax), span_here(),
                                     "expected " + expected + ", found " + found}};
    }

    void next() { cur_ = lexer_.next(); }

    bool at(std::string_view punct) const { return cur_.kind == Tok::Punct && cur_.text == punct; }
    bool at_word(std::string_view w) const { return cur_.kind == Tok::Ident && cur_.text == w; }

    void expect(std::string_view punct) {
        if (!at(punct)) fail("'" + std::string(punct) + "'");
        next();
    }

    void expect_word(std::string_view w) {
        if (!at_word(w)) fail("'" + std::string(w) + "'");
        next();
    }

    bool accept(std::string_view punct) {
        if (!at(punct)) return false;
        next();
        return true;
    }

    std::string ident(const std::string& what) {
        if (cur_.kind != Tok::Ident || is_keyword(cur_.text)) fail(what);
        std::string s = cur_.text;
        next();
        return s;
    }

    // --- declarations --------------------------------------------------
    TypeRef type_ref() {
        TypeRef t;
        t.span = span_here();
        if (at_word("bool")) {
            t.kind = PrimKind::Bool;
            next();
        } else if (at_word("int")) {
            t.kind = PrimKind::Int;
            next();
        } else if (at_word("real")) {
            t.kind = PrimKind::Real;
            next();
        } else {
            t.kind = PrimKind::Named;
            t.name = ident("type");
        }
        return t;
    }

    std::vector<Param> params() {
        std::vector<Param> ps;
        expect("(");
        if (!at(")")) {
            do {
                Param p;
                p.span = span_here();
                p.name = ident("parameter name");
                expect(":");
                p.type = type_ref();
                ps.push_back(std::move(p));
            } while (accept(","));
        }
        expect(")");
        return ps;
    }

    Signature signature(bool allow_ret) {
        Signature s;
        s.span = span_here();
        s.name = ident("signature name");
        s.params = params();
        if (allow_ret && accept(":")) s.ret = type_ref();
        expect(";");
        return s;
    }

    Protocol protocol() {
        Protocol p;
        p.span = span_here();
        next();
        p.name = ident("protocol name");
        expect("{");
        while (!at("}")) {
            if (at_word("method")) {
                next();
                p.methods.push_back(signature(true));
            } else if (at_word("message")) {
                next();
                p.messages.push_back(signature(false));
            } else {
                fail("'method', 'message' or '}'");
            }
        }
        next();
        return p;
    }

    EnumDecl enum_decl() {
        EnumDecl e;
        e.span = span_here();
        next();
        e.name = ident("enum name");
        expect("{");
        do {
            e.members.push_back(ident("enum member"));
        } while (accept(","));
        expect("}");
        return e;
    }

    ActorClass actor() {
        ActorClass a;
        a.span = span_here();
        next();
        a.name = ident("actor class name");
        if (accept(":")) {
            do {
                NameRef r;
                r.span = span_here();
                r.name = ident("superclass name");
                a.superclasses.push_back(std::move(r));
            } while (accept(","));
        }
        members(a);
        return a;
    }

    DataClass data() {
        DataClass d;
        d.span = span_here();
        next();
        d.name = ident("data class name");
        ActorClass body;
        members(body);
        d.fields = std::move(body.attributes);
        d.accessors = std::move(body.methods);
        auto passive = [&](const SourceSpan& s, const char* what) {
            semantic.push_back(Diagnostic{std::string(code::invalid), s,
                                          "data class '" + d.name + "' is passive and cannot declare " + what});
        };
        for (const auto& p : body.ports) passive(p.span, "ports");
        for (const auto& p : body.parts) passive(p.span, "parts");
        for (const auto& c : body.channels) passive(c.span, "channels");
        for (const auto& t : body.timers) passive(t.span, "timers");
        if (body.machine) passive(body.machine->span, "a state machine");
        if (body.block) passive(body.block->span, "a continuous block");
        if (body.deadline_ticks) passive(body.deadline_span, "a deadline");
        return d;
    }

    void members(ActorClass& a) {
        expect("{");
        while (!at("}")) {
            const SourceSpan sp = span_here();
            if (at_word("provides") || at_word("requires")) {
                Port p;
                p.span = sp;
                p.direction = at_word("provides") ? PortDirection::Provided : PortDirection::Required;
                next();
                p.name = ident("port name");
                expect(":");
                p.protocol = ident("protocol name");
                expect(";");
                a.ports.push_back(std::move(p));
            } else if (at_word("tunable") || at_word("var")) {
                Attribute at;
                at.span = sp;
                if (at_word("tunable")) {
                    at.tunable = true;
                    next();
                }
                expect_word("var");
                at.name = ident("attribute name");
                expect(":");
                at.type = type_ref();
                if (accept("=")) at.init = expr();
                expect(";");
                a.attributes.push_back(std::move(at));
            } else if (at_word("timer")) {
                next();
                TimerDecl t{ident("timer name"), sp};
                expect(";");
                a.timers.push_back(std::move(t));
            } else if (at_word("method")) {
                a.methods.push_back(method());
            } else if (at_word("part")) {
                next();
                Part p;
                p.span = sp;
                p.name = ident("part name");
                expect(":");
                p.class_name = ident("actor class name");
                expect(";");
                a.parts.push_back(std::move(p));
            } else if (at_word("connect")) {
                next();
                Channel c;
                c.span = sp;
                c.a = endpoint();
                expect("--");
                c.b = endpoint();
                expect(";");
                a.channels.push_back(std::move(c));
            } else if (at_word("machine")) {
                if (a.machine) fail("a single 'machine' per class");
                a.machine = machine();
            } else if (at_word("block")) {
                if (a.block) fail("a single 'block' per class");
                a.block = block();
            } else if (at_word("deadline")) {
                if (a.deadline_ticks) fail("a single 'deadline' per class");
                a.deadline_span = sp;
                next();
                if (cur_.kind != Tok::Int) fail("deadline in ticks");
                a.deadline_ticks = int_literal();
                expect(";");
            } else {
                fail("member declaration or '}'");
            }
        }
        next();
    }

    Method method() {
        Method m;
        m.span = span_here();
        next();
        m.name = ident("method name");
        m.params = params();
        if (accept(":")) m.ret = type_ref();
        expect("{");
        while (!at("}")) {
            m.body.push_back(stmt());
            expect(";");
        }
        next();
        return m;
    }

    Endpoint endpoint() {
        Endpoint e;
        e.span = span_here();
        if (at_word("self")) {
            e.part = kSelf;
            next();
        } else {
            e.part = ident("part name or 'self'");
        }
        expect(".");
        e.port = ident("port name");
        return e;
    }

    StateMachine machine() {
        StateMachine sm;
        sm.span = span_here();
        next();
        expect("{");
        expect_word("initial");
        sm.initial = ident("initial state");
        expect(";");
        bool declared = false;
        if (at_word("states")) {
            declared = true;
            next();
            do {
                sm.states.push_back(ident("state name"));
            } while (accept(","));
            expect(";");
        }
        while (!at("}")) {
            Transition t;
            t.span = span_here();
            t.from = ident("source state");
            expect("->");
            t.to = ident("target state");
            expect_word("on");
            t.trigger = ident("trigger name");
            if (at_word("if")) {
                next();
                // '/' at the guard's top level introduces the actions.
                guard_nesting_ = 0;
                in_guard_ = true;
                t.guard = expr();
                in_guard_ = false;
            }
            if (accept("/")) {
                do {
                    t.actions.push_back(stmt());
                } while (accept(","));
            }
            expect(";");
            sm.transitions.push_back(std::move(t));
        }
        next();
        if (!declared) {
            auto add = [&](const std::string& s) {
                if (std::find(sm.states.begin(), sm.states.end(), s) == sm.states.end()) sm.states.push_back(s);
            };
            add(sm.initial);
            for (const auto& t : sm.transitions) {
                add(t.from);
                add(t.to);
            }
        }
        return sm;
    }

    double signed_number() {
        bool neg = accept("-");
        if (cur_.kind != Tok::Int && cur_.kind != Tok::Real) fail("number");
        double v = cur_.kind == Tok::Int ? static_cast<double>(int_literal()) : real_literal();
        return neg ? -v : v;
    }

    BlockRef block() {
        BlockRef b;
        b.span = span_here();
        next();
        std::size_t arity = 0;
        if (at_word("pt1")) {
            b.kind = BlockKind::Pt1;
            arity = 2;
        } else if (at_word("pi")) {
            b.kind = BlockKind::Pi;
            arity = 4;
        } else if (at_word("limiter")) {
            b.kind = BlockKind::Limiter;
            arity = 2;
        } else {
            fail("'pt1', 'pi' or 'limiter'");
        }
        next();
        expect("(");
        for (std::size_t i = 0; i < arity; ++i) {
            if (i) expect(",");
            b.params.push_back(signed_number());
        }
        expect(")");
        expect_word("input");
        b.input = expr();
        expect(";");
        return b;
    }

    // --- statements ----------------------------------------------------
    Stmt stmt() {
        Stmt s;
        s.span = span_here();
        if (at_word("send")) {
            next();
            s.kind = StmtKind::Send;
            s.target.push_back(ident("port name"));
            expect(".");
            s.target.push_back(ident("message name"));
            s.args = call_args();
        } else if (at_word("set")) {
            next();
            s.kind = StmtKind::SetTimer;
            s.target.push_back(ident("timer name"));
            expect("(");
            s.value = expr();
            expect(")");
        } else if (at_word("cancel")) {
            next();
            s.kind = StmtKind::CancelTimer;
            s.target.push_back(ident("timer name"));
        } else if (at_word("return")) {
            next();
            s.kind = StmtKind::Return;
            s.value = expr();
        } else {
            const SourceSpan sp = span_here();
            std::vector<std::string> path = dotted("attribute, port or data field");
            if (at("(")) {
                s.kind = StmtKind::Eval;
                s.value = call_expr(std::move(path), sp);
            } else {
                expect("=");
                s.kind = StmtKind::Assign;
                s.target = std::move(path);
                s.value = expr();
            }
        }
        return s;
    }

    std::vector<std::string> dotted(const std::string& what) {
        std::vector<std::string> path{ident(what)};
        while (accept(".")) path.push_back(ident("member name"));
        return path;
    }

    std::vector<Expr> call_args() {
        std::vector<Expr> args;
        expect("(");
        ++guard_nesting_;
        if (!at(")")) {
            do {
                args.push_back(expr());
            } while (accept(","));
        }
        expect(")");
        --guard_nesting_;
        return args;
    }

    Expr call_expr(std::vector<std::string> path, const SourceSpan& sp) {
        if (path.size() < 2) fail("'.' before a call (calls go through a port or data attribute)");
        Expr e;
        e.kind = ExprKind::Call;
        e.span = sp;
        e.path = std::move(path);
        e.args = call_args();
        return e;
    }

    // --- expressions ---------------------------------------------------
    struct DepthGuard {
        Parser& p;
        explicit DepthGuard(Parser& parser) : p(parser) {
            if (++p.depth_ > kMaxDepth) p.fail("shallower expression nesting");
        }
        ~DepthGuard() { --p.depth_; }
    };

    Expr binary(BinaryOp op, Expr lhs, Expr rhs, const SourceSpan& sp) {
        Expr e;
        e.kind = ExprKind::Binary;
        e.binary = op;
        e.span = sp;
        e.args.push_back(std::move(lhs));
        e.args.push_back(std::move(rhs));
        return e;
    }

    Expr expr() {
        DepthGuard g(*this);
        Expr lhs = and_expr();
        while (at_word("or")) {
            const SourceSpan sp = span_here();
            next();
            lhs = binary(BinaryOp::Or, std::move(lhs), and_expr(), sp);
        }
        return lhs;
    }

    Expr and_expr() {
        Expr lhs = not_expr();
        while (at_word("and")) {
            const SourceSpan sp = span_here();
            next();
            lhs = binary(BinaryOp::And, std::move(lhs), not_expr(), sp);
        }
        return lhs;
    }

    Expr not_expr() {
        DepthGuard g(*this);
        if (at_word("not")) {
            Expr e;
            e.kind = ExprKind::Unary;
            e.unary = UnaryOp::Not;
            e.span = span_here();
            next();
            e.args.push_back(not_expr());
            return e;
        }
        return comparison();
    }

    Expr comparison() {
        Expr lhs = additive();
        while (true) {
            BinaryOp op;
            if (at("<")) op = BinaryOp::Lt;
            else if (at("<=")) op = BinaryOp::Le;
            else if (at(">")) op = BinaryOp::Gt;
            else if (at(">=")) op = BinaryOp::Ge;
            else if (at("==")) op = BinaryOp::Eq;
            else if (at("!=")) op = BinaryOp::Ne;
            else return lhs;
            const SourceSpan sp = span_here();
            next();
            lhs = binary(op, std::move(lhs), additive(), sp);
        }
    }

    Expr additive() {
        Expr lhs = multiplicative();
        while (at("+") || at("-")) {
            const BinaryOp op = at("+") ? BinaryOp::Add : BinaryOp::Sub;
            const SourceSpan sp = span_here();
            next();
            lhs = binary(op, std::move(lhs), multiplicative(), sp);
        }
        return lhs;
    }

    Expr multiplicative() {
        Expr lhs = unary();
        while (at("*") || (at("/") && !(in_guard_ && guard_nesting_ == 0))) {
            const BinaryOp op = at("*") ? BinaryOp::Mul : BinaryOp::Div;
            const SourceSpan sp = span_here();
            next();
            lhs = binary(op, std::move(lhs), unary(), sp);
        }
        return lhs;
    }

    Expr unary() {
        DepthGuard g(*this);
        if (at("-")) {
            Expr e;
            e.kind = ExprKind::Unary;
            e.unary = UnaryOp::Neg;
            e.span = span_here();
            next();
            e.args.push_back(unary());
            return e;
        }
        return primary();
    }

    std::int64_t int_literal() {
        std::int64_t v = 0;
        const auto* first = cur_.text.data();
        const auto* last = first + cur_.text.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) fail("integer literal within 64-bit range");
        next();
        return v;
    }

    double real_literal() {
        // strtod is correctly rounded in glibc; from_chars would do too but
        // strtod keeps the literal semantics identical to the emitted C.
        const double v = std::strtod(cur_.text.c_str(), nullptr);
        if (!std::isfinite(v)) fail("finite real literal");
        next();
        return v;
    }

    Expr primary() {
        DepthGuard g(*this);
        Expr e;
        e.span = span_here();
        if (cur_.kind == Tok::Int) {
            e.kind = ExprKind::Literal;
            e.literal = int_literal();
            return e;
        }
        if (cur_.kind == Tok::Real) {
            e.kind = ExprKind::Literal;
            e.literal = real_literal();
            return e;
        }
        if (at_word("true") || at_word("false")) {
            e.kind = ExprKind::Literal;
            e.literal = at_word("true");
            next();
            return e;
        }
        if (at_word("out")) {
            e.kind = ExprKind::Out;
            next();
            return e;
        }
        if (accept("(")) {
            ++guard_nesting_;
            Expr inner = expr();
            expect(")");
            --guard_nesting_;
            return inner;
        }
        if (cur_.kind == Tok::Ident && !is_keyword(cur_.text)) {
            std::vector<std::string> path = dotted("name");
            if (at("(")) return call_expr(std::move(path), e.span);
            e.kind = ExprKind::Path;
            e.path = std::move(path);
            return e;
        }
        fail("expression");
    }

    Lexer lexer_;
    std::string file_;
    Token cur_;
    int depth_ = 0;
    bool in_guard_ = false;
    int guard_nesting_ = 0;
};

}  // namespace

bool is_keyword(std::string_view word) {
    return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

ParseResult parse(std::string_view text, const std::string& file) {
    ParseResult r;
    Parser p(text, file);
    try {
        ModelUnit m = p.unit();
        if (!p.semantic.empty()) {
            r.diagnostics = std::move(p.semantic);
            sort_diagnostics(r.diagnostics);
            return r;
        }
        r.model = std::move(m);
    } catch (const SyntaxError& e) {
        r.diagnostics.push_back(e.diag);
    }
    return r;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(code::io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ParseResult parse_file(const std::string& path) { return parse(read_file(path), path); }

}  // namespace broom::dsl
