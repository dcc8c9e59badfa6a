#pragma once

// Random syntax trees over the whole grammar. The trees are syntactically
// renderable but not necessarily well-formed models.

#include <cmath>
#include <random>
#include <string>

#include "broom/ast.hpp"

namespace gen {

class AstGen {
public:
    explicit AstGen(std::uint64_t seed) : rng_(seed) {}

    broom::ModelUnit unit() {
        broom::ModelUnit m;
        m.name = ident();
        for (int i = 0, n = upto(2); i < n; ++i) m.enums.push_back(enum_decl());
        for (int i = 0, n = upto(3); i < n; ++i) m.protocols.push_back(protocol());
        for (int i = 0, n = upto(2); i < n; ++i) m.data_classes.push_back(data());
        for (int i = 0, n = 1 + upto(3); i < n; ++i) m.actor_classes.push_back(actor());
        m.root = ident();
        return m;
    }

private:
    int upto(int n) { return std::uniform_int_distribution<int>(0, n)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

    std::string ident() {
        static const char* alpha = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
        std::string s(1, coin() ? 'x' : 'Q');
        for (int i = 0, n = upto(5); i < n; ++i) s += alpha[upto(62)];
        return s;
    }

    broom::TypeRef type() {
        broom::TypeRef t;
        switch (upto(3)) {
            case 0: t.kind = broom::PrimKind::Bool; break;
            case 1: t.kind = broom::PrimKind::Int; break;
            case 2: t.kind = broom::PrimKind::Real; break;
            default:
                t.kind = broom::PrimKind::Named;
                t.name = ident();
        }
        return t;
    }

    std::vector<broom::Param> params() {
        std::vector<broom::Param> ps;
        for (int i = 0, n = upto(2); i < n; ++i) ps.push_back({ident(), type(), {}});
        return ps;
    }

    broom::Signature sig(bool with_ret) {
        broom::Signature s;
        s.name = ident();
        s.params = params();
        if (with_ret && coin()) s.ret = type();
        return s;
    }

    broom::EnumDecl enum_decl() {
        broom::EnumDecl e;
        e.name = ident();
        for (int i = 0, n = 1 + upto(3); i < n; ++i) e.members.push_back(ident());
        return e;
    }

    broom::Protocol protocol() {
        broom::Protocol p;
        p.name = ident();
        for (int i = 0, n = upto(2); i < n; ++i) p.methods.push_back(sig(true));
        for (int i = 0, n = upto(2); i < n; ++i) p.messages.push_back(sig(false));
        return p;
    }

    std::vector<std::string> path(int min) {
        std::vector<std::string> p;
        for (int i = 0, n = min + upto(2); i < n; ++i) p.push_back(ident());
        return p;
    }

    double real_value() {
        switch (upto(4)) {
            case 0: return 0.0;
            case 1: return std::uniform_real_distribution<double>(0.0, 100.0)(rng_);
            case 2: return std::ldexp(std::uniform_real_distribution<double>(0.5, 1.0)(rng_), upto(2000) - 1000);
            case 3: return 5e-324;
            default: return static_cast<double>(upto(1000));
        }
    }

    broom::Expr expr(int depth) {
        broom::Expr e;
        const int pick = depth <= 0 ? upto(3) : upto(8);
        switch (pick) {
            case 0:
                e.kind = broom::ExprKind::Literal;
                switch (upto(2)) {
                    case 0: e.literal = coin(); break;
                    case 1:
                        e.literal = coin(0.1) ? std::int64_t{INT64_MAX}
                                              : std::int64_t{std::uniform_int_distribution<std::int64_t>(0, 1000000)(rng_)};
                        break;
                    default: e.literal = real_value();
                }
                break;
            case 1:
                e.kind = broom::ExprKind::Path;
                e.path = path(1);
                break;
            case 2: e.kind = broom::ExprKind::Out; break;
            case 3:
                e.kind = broom::ExprKind::Path;
                e.path = path(2);
                break;
            case 4:
                e.kind = broom::ExprKind::Call;
                e.path = path(2);
                for (int i = 0, n = upto(2); i < n; ++i) e.args.push_back(expr(depth - 1));
                break;
            case 5:
                e.kind = broom::ExprKind::Unary;
                e.unary = coin() ? broom::UnaryOp::Neg : broom::UnaryOp::Not;
                e.args.push_back(expr(depth - 1));
                break;
            default:
                e.kind = broom::ExprKind::Binary;
                e.binary = static_cast<broom::BinaryOp>(upto(11));
                e.args.push_back(expr(depth - 1));
                e.args.push_back(expr(depth - 1));
        }
        return e;
    }

    broom::Expr call() {
        broom::Expr e;
        e.kind = broom::ExprKind::Call;
        e.path = path(2);
        for (int i = 0, n = upto(2); i < n; ++i) e.args.push_back(expr(2));
        return e;
    }

    broom::Stmt stmt(bool allow_return) {
        broom::Stmt s;
        switch (upto(allow_return ? 5 : 4)) {
            case 0:
                s.kind = broom::StmtKind::Assign;
                s.target = path(1);
                s.value = expr(3);
                break;
            case 1:
                s.kind = broom::StmtKind::Eval;
                s.value = call();
                break;
            case 2:
                s.kind = broom::StmtKind::Send;
                s.target = {ident(), ident()};
                for (int i = 0, n = upto(2); i < n; ++i) s.args.push_back(expr(2));
                break;
            case 3:
                s.kind = broom::StmtKind::SetTimer;
                s.target = {ident()};
                s.value = expr(2);
                break;
            case 4:
                s.kind = broom::StmtKind::CancelTimer;
                s.target = {ident()};
                break;
            default:
                s.kind = broom::StmtKind::Return;
                s.value = expr(3);
        }
        return s;
    }

    broom::Method method() {
        broom::Method m;
        m.name = ident();
        m.params = params();
        if (coin()) m.ret = type();
        for (int i = 0, n = upto(3); i < n; ++i) m.body.push_back(stmt(true));
        return m;
    }

    broom::Attribute attribute(bool allow_tunable) {
        broom::Attribute a;
        a.name = ident();
        a.type = type();
        a.tunable = allow_tunable && coin(0.3);
        if (coin()) a.init = expr(2);
        return a;
    }

    broom::DataClass data() {
        broom::DataClass d;
        d.name = ident();
        for (int i = 0, n = upto(3); i < n; ++i) d.fields.push_back(attribute(false));
        for (int i = 0, n = upto(2); i < n; ++i) d.accessors.push_back(method());
        return d;
    }

    broom::Endpoint endpoint() {
        broom::Endpoint e;
        e.part = coin(0.3) ? std::string(broom::kSelf) : ident();
        e.port = ident();
        return e;
    }

    broom::ActorClass actor() {
        broom::ActorClass a;
        a.name = ident();
        for (int i = 0, n = coin(0.7) ? 0 : 1 + upto(1); i < n; ++i) a.superclasses.push_back({ident(), {}});
        for (int i = 0, n = upto(3); i < n; ++i) {
            a.ports.push_back({ident(), coin() ? broom::PortDirection::Provided : broom::PortDirection::Required, ident(), {}});
        }
        for (int i = 0, n = upto(3); i < n; ++i) a.attributes.push_back(attribute(true));
        for (int i = 0, n = upto(2); i < n; ++i) a.timers.push_back({ident(), {}});
        for (int i = 0, n = upto(2); i < n; ++i) a.methods.push_back(method());
        for (int i = 0, n = upto(2); i < n; ++i) a.parts.push_back({ident(), ident(), {}});
        for (int i = 0, n = upto(2); i < n; ++i) a.channels.push_back({endpoint(), endpoint(), {}});
        if (coin(0.4)) {
            broom::StateMachine sm;
            for (int i = 0, n = 1 + upto(3); i < n; ++i) sm.states.push_back(ident());
            sm.initial = sm.states[upto(static_cast<int>(sm.states.size()) - 1)];
            for (int i = 0, n = upto(3); i < n; ++i) {
                broom::Transition t;
                t.from = ident();
                t.to = ident();
                t.trigger = ident();
                if (coin()) t.guard = expr(3);
                for (int k = 0, m = upto(2); k < m; ++k) t.actions.push_back(stmt(false));
                sm.transitions.push_back(std::move(t));
            }
            a.machine = std::move(sm);
        }
        if (coin(0.3)) {
            broom::BlockRef b;
            b.kind = static_cast<broom::BlockKind>(upto(2));
            const int arity = b.kind == broom::BlockKind::Pi ? 4 : 2;
            for (int i = 0; i < arity; ++i) b.params.push_back(coin() ? -real_value() : real_value());
            b.input = expr(3);
            a.block = std::move(b);
        }
        if (coin(0.2)) a.deadline_ticks = 1 + upto(100);
        return a;
    }

    std::mt19937_64 rng_;
};

}  // namespace gen
