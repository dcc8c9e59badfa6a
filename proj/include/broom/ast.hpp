#pragma once

// Syntax tree for a BROOM model unit. Produced by the DSL parser, consumed by
// validation, inheritance flattening and lowering. Equality is structural and
// ignores source spans.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "broom/diagnostic.hpp"

namespace broom {

enum class PrimKind { Bool, Int, Real, Named };

/// `bool`, `int`, `real`, or the name of an enum / data class.
struct TypeRef {
    PrimKind kind = PrimKind::Real;
    std::string name;
    SourceSpan span;

    bool operator==(const TypeRef&) const = default;
};

enum class ExprKind { Literal, Path, Call, Out, Unary, Binary };
enum class UnaryOp { Neg, Not };
enum class BinaryOp { Add, Sub, Mul, Div, Lt, Le, Gt, Ge, Eq, Ne, And, Or };

using LiteralValue = std::variant<bool, std::int64_t, double>;

struct Expr {
    ExprKind kind = ExprKind::Literal;
    LiteralValue literal{};
    // Path: `a.b.c` (attribute, data field, parameter or enum literal).
    // Call: receiver path followed by the method name, e.g. {"sensor", "temp"}.
    std::vector<std::string> path;
    UnaryOp unary = UnaryOp::Neg;
    BinaryOp binary = BinaryOp::Add;
    std::vector<Expr> args;  // operands, or call arguments
    SourceSpan span;

    bool operator==(const Expr&) const = default;
};

enum class StmtKind { Assign, Eval, Send, SetTimer, CancelTimer, Return };

struct Stmt {
    StmtKind kind = StmtKind::Eval;
    // Assign: lvalue path. Send: {port, message}. Set/CancelTimer: {timer}.
    std::vector<std::string> target;
    Expr value;              // Assign rhs, Eval call, SetTimer ticks, Return value
    std::vector<Expr> args;  // Send arguments
    SourceSpan span;

    bool operator==(const Stmt&) const = default;
};

struct Param {
    std::string name;
    TypeRef type;
    SourceSpan span;

    bool operator==(const Param&) const = default;
};

/// A method (synchronous, optional return) or message (asynchronous) signature.
struct Signature {
    std::string name;
    std::vector<Param> params;
    std::optional<TypeRef> ret;
    SourceSpan span;

    bool operator==(const Signature&) const = default;
};

struct Protocol {
    std::string name;
    std::vector<Signature> methods;
    std::vector<Signature> messages;
    SourceSpan span;

    bool operator==(const Protocol&) const = default;
};

struct EnumDecl {
    std::string name;
    std::vector<std::string> members;
    SourceSpan span;

    bool operator==(const EnumDecl&) const = default;
};

enum class PortDirection { Provided, Required };

struct Port {
    std::string name;
    PortDirection direction = PortDirection::Provided;
    std::string protocol;
    SourceSpan span;

    bool operator==(const Port&) const = default;
};

struct Attribute {
    std::string name;
    TypeRef type;
    std::optional<Expr> init;
    bool tunable = false;
    SourceSpan span;

    bool operator==(const Attribute&) const = default;
};

struct Method {
    std::string name;
    std::vector<Param> params;
    std::optional<TypeRef> ret;
    std::vector<Stmt> body;
    SourceSpan span;

    bool operator==(const Method&) const = default;
};

struct Part {
    std::string name;
    std::string class_name;
    SourceSpan span;

    bool operator==(const Part&) const = default;
};

inline constexpr const char* kSelf = "self";

struct Endpoint {
    std::string part;  // part instance name, or "self"
    std::string port;
    SourceSpan span;

    bool is_self() const { return part == kSelf; }
    bool operator==(const Endpoint&) const = default;
};

struct Channel {
    Endpoint a;
    Endpoint b;
    SourceSpan span;

    bool operator==(const Channel&) const = default;
};

struct Transition {
    std::string from;
    std::string to;
    std::string trigger;
    std::optional<Expr> guard;
    std::vector<Stmt> actions;
    SourceSpan span;

    bool operator==(const Transition&) const = default;
};

struct StateMachine {
    std::vector<std::string> states;
    std::string initial;
    std::vector<Transition> transitions;
    SourceSpan span;

    bool operator==(const StateMachine&) const = default;
};

enum class BlockKind { Pt1, Pi, Limiter };

/// pt1: {K, T}; pi: {Kp, Ki, lo, hi}; limiter: {lo, hi}.
struct BlockRef {
    BlockKind kind = BlockKind::Pt1;
    std::vector<double> params;
    Expr input;
    SourceSpan span;

    bool operator==(const BlockRef&) const = default;
};

struct TimerDecl {
    std::string name;
    SourceSpan span;

    bool operator==(const TimerDecl&) const = default;
};

struct NameRef {
    std::string name;
    SourceSpan span;

    bool operator==(const NameRef&) const = default;
};

struct ActorClass {
    std::string name;
    std::vector<NameRef> superclasses;  // more than one is a diagnostic
    std::vector<Port> ports;
    std::vector<Attribute> attributes;
    std::vector<TimerDecl> timers;
    std::vector<Method> methods;
    std::vector<Part> parts;
    std::vector<Channel> channels;
    std::optional<StateMachine> machine;
    std::optional<BlockRef> block;
    std::optional<std::int64_t> deadline_ticks;
    SourceSpan deadline_span;
    SourceSpan span;

    bool operator==(const ActorClass&) const = default;
};

struct DataClass {
    std::string name;
    std::vector<Attribute> fields;
    std::vector<Method> accessors;
    SourceSpan span;

    bool operator==(const DataClass&) const = default;
};

struct ModelUnit {
    std::string name;
    std::vector<EnumDecl> enums;
    std::vector<Protocol> protocols;
    std::vector<DataClass> data_classes;
    std::vector<ActorClass> actor_classes;
    std::string root;
    SourceSpan root_span;
    SourceSpan span;

    bool operator==(const ModelUnit&) const = default;

    const ActorClass* find_actor(std::string_view n) const;
    const DataClass* find_data(std::string_view n) const;
    const Protocol* find_protocol(std::string_view n) const;
    const EnumDecl* find_enum(std::string_view n) const;
};

}  // namespace broom
