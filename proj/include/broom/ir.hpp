#pragma once

// Typed, name-resolved form of a flattened model. One ActorIR per class; it is
// shared by every instance of that class. Both the interpreter and the C
// emitter walk exactly these trees, which is what keeps their evaluation
// order identical.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "broom/ast.hpp"

namespace broom::ir {

enum class TypeKind { Void, Bool, Int, Real, Enum, Data };

struct Type {
    TypeKind kind = TypeKind::Void;
    int index = -1;  // enum or data class index

    bool operator==(const Type&) const = default;
    bool numeric() const { return kind == TypeKind::Int || kind == TypeKind::Real; }
    bool primitive() const { return kind != TypeKind::Void && kind != TypeKind::Data; }

    static Type of(TypeKind k, int idx = -1) { return Type{k, idx}; }
};

/// Runtime scalar. Enums are stored as their ordinal.
using Value = std::variant<bool, std::int64_t, double>;

enum class Op {
    Const,
    Slot,      // attribute or data field
    Param,     // trigger / method parameter
    BlockOut,  // `out` of the enclosing block actor
    PortCall,  // synchronous call through a required port
    DataCall,  // accessor call on a data attribute
    Neg,
    Not,
    Binary,
    ToReal,  // int -> real promotion
};

struct Expr {
    Op op = Op::Const;
    Type type;
    Value constant{};
    int slot = -1;  // Slot: offset in the frame; DataCall: receiver base offset
    // Slot / DataCall receiver: attribute name followed by nested field names.
    std::vector<std::string> access;
    int index = -1;   // Param: parameter index; PortCall: required port; DataCall: data class
    int member = -1;  // PortCall: signature index in the port protocol; DataCall: method index
    BinaryOp bop = BinaryOp::Add;
    std::vector<Expr> args;
    SourceSpan span;
};

enum class StmtOp { Assign, Eval, Send, SetTimer, CancelTimer };

struct Stmt {
    StmtOp op = StmtOp::Eval;
    int slot = -1;  // Assign target
    std::vector<std::string> access;
    Type type;   // Assign target type
    Expr value;  // Assign rhs, Eval call, SetTimer ticks
    int port = -1;
    int member = -1;
    std::vector<Expr> args;  // Send
    int timer = -1;
    SourceSpan span;
};

struct SigInfo {
    std::string name;
    bool message = false;
    std::vector<Type> params;
    std::vector<std::string> param_names;
    Type ret;
};

struct ProtocolInfo {
    std::string name;
    std::vector<SigInfo> sigs;  // methods first, then messages
    SourceSpan span;

    int find(std::string_view n) const;
};

struct AttrInfo {
    std::string name;
    Type type;
    bool tunable = false;
    int slot = 0;
    int width = 1;
};

struct MethodIR {
    std::string name;
    std::vector<Type> params;
    std::vector<std::string> param_names;
    Type ret;
    std::vector<Stmt> body;
    std::optional<Expr> result;
    SourceSpan span;
};

enum class TriggerKind { Method, Message, Timer };

struct Trigger {
    std::string name;
    TriggerKind kind = TriggerKind::Message;
    std::vector<Type> params;
    std::vector<std::string> param_names;
    Type ret;
    int method = -1;               // method body serving this trigger
    std::vector<int> transitions;  // candidate transitions, declaration order
};

struct TransitionIR {
    int from = -1;
    int to = -1;
    int trigger = -1;
    std::optional<Expr> guard;
    std::vector<Stmt> actions;
    SourceSpan span;
};

struct BlockIR {
    BlockKind kind = BlockKind::Pt1;
    std::vector<double> params;
    Expr input;
    SourceSpan span;

    bool stateful() const { return kind != BlockKind::Limiter; }
};

struct PortInfo {
    std::string name;
    PortDirection direction = PortDirection::Provided;
    int protocol = -1;
    SourceSpan span;
};

struct PartIR {
    std::string name;
    int cls = -1;
    SourceSpan span;
};

struct EndpointIR {
    int part = -1;  // -1 = self
    int port = -1;
};

struct ChannelIR {
    EndpointIR a;
    EndpointIR b;
    SourceSpan span;
};

struct ActorIR {
    std::string name;
    std::vector<AttrInfo> attrs;
    std::vector<Type> slot_types;  // primitive type of each storage slot
    std::vector<Value> initial;    // initial value of each slot
    std::vector<PortInfo> ports;
    std::vector<Trigger> triggers;
    std::vector<MethodIR> methods;
    std::vector<std::string> states;
    int initial_state = -1;
    std::vector<TransitionIR> transitions;
    std::optional<BlockIR> block;
    std::vector<std::string> timers;
    std::optional<std::int64_t> deadline_ticks;
    std::vector<PartIR> parts;
    std::vector<ChannelIR> channels;
    SourceSpan span;

    bool has_machine() const { return initial_state >= 0; }
    int find_trigger(std::string_view n) const;
    int find_port(std::string_view n) const;
    int find_part(std::string_view n) const;
    int find_attr(std::string_view n) const;
    int find_state(std::string_view n) const;
};

struct DataIR {
    std::string name;
    std::vector<AttrInfo> fields;
    std::vector<Type> slot_types;
    std::vector<Value> initial;
    std::vector<MethodIR> methods;
    SourceSpan span;

    int find_method(std::string_view n) const;
};

struct EnumInfo {
    std::string name;
    std::vector<std::string> members;
};

struct Program {
    std::string model_name;
    std::vector<EnumInfo> enums;
    std::vector<ProtocolInfo> protocols;
    std::vector<DataIR> data;
    std::vector<ActorIR> actors;
    int root = -1;
};

}  // namespace broom::ir
