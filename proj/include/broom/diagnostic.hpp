#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace broom {

/// 1-based location of a parsed node. Spans never take part in structural
/// equality: two models that differ only in layout compare equal.
struct SourceSpan {
    std::string file;
    int line = 0;
    int column = 0;
    int length = 0;

    bool valid() const { return line > 0; }

    friend bool operator==(const SourceSpan&, const SourceSpan&) { return true; }
};

// Stable diagnostic codes. These strings appear in tool output and tests.
namespace code {
inline constexpr std::string_view syntax = "E_SYNTAX";
inline constexpr std::string_view multi_inherit = "E_MULTI_INHERIT";
inline constexpr std::string_view override_member = "E_OVERRIDE";
inline constexpr std::string_view chan_dangling = "E_CHAN_DANGLING";
inline constexpr std::string_view port_incompat = "E_PORT_INCOMPAT";
inline constexpr std::string_view contain_cycle = "E_CONTAIN_CYCLE";
inline constexpr std::string_view algebraic_loop = "E_ALGEBRAIC_LOOP";
inline constexpr std::string_view type = "E_TYPE";
inline constexpr std::string_view unresolved = "E_UNRESOLVED";
inline constexpr std::string_view unbound = "E_UNBOUND";
inline constexpr std::string_view duplicate = "E_DUPLICATE";
inline constexpr std::string_view fanout = "E_FANOUT";
inline constexpr std::string_view call_cycle = "E_CALL_CYCLE";
inline constexpr std::string_view invalid = "E_INVALID";
inline constexpr std::string_view stiff = "W_STIFF";

// Runtime / tool errors (not validation diagnostics).
inline constexpr std::string_view runtime = "E_RUNTIME";
inline constexpr std::string_view livelock = "E_LIVELOCK";
inline constexpr std::string_view halted = "E_HALTED";
inline constexpr std::string_view stimulus = "E_STIMULUS";
inline constexpr std::string_view lifeline = "E_LIFELINE";
inline constexpr std::string_view tunable = "E_TUNABLE";
inline constexpr std::string_view unsupported = "E_UNSUPPORTED";
inline constexpr std::string_view io = "E_IO";
inline constexpr std::string_view protocol = "E_PROTOCOL";
}  // namespace code

struct Diagnostic {
    std::string code;
    SourceSpan span;
    std::string message;

    bool is_warning() const { return !code.empty() && code.front() == 'W'; }
};

/// `CODE file:line:col message`
std::string format_diagnostic(const Diagnostic& d);

/// Sorts by (file, line, column, code, message); stable for equal keys.
void sort_diagnostics(std::vector<Diagnostic>& diags);

/// Error carrying a stable code. Thrown for contract violations that are not
/// model diagnostics (I/O, halted engine, bad stimulus, ...).
class Error : public std::runtime_error {
public:
    Error(std::string_view code, const std::string& message)
        : std::runtime_error(std::string(code) + ": " + message), code_(code), detail_(message) {}

    const std::string& code() const { return code_; }
    const std::string& detail() const { return detail_; }

private:
    std::string code_;
    std::string detail_;
};

/// Thrown by operations whose precondition is a clean model.
class DiagnosticError : public std::runtime_error {
public:
    explicit DiagnosticError(std::vector<Diagnostic> diags);

    const std::vector<Diagnostic>& diagnostics() const { return diags_; }

private:
    std::vector<Diagnostic> diags_;
};

}  // namespace broom
