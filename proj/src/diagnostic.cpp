#include "broom/diagnostic.hpp"

#include <algorithm>
#include <tuple>

#include "broom/ast.hpp"

namespace broom {

std::string format_diagnostic(const Diagnostic& d) {
    return d.code + " " + d.span.file + ":" + std::to_string(d.span.line) + ":" + std::to_string(d.span.column) +
           " " + d.message;
}

void sort_diagnostics(std::vector<Diagnostic>& diags) {
    std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return std::tie(a.span.file, a.span.line, a.span.column, a.code, a.message) <
               std::tie(b.span.file, b.span.line, b.span.column, b.code, b.message);
    });
}

namespace {
std::string summarize(const std::vector<Diagnostic>& diags) {
    std::string s;
    for (const auto& d : diags) {
        if (!s.empty()) s += "\n";
        s += format_diagnostic(d);
    }
    return s.empty() ? "invalid model" : s;
}

template <typename T>
const T* find_named(const std::vector<T>& items, std::string_view n) {
    auto it = std::find_if(items.begin(), items.end(), [&](const T& x) { return x.name == n; });
    return it == items.end() ? nullptr : &*it;
}
}  // namespace

DiagnosticError::DiagnosticError(std::vector<Diagnostic> diags)
    : std::runtime_error(summarize(diags)), diags_(std::move(diags)) {}

const ActorClass* ModelUnit::find_actor(std::string_view n) const { return find_named(actor_classes, n); }
const DataClass* ModelUnit::find_data(std::string_view n) const { return find_named(data_classes, n); }
const Protocol* ModelUnit::find_protocol(std::string_view n) const { return find_named(protocols, n); }
const EnumDecl* ModelUnit::find_enum(std::string_view n) const { return find_named(enums, n); }

}  // namespace broom
