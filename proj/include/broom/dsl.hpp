#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "broom/ast.hpp"
#include "broom/diagnostic.hpp"

namespace broom::dsl {

struct ParseResult {
    std::optional<ModelUnit> model;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return model.has_value(); }
};

/// Parses one `.broom` unit. Never throws on malformed input; syntax problems
/// come back as E_SYNTAX (or E_INVALID for active members inside a data class).
ParseResult parse(std::string_view text, const std::string& file = "<input>");

/// Canonical text: fixed member order, 2-space indent, LF line endings.
/// parse(render(m)) is structurally equal to m.
std::string render(const ModelUnit& model);

std::string render_expr(const Expr& e);

/// Shortest text that reads back as the same double and still lexes as a real.
std::string format_real_literal(double v);

bool is_keyword(std::string_view word);

/// Reads a whole file; throws Error(E_IO).
std::string read_file(const std::string& path);

/// parse(read_file(path), path)
ParseResult parse_file(const std::string& path);

}  // namespace broom::dsl
