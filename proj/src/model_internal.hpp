#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "broom/model.hpp"

namespace broom::detail {

void report(std::vector<Diagnostic>& out, std::string_view code, const SourceSpan& span, std::string msg);
bool has_errors(const std::vector<Diagnostic>& diags);

void check_names(const ModelUnit& m, std::vector<Diagnostic>& out);
void check_inheritance(const ModelUnit& m, std::vector<Diagnostic>& out);
ModelUnit flatten(const ModelUnit& m, std::vector<Diagnostic>& out);

std::shared_ptr<const ir::Program> lower_program(const ModelUnit& flat, std::vector<Diagnostic>& out);
std::optional<InstanceTree> build_tree(std::shared_ptr<const ir::Program> program, std::vector<Diagnostic>& out);

}  // namespace broom::detail
