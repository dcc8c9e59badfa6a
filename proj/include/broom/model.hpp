#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "broom/ast.hpp"
#include "broom/diagnostic.hpp"
#include "broom/ir.hpp"

namespace broom {

/// Checks every well-formedness rule, from names and inheritance down to
/// instance-level bindings and continuous-loop structure. Pure; the list is
/// sorted by location then code and is empty iff the model is valid.
/// Warnings (W_*) are not produced here; see check_config in sim.
std::vector<Diagnostic> validate(const ModelUnit& model);

/// Copy-down structural inheritance. Superclass members come first, each group
/// in declaration order. Throws DiagnosticError on E_OVERRIDE or on any
/// inheritance-structure error.
ModelUnit flatten_inheritance(const ModelUnit& model);

/// Name-resolved, type-checked form of a flattened model.
/// Throws DiagnosticError when lowering reports errors.
std::shared_ptr<const ir::Program> lower(const ModelUnit& flat);

/// Where a call on (instance, required port, signature) lands.
struct CallTarget {
    int instance = -1;
    int port = -1;     // provided port on the serving instance
    int trigger = -1;  // trigger index in the serving class
};

struct InstanceNode {
    std::string path;       // "root", "root.sys.ctrl", ...
    std::string part_name;  // empty for the root
    int cls = -1;
    int parent = -1;
    std::vector<int> children;
    SourceSpan part_span;
};

/// Fully resolved runtime instantiation. Nodes are in preorder; a node's index
/// is its scheduling priority.
class InstanceTree {
public:
    std::shared_ptr<const ir::Program> program;
    std::vector<InstanceNode> nodes;
    // bindings[node][required port][signature index in that port's protocol]
    std::vector<std::vector<std::vector<CallTarget>>> bindings;
    // Block-bearing instances in continuous evaluation order.
    std::vector<int> block_order;
    // For each instance: block instances whose outputs it reads from the
    // previous tick (state-bearing block inside a continuous cycle).
    std::vector<std::vector<int>> delayed_inputs;

    const ir::ActorIR& cls(int node) const { return program->actors[nodes[node].cls]; }
    int find(std::string_view path) const;

    /// Follows relay channels from a provided port to the serving instance.
    std::optional<CallTarget> resolve_provided(int node, int port) const;

    /// Flat view keyed by (instance path, required port, signature) ->
    /// (serving instance path, provided port).
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::string, std::string>>
    binding_map() const;

    bool delayed(int reader, int source) const;
};

/// Builds the instance tree from a validated model (flattened on the fly if it
/// still has superclasses). Throws DiagnosticError (E_UNBOUND,
/// E_ALGEBRAIC_LOOP, E_CALL_CYCLE, or any lowering error).
InstanceTree instantiate(const ModelUnit& model);

// Helpers for printing typed values.
std::string type_name(const ir::Program& p, const ir::Type& t);

}  // namespace broom
