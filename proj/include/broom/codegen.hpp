#pragma once

// C89 target code. The emitted program performs the simulator's per-tick
// schedule with the same operations in the same order, so both produce the
// same trace.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "broom/model.hpp"
#include "broom/sim.hpp"

namespace broom::codegen {

enum class StepKind { Stimuli, Timer, Block, Drain, Sample };

struct Step {
    StepKind kind = StepKind::Stimuli;
    int node = -1;  // instance, or -1 for whole-model steps
    std::string text;
};

struct StateField {
    std::string name;    // mangled, e.g. root_plant.y
    std::string c_type;  // double, model_int, int
    std::string role;    // attribute, fsm, block, timer
};

struct FlatProgram {
    InstanceTree tree;
    SimConfig config;
    std::vector<Step> schedule;     // one tick, in execution order
    std::vector<StateField> state;  // every piece of per-instance state
    std::vector<std::string> queues;

    /// The SCHEDULE.txt listing.
    std::string listing() const;
};

struct CodegenConfig {
    bool emit_trace = true;
};

/// Instance path (or any dotted name) to a C identifier. Underscores inside a
/// segment become `_1`, segments are joined by `_`, so distinct paths never
/// collide.
std::string mangle(std::string_view dotted);

/// Throws Error(E_UNSUPPORTED) for constructs the C back end cannot express.
FlatProgram flatten(const InstanceTree& tree, const SimConfig& cfg);

/// model.h, model.c, SCHEDULE.txt and (with emit_trace) trace_shim.c.
std::map<std::string, std::string> emit(const FlatProgram& prog, const CodegenConfig& cfg);

/// A main() that replays the stimulus script for config.ticks() ticks and
/// exits with 3 when the model halts. Throws Error(E_STIMULUS).
std::string emit_driver(const FlatProgram& prog, const std::vector<Stimulus>& stimuli);

/// Writes every file into dir (created if missing). Throws Error(E_IO).
void write_sources(const std::string& dir, const std::map<std::string, std::string>& files);

}  // namespace broom::codegen
