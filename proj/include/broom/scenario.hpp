#pragma once

// Scenarios in the style of message sequence charts, checked against traces.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "broom/model.hpp"
#include "broom/sim.hpp"
#include "broom/trace.hpp"

namespace broom {

enum class ArrowKind { Call, Msg };

struct Arrow {
    std::string from;  // lifeline: instance path or "env"
    std::string to;
    std::string name;  // signature
    ArrowKind kind = ArrowKind::Msg;
    // [min, max] ticks after the previously matched arrow (after tick 0 for
    // the first arrow).
    std::optional<std::pair<std::int64_t, std::int64_t>> window;

    bool operator==(const Arrow&) const = default;
};

struct Scenario {
    std::string name;
    std::vector<std::string> lifelines;
    std::vector<Arrow> arrows;
    bool strict = false;
};

enum class Priority { Feasibility, Reuse, KeyProperty, LeastUnderstood, Extra };

std::string_view priority_name(Priority p);
std::optional<Priority> parse_priority(std::string_view s);

struct PackageEntry {
    std::string file;  // as written in the package
    Priority priority = Priority::Extra;
    Scenario scenario;
    std::vector<Stimulus> stimuli;
    std::optional<double> duration;  // seconds; overrides the run config
};

struct ScenarioPackage {
    std::string name;
    std::vector<PackageEntry> entries;
};

enum class DivergenceReason { Missing, OutOfOrder, WindowViolation, ExtraEventInStrict };

std::string_view reason_name(DivergenceReason r);

struct Divergence {
    std::size_t arrow = 0;
    DivergenceReason reason = DivergenceReason::Missing;
    std::size_t trace_position = 0;  // index into Trace::events; events.size() when nothing matched
};

struct Verdict {
    bool pass = true;
    std::size_t matched = 0;
    std::optional<Divergence> divergence;
};

/// `{name, lifelines[], strict, arrows:[{from,to,name,kind,window:[min,max]?}]}`.
/// Throws Error(E_INVALID) when an arrow leaves the lifelines or a window is
/// malformed, Error(E_IO) on malformed JSON.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::string& path);
std::string scenario_json(const Scenario& s);

/// `{name, scenarios:[{file, priority, stimuli?, duration?}]}`; files are
/// resolved relative to the package file.
ScenarioPackage load_package(const std::string& path);

/// Throws Error(E_LIFELINE) for a lifeline that is neither "env" nor an
/// instance path of the tree.
void check_lifelines(const Scenario& s, const InstanceTree& tree);

/// Greedy ordered embedding of the arrows into the trace's call / msg_send
/// events. In strict mode no other call or msg_send between two lifelines may
/// occur after the first matched arrow and before the last.
Verdict check_conformance(const Trace& trace, const Scenario& s);

struct RehearsalResult {
    std::string name;
    Priority priority = Priority::Extra;
    Verdict verdict;
    TimelinessReport timeliness;
    std::optional<std::string> error;  // run or check error; the verdict is then a failure
    Trace trace;

    bool ok() const { return !error && verdict.pass && timeliness.ok(); }
};

/// Runs every scenario with its own stimuli, in priority order (stable within
/// a tag). A failing or erroring scenario does not stop the rest.
std::vector<RehearsalResult> rehearse_package(const InstanceTree& tree, const SimConfig& cfg, const ScenarioPackage& pkg);

struct Conflict {
    std::string first;
    std::string second;
    std::vector<Arrow> shared_prefix;
    Arrow next_first;
    Arrow next_second;
};

/// Pairs whose arrows, projected onto their shared lifelines, share a
/// non-empty prefix and then continue with different signatures from the same
/// sender. Warnings only.
std::vector<Conflict> detect_conflicts(const ScenarioPackage& pkg);

/// Rehearsal report: one entry per scenario in run order, with the divergent
/// arrow spelled out, timeliness violations and conflict warnings.
std::string report_json(const ScenarioPackage& pkg, const std::vector<RehearsalResult>& results,
                        const std::vector<Conflict>& conflicts);

/// `from -> to : name` (with `()` for calls).
std::string arrow_text(const Arrow& a);

}  // namespace broom
