#include "broom/scenario.hpp"

#include <algorithm>
#include <array>
#include <filesystem>

#include "broom/dsl.hpp"
#include "json.hpp"

namespace broom {

namespace {

constexpr std::array<std::string_view, 5> kPriorities = {"feasibility", "reuse", "key-property", "least-understood",
                                                         "extra"};
constexpr std::array<std::string_view, 4> kReasons = {"missing", "out-of-order", "window-violation",
                                                      "extra-event-in-strict"};

bool matches(const Arrow& a, const TraceEvent& e) {
    const EventKind k = a.kind == ArrowKind::Call ? EventKind::Call : EventKind::MsgSend;
    return e.kind == k && e.src == a.from && e.dst == a.to && e.name == a.name;
}

bool on_lifelines(const Scenario& s, const TraceEvent& e) {
    if (e.kind != EventKind::Call && e.kind != EventKind::MsgSend) return false;
    auto has = [&](const std::string& l) { return std::find(s.lifelines.begin(), s.lifelines.end(), l) != s.lifelines.end(); };
    return has(e.src) && has(e.dst);
}

Verdict diverge(std::size_t matched, DivergenceReason r, std::size_t pos) {
    return Verdict{false, matched, Divergence{matched, r, pos}};
}

}  // namespace

std::string_view priority_name(Priority p) { return kPriorities[static_cast<std::size_t>(p)]; }

std::optional<Priority> parse_priority(std::string_view s) {
    for (std::size_t i = 0; i < kPriorities.size(); ++i) {
        if (kPriorities[i] == s) return static_cast<Priority>(i);
    }
    return std::nullopt;
}

std::string_view reason_name(DivergenceReason r) { return kReasons[static_cast<std::size_t>(r)]; }

Scenario parse_scenario(std::string_view json_text) {
    Scenario s;
    try {
        const auto j = nlohmann::json::parse(json_text);
        s.name = j.at("name").get<std::string>();
        s.lifelines = j.at("lifelines").get<std::vector<std::string>>();
        s.strict = j.value("strict", false);
        for (const auto& a : j.at("arrows")) {
            Arrow arrow;
            arrow.from = a.at("from").get<std::string>();
            arrow.to = a.at("to").get<std::string>();
            arrow.name = a.at("name").get<std::string>();
            const std::string kind = a.value("kind", "msg");
            if (kind == "call") {
                arrow.kind = ArrowKind::Call;
            } else if (kind != "msg") {
                throw Error(code::invalid, "arrow kind must be 'call' or 'msg', got '" + kind + "'");
            }
            if (a.contains("window") && !a.at("window").is_null()) {
                const auto w = a.at("window").get<std::vector<std::int64_t>>();
                if (w.size() != 2 || w[0] < 0 || w[0] > w[1]) {
                    throw Error(code::invalid, "window of arrow '" + arrow.name + "' must be [min, max] with 0 <= min <= max");
                }
                arrow.window = std::make_pair(w[0], w[1]);
            }
            for (const auto* end : {&arrow.from, &arrow.to}) {
                if (std::find(s.lifelines.begin(), s.lifelines.end(), *end) == s.lifelines.end()) {
                    throw Error(code::invalid, "arrow '" + arrow.name + "' uses '" + *end + "', which is not a lifeline");
                }
            }
            s.arrows.push_back(std::move(arrow));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(code::io, std::string("malformed scenario: ") + e.what());
    }
    return s;
}

Scenario load_scenario(const std::string& path) { return parse_scenario(dsl::read_file(path)); }

std::string scenario_json(const Scenario& s) {
    nlohmann::ordered_json j;
    j["name"] = s.name;
    j["lifelines"] = s.lifelines;
    j["strict"] = s.strict;
    j["arrows"] = nlohmann::ordered_json::array();
    for (const auto& a : s.arrows) {
        nlohmann::ordered_json o;
        o["from"] = a.from;
        o["to"] = a.to;
        o["name"] = a.name;
        o["kind"] = a.kind == ArrowKind::Call ? "call" : "msg";
        if (a.window) o["window"] = {a.window->first, a.window->second};
        j["arrows"].push_back(o);
    }
    return j.dump(2) + "\n";
}

ScenarioPackage load_package(const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(path).parent_path();
    ScenarioPackage pkg;
    try {
        const auto j = nlohmann::json::parse(dsl::read_file(path));
        pkg.name = j.at("name").get<std::string>();
        for (const auto& e : j.at("scenarios")) {
            PackageEntry entry;
            entry.file = e.at("file").get<std::string>();
            const std::string tag = e.value("priority", "extra");
            const auto p = parse_priority(tag);
            if (!p) throw Error(code::invalid, "unknown priority '" + tag + "'");
            entry.priority = *p;
            entry.scenario = load_scenario((dir / entry.file).string());
            if (e.contains("stimuli")) {
                const auto& st = e.at("stimuli");
                entry.stimuli = st.is_string() ? load_stimuli((dir / st.get<std::string>()).string()) : parse_stimuli(st.dump());
            }
            if (e.contains("duration")) entry.duration = e.at("duration").get<double>();
            pkg.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(code::io, "malformed package '" + path + "': " + e.what());
    }
    return pkg;
}

void check_lifelines(const Scenario& s, const InstanceTree& tree) {
    for (const auto& l : s.lifelines) {
        if (l != "env" && tree.find(l) < 0) {
            throw Error(code::lifeline, "lifeline '" + l + "' of scenario '" + s.name + "' is not an instance");
        }
    }
}

Verdict check_conformance(const Trace& trace, const Scenario& s) {
    const auto& ev = trace.events;
    std::size_t pos = 0;
    std::int64_t prev_tick = 0;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < s.arrows.size(); ++i) {
        const Arrow& a = s.arrows[i];
        const bool guarded = s.strict && i > 0;
        std::optional<std::size_t> found;
        for (std::size_t j = pos; j < ev.size(); ++j) {
            if (matches(a, ev[j])) {
                const std::int64_t delta = ev[j].tick - prev_tick;
                if (a.window && delta < a.window->first) {
                    if (guarded) return diverge(matched, DivergenceReason::WindowViolation, j);
                    continue;
                }
                if (a.window && delta > a.window->second) return diverge(matched, DivergenceReason::WindowViolation, j);
                found = j;
                break;
            }
            if (guarded && on_lifelines(s, ev[j])) return diverge(matched, DivergenceReason::ExtraEventInStrict, j);
        }
        if (!found) {
            for (std::size_t j = 0; j < pos; ++j) {
                if (matches(a, ev[j])) return diverge(matched, DivergenceReason::OutOfOrder, j);
            }
            return diverge(matched, DivergenceReason::Missing, ev.size());
        }
        prev_tick = ev[*found].tick;
        pos = *found + 1;
        ++matched;
    }
    return Verdict{true, matched, std::nullopt};
}

std::vector<RehearsalResult> rehearse_package(const InstanceTree& tree, const SimConfig& cfg, const ScenarioPackage& pkg) {
    std::vector<const PackageEntry*> order;
    for (const auto& e : pkg.entries) order.push_back(&e);
    std::stable_sort(order.begin(), order.end(),
                     [](const PackageEntry* a, const PackageEntry* b) { return a->priority < b->priority; });
    std::vector<RehearsalResult> out;
    for (const auto* e : order) {
        RehearsalResult r;
        r.name = e->scenario.name;
        r.priority = e->priority;
        try {
            check_lifelines(e->scenario, tree);
            SimConfig c = cfg;
            if (e->duration) c.duration = *e->duration;
            r.trace = run(tree, c, e->stimuli);
            r.verdict = check_conformance(r.trace, e->scenario);
            r.timeliness = check_timeliness(r.trace, tree);
            if (const auto* err = r.trace.error()) {
                r.error = err->name + ": " + std::get<std::string>(err->payload.at(0));
            }
        } catch (const Error& ex) {
            r.error = ex.what();
            r.verdict = Verdict{false, 0, std::nullopt};
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Conflict> detect_conflicts(const ScenarioPackage& pkg) {
    std::vector<Conflict> out;
    for (std::size_t x = 0; x < pkg.entries.size(); ++x) {
        for (std::size_t y = x + 1; y < pkg.entries.size(); ++y) {
            const Scenario& a = pkg.entries[x].scenario;
            const Scenario& b = pkg.entries[y].scenario;
            std::vector<std::string> shared;
            for (const auto& l : a.lifelines) {
                if (std::find(b.lifelines.begin(), b.lifelines.end(), l) != b.lifelines.end()) shared.push_back(l);
            }
            auto project = [&](const Scenario& s) {
                std::vector<Arrow> p;
                for (const auto& arrow : s.arrows) {
                    const bool in = std::find(shared.begin(), shared.end(), arrow.from) != shared.end() &&
                                    std::find(shared.begin(), shared.end(), arrow.to) != shared.end();
                    if (in) {
                        Arrow bare = arrow;
                        bare.window.reset();
                        p.push_back(bare);
                    }
                }
                return p;
            };
            const auto pa = project(a), pb = project(b);
            std::size_t n = 0;
            while (n < pa.size() && n < pb.size() && pa[n] == pb[n]) ++n;
            if (n == 0 || n == pa.size() || n == pb.size()) continue;
            if (pa[n].from != pb[n].from || pa[n].name == pb[n].name) continue;
            out.push_back(Conflict{a.name, b.name, std::vector<Arrow>(pa.begin(), pa.begin() + n), pa[n], pb[n]});
        }
    }
    return out;
}

std::string arrow_text(const Arrow& a) {
    return a.from + " -> " + a.to + " : " + a.name + (a.kind == ArrowKind::Call ? "()" : "");
}

std::string report_json(const ScenarioPackage& pkg, const std::vector<RehearsalResult>& results,
                        const std::vector<Conflict>& conflicts) {
    using json = nlohmann::ordered_json;
    json j;
    j["package"] = pkg.name;
    bool pass = true;
    j["scenarios"] = json::array();
    for (const auto& r : results) {
        pass = pass && r.ok();
        json s;
        s["name"] = r.name;
        s["priority"] = priority_name(r.priority);
        s["pass"] = r.ok();
        s["conforms"] = r.verdict.pass;
        s["matched"] = r.verdict.matched;
        if (r.verdict.divergence) {
            const auto& d = *r.verdict.divergence;
            json dj;
            dj["arrow"] = d.arrow;
            dj["reason"] = reason_name(d.reason);
            dj["trace_position"] = d.trace_position;
            for (const auto& e : pkg.entries) {
                if (e.scenario.name == r.name && d.arrow < e.scenario.arrows.size()) {
                    dj["arrow_text"] = arrow_text(e.scenario.arrows[d.arrow]);
                    break;
                }
            }
            s["divergence"] = dj;
        }
        s["timeliness"] = json::array();
        for (const auto& v : r.timeliness.violations) {
            s["timeliness"].push_back({{"instance", v.instance},
                                       {"trigger", v.trigger},
                                       {"trigger_tick", v.trigger_tick},
                                       {"deadline_ticks", v.deadline_ticks},
                                       {"actual_ticks", v.actual_ticks},
                                       {"reacted", v.reacted}});
        }
        if (r.error) s["error"] = *r.error;
        j["scenarios"].push_back(s);
    }
    j["pass"] = pass;
    j["conflicts"] = json::array();
    for (const auto& c : conflicts) {
        j["conflicts"].push_back({{"first", c.first},
                                  {"second", c.second},
                                  {"shared_prefix", c.shared_prefix.size()},
                                  {"next_first", arrow_text(c.next_first)},
                                  {"next_second", arrow_text(c.next_second)}});
    }
    return j.dump(2) + "\n";
}

}  // namespace broom
