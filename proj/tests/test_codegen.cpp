#include <doctest.h>

#include <chrono>
#include <fstream>
#include <set>

#include "broom/codegen.hpp"
#include "broom/dsl.hpp"
#include "broom/model.hpp"
#include "broom/sim.hpp"
#include "c_build.hpp"
#include "gen_model.hpp"

using namespace broom;

namespace {

InstanceTree tree_of(std::string_view text) {
    auto r = dsl::parse(text);
    REQUIRE_MESSAGE(r.ok(), (r.diagnostics.empty() ? "" : format_diagnostic(r.diagnostics[0])));
    return instantiate(*r.model);
}

SimConfig config(double dt, double duration, std::int64_t cap = 10000) {
    SimConfig c;
    c.dt = dt;
    c.duration = duration;
    c.drain_cap = cap;
    return c;
}

Stimulus stim(std::int64_t at, std::string target, std::string port, std::string name, std::vector<Literal> args,
              StimulusKind kind = StimulusKind::Message) {
    Stimulus s;
    s.at_tick = at;
    s.target = std::move(target);
    s.port = std::move(port);
    s.name = std::move(name);
    s.args = std::move(args);
    s.kind = kind;
    return s;
}

struct Both {
    std::string interpreted;
    cbuild::Output compiled;
    std::string compiler;
};

// The interpreter's trace and the compiled program's stdout for one run.
Both both(const std::string& tag, const InstanceTree& tree, const SimConfig& cfg, const std::vector<Stimulus>& st) {
    Both b;
    b.interpreted = to_ndjson(run(tree, cfg, st));
    const auto fp = codegen::flatten(tree, cfg);
    auto files = codegen::emit(fp, {});
    files["driver.c"] = codegen::emit_driver(fp, st);
    const auto dir = cbuild::scratch(tag);
    const auto built = cbuild::build(dir, files);
    b.compiler = built.out;
    if (built.status == 0) b.compiled = cbuild::run(dir);
    return b;
}

// First differing line, for readable failures.
std::string first_diff(const std::string& a, const std::string& b) {
    std::size_t line = 1, i = 0;
    while (i < a.size() && i < b.size() && a[i] == b[i]) {
        if (a[i] == '\n') ++line;
        ++i;
    }
    auto grab = [&](const std::string& s) {
        const std::size_t start = s.rfind('\n', i == 0 ? 0 : i - 1);
        const std::size_t from = start == std::string::npos ? 0 : start + 1;
        return s.substr(from, s.find('\n', from) - from);
    };
    return "line " + std::to_string(line) + "\n  interp: " + grab(a) + "\n  C:      " + grab(b);
}

const char* kSink = R"(model Sink {
  enum Mode { Off, On, Auto }
  protocol Cmd {
    method get() : real;
    method flag(k : int) : bool;
    message poke(m : Mode, x : real, b : bool);
    message big(k : int);
  }
  protocol V { method value() : real; }
  data Inner { var n : int = 3; method bump(d : int) : int { n = n + d; return n; } }
  data Outer { var inner : Inner; var w : real = 0.25; method total() : real { return w + inner.bump(1); } }
  actor Worker {
    provides cmd : Cmd;
    var o : Outer;
    var acc : int = 9223372036854775000;
    var mode : Mode = Mode.Off;
    var seen : bool;
    var div : int = 2;
    var x0 : real = -0.0;
    timer t;
    deadline 3;
    method get() : real { acc = acc + 1000; return o.total() / 2.0 + x0; }
    method flag(k : int) : bool { return k / div > 1 or -k == k; }
    method big(k : int) { div = div - k; acc = acc * k; }
    machine {
      initial Idle;
      Idle -> Busy on poke if m == Mode.On / seen = b, x0 = x, set t(3);
      Idle -> Idle on poke / mode = m;
      Busy -> Idle on t / o.w = o.w * -1.5;
    }
  }
  actor Gauge { requires c : Cmd; provides o : V; method value() : real { return out; } block pt1(2.0, 0.5) input c.get(); }
  actor Root {
    provides cmd : Cmd;
    part w : Worker;
    part g : Gauge;
    connect self.cmd -- w.cmd;
    connect g.c -- w.cmd;
  }
  root Root
})";

std::vector<Stimulus> sink_script() {
    return {
        stim(1, "root", "cmd", "poke", {std::string("Mode.On"), 1e-300, true}),
        stim(2, "root", "cmd", "poke", {std::string("Auto"), std::int64_t{7}, false}),
        stim(3, "root", "cmd", "flag", {std::int64_t{5}}, StimulusKind::Method),
        stim(4, "root", "cmd", "get", {}, StimulusKind::Method),
        stim(9, "root", "cmd", "poke", {std::string("Mode.On"), -2.5, false}),
        stim(11, "root", "cmd", "big", {std::int64_t{2}}),
        stim(13, "root", "cmd", "flag", {std::int64_t{-3}}, StimulusKind::Method),
    };
}

}  // namespace

TEST_CASE("mangling keeps distinct paths distinct") {
    CHECK(codegen::mangle("root.plant") == "root_plant");
    CHECK(codegen::mangle("root.a_b") == "root_a_1b");
    CHECK(codegen::mangle("a_b.c") != codegen::mangle("a.b_c"));
    CHECK(codegen::mangle("a_1") != codegen::mangle("a.1"));
    std::set<std::string> seen;
    const char* paths[] = {"r.a.b", "r.a_b", "r_a.b", "r_a_b", "r.a__b", "r.a_.b", "r._a.b"};
    for (const char* p : paths) CHECK(seen.insert(codegen::mangle(p)).second);
}

TEST_CASE("emitted C matches the interpreter on a feature-dense model") {
    const auto tree = tree_of(kSink);
    const auto cfg = config(0.01, 0.3);
    const auto b = both("sink", tree, cfg, sink_script());
    REQUIRE_MESSAGE(b.compiler.empty(), b.compiler);
    CHECK(b.compiled.status == 3);
    CHECK(b.interpreted.find("\"runtime_error\"") != std::string::npos);
    CHECK(b.interpreted.find("division by zero") != std::string::npos);
    CHECK_MESSAGE(b.interpreted == b.compiled.out, first_diff(b.interpreted, b.compiled.out));
}

TEST_CASE("emitted C matches the interpreter on runtime faults") {
    const char* pingpong = R"(model P {
  protocol B { message ping(n : int); }
  actor Pl { provides b : B; requires peer : B; timer t; method ping(n : int) { send peer.ping(n + 1); } }
  actor Root { part a : Pl; part b : Pl; connect a.peer -- b.b; connect b.peer -- a.b; }
  root Root
})";
    SUBCASE("livelock") {
        const auto tree = tree_of(pingpong);
        const auto b = both("livelock", tree, config(0.1, 1.0, 40), {stim(2, "root.a", "b", "ping", {std::int64_t{0}})});
        REQUIRE_MESSAGE(b.compiler.empty(), b.compiler);
        CHECK(b.interpreted.find("E_LIVELOCK") != std::string::npos);
        CHECK(b.compiled.status == 3);
        CHECK_MESSAGE(b.interpreted == b.compiled.out, first_diff(b.interpreted, b.compiled.out));
    }
    SUBCASE("queue overflow") {
        const char* burst = R"(model Q {
  protocol B { message go(); message hit(k : int); }
  actor Src { provides b : B; requires out1 : B; var k : int;
    method go() { send out1.hit(1); send out1.hit(2); send out1.hit(3); send out1.hit(4); } method hit(k : int) { } }
  actor Dst { provides b : B; method go() { } method hit(k : int) { } }
  actor Root { provides b : B; part s : Src; part d : Dst; connect self.b -- s.b; connect s.out1 -- d.b; }
  root Root
})";
        const auto tree = tree_of(burst);
        const auto b = both("overflow", tree, config(0.1, 1.0, 3), {stim(1, "root", "b", "go", {})});
        REQUIRE_MESSAGE(b.compiler.empty(), b.compiler);
        CHECK(b.interpreted.find("overflowed") != std::string::npos);
        CHECK_MESSAGE(b.interpreted == b.compiled.out, first_diff(b.interpreted, b.compiled.out));
    }
    SUBCASE("timer set below one tick") {
        const char* bad = R"(model T {
  protocol B { message go(n : int); }
  actor Root { provides b : B; timer my_t; method go(n : int) { set my_t(n); } }
  root Root
})";
        const auto tree = tree_of(bad);
        const auto b = both("timer", tree, config(0.1, 1.0), {stim(0, "root", "b", "go", {std::int64_t{4}}),
                                                             stim(5, "root", "b", "go", {std::int64_t{-2}})});
        REQUIRE_MESSAGE(b.compiler.empty(), b.compiler);
        CHECK(b.interpreted.find("timer 'my_t' set to -2 ticks") != std::string::npos);
        CHECK_MESSAGE(b.interpreted == b.compiled.out, first_diff(b.interpreted, b.compiled.out));
    }
}

TEST_CASE("emitted C matches the interpreter on random models") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        CAPTURE(seed);
        auto m = gen::ModelGen(seed * 7919).make();
        const auto tree = tree_of(m.text);
        const auto b = both("rnd", tree, m.cfg, m.stimuli);
        REQUIRE_MESSAGE(b.compiler.empty(), b.compiler);
        CHECK(b.compiled.status == 0);
        CHECK_MESSAGE(b.interpreted == b.compiled.out, first_diff(b.interpreted, b.compiled.out));
    }
}

TEST_CASE("emission is deterministic and free of dynamic allocation") {
    const auto tree = tree_of(kSink);
    const auto fp = codegen::flatten(tree, config(0.01, 1.0));
    const auto a = codegen::emit(fp, {});
    const auto b = codegen::emit(codegen::flatten(tree, config(0.01, 1.0)), {});
    CHECK(a == b);
    CHECK(a.count("model.h") == 1);
    CHECK(a.count("model.c") == 1);
    CHECK(a.count("trace_shim.c") == 1);
    CHECK(a.count("SCHEDULE.txt") == 1);
    for (const auto& [name, text] : a) {
        CAPTURE(name);
        CHECK(text.find("malloc") == std::string::npos);
        CHECK(text.find("//") == std::string::npos);
    }
    CHECK(a.at("SCHEDULE.txt").find("block root.g pt1(2.0, 0.5)") != std::string::npos);
    CHECK(a.at("SCHEDULE.txt").find("drain root.w") != std::string::npos);
}

TEST_CASE("two instances of a class get separate state") {
    const auto tree = tree_of(R"(model Two {
  protocol V { method value() : real; }
  actor One { provides o : V; tunable var level : real = 2.0; method value() : real { return level; } }
  actor Lag { provides o : V; requires i : V; method value() : real { return out; } block pt1(1.0, 0.1) input i.value(); }
  actor Root { part s : One; part x : Lag; part y : Lag; connect x.i -- s.o; connect y.i -- x.o; }
  root Root
})");
    const auto fp = codegen::flatten(tree, config(0.01, 1.0));
    std::set<std::string> names;
    for (const auto& f : fp.state) names.insert(f.name);
    CHECK(names.count("root_x.y") == 1);
    CHECK(names.count("root_y.y") == 1);
    CHECK(names.count("root_s.a_level") == 1);
    const auto files = codegen::emit(fp, {});
    CHECK(files.at("model.c").find("static struct cls_Lag root_x;") != std::string::npos);
    CHECK(files.at("model.c").find("static struct cls_Lag root_y;") != std::string::npos);
}

TEST_CASE("an empty root and a trace-free build compile") {
    const auto tree = tree_of("model E { actor Root { } root Root }");
    const auto fp = codegen::flatten(tree, config(0.5, 2.0));
    auto files = codegen::emit(fp, codegen::CodegenConfig{false});
    CHECK(files.count("trace_shim.c") == 0);
    CHECK(files.at("model.c").find("model_trace") == std::string::npos);
    files["driver.c"] =
        "#include \"model.h\"\nint main(void)\n{\n    model_init();\n    while (model_tick_count() < MODEL_TICKS) model_tick();\n"
        "    return model_tick_count() == 4 ? 0 : 1;\n}\n";
    const auto dir = cbuild::scratch("empty");
    const auto built = cbuild::build(dir, files);
    REQUIRE_MESSAGE(built.status == 0, built.out);
    CHECK(cbuild::run(dir).status == 0);
}

TEST_CASE("driver rejects stimuli that do not resolve") {
    const auto tree = tree_of("model E { actor Root { } root Root }");
    const auto fp = codegen::flatten(tree, config(0.5, 2.0));
    CHECK_THROWS_AS(codegen::emit_driver(fp, {stim(0, "root", "nope", "x", {})}), Error);
}

TEST_CASE("oversized queues are rejected") {
    const auto tree = tree_of("model E { actor Root { } root Root }");
    try {
        codegen::flatten(tree, config(0.5, 2.0, 100000000));
        FAIL("expected E_UNSUPPORTED");
    } catch (const Error& e) {
        CHECK(e.code() == "E_UNSUPPORTED");
    }
}
