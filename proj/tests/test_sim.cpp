#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "broom/dsl.hpp"
#include "broom/model.hpp"
#include "broom/sim.hpp"
#include "doctest.h"
#include "gen_model.hpp"

using namespace broom;

namespace {

InstanceTree tree_of(std::string_view text) {
    auto r = dsl::parse(text, "m.broom");
    for (const auto& d : r.diagnostics) MESSAGE(format_diagnostic(d));
    REQUIRE(r.ok());
    return instantiate(*r.model);
}

SimConfig config(double dt, double duration) {
    SimConfig c;
    c.dt = dt;
    c.duration = duration;
    return c;
}

Stimulus msg(std::int64_t at, std::string target, std::string port, std::string name, std::vector<Literal> args = {}) {
    Stimulus s;
    s.at_tick = at;
    s.target = std::move(target);
    s.port = std::move(port);
    s.name = std::move(name);
    s.args = std::move(args);
    return s;
}

std::vector<const TraceEvent*> select(const Trace& t, EventKind k, std::string_view src = {}, std::string_view name = {}) {
    std::vector<const TraceEvent*> out;
    for (const auto& e : t.events) {
        if (e.kind != k) continue;
        if (!src.empty() && e.src != src) continue;
        if (!name.empty() && e.name != name) continue;
        out.push_back(&e);
    }
    return out;
}

const char* kLag = R"(model Lag {
  protocol V { method value() : real; }
  actor Src { provides o : V; tunable var level : real = 1.0; method value() : real { return level; } }
  actor Plant { provides o : V; requires i : V; method value() : real { return out; } block pt1(K, T) input i.value(); }
  actor Root { part src : Src; part plant : Plant; connect plant.i -- src.o; }
  root Root
})";

std::string lag_model(double K, double T) {
    std::string s = kLag;
    s.replace(s.find("K, T"), 4, dsl::format_real_literal(K) + ", " + dsl::format_real_literal(T));
    return s;
}

const char* kTimer = R"(model Tm {
  protocol Go { message go(n : int); }
  actor Root {
    provides p : Go;
    timer t;
    deadline 5;
    method go(n : int) { set t(n); }
    machine { initial Idle; Idle -> Done on t; Done -> Idle on t; }
  }
  root Root
})";

}  // namespace

TEST_CASE("pt1 step response against the analytic solution") {
    // y(t) = K*u*(1 - exp(-t/T)); the sample at tick k holds y((k+1)*dt).
    const double K = 1.0, T = 1.0, dt = 0.001;
    auto tree = tree_of(lag_model(K, T));
    auto trace = run(tree, config(dt, 1.0), {});
    auto samples = select(trace, EventKind::Sample, "root.plant", "out");
    REQUIRE(samples.size() == 1000);
    const double y = std::get<double>(samples.back()->payload[0]);
    const double exact = K * (1.0 - std::exp(-1.0 / T));
    CHECK(std::abs(y - exact) / exact < 1e-3);
    // Euler recursion has the closed form 1 - (1 - dt/T)^n.
    for (int k : {0, 9, 499, 999}) {
        const double euler = K * (1.0 - std::pow(1.0 - dt / T, k + 1));
        CHECK(std::get<double>(samples[k]->payload[0]) == doctest::Approx(euler).epsilon(1e-12));
    }
}

TEST_CASE("timer set to 5 ticks fires exactly once at tick 5") {
    auto tree = tree_of(kTimer);
    auto trace = run(tree, config(0.01, 0.2), {msg(0, "root", "p", "go", {std::int64_t{5}})});
    auto fires = select(trace, EventKind::TimerFire);
    REQUIRE(fires.size() == 1);
    CHECK(fires[0]->tick == 5);
    CHECK(fires[0]->name == "t");
    auto tr = select(trace, EventKind::Transition);
    REQUIRE(tr.size() == 1);
    CHECK(tr[0]->tick == 5);
    CHECK(tr[0]->name == "Done");
    CHECK(tr[0]->payload == std::vector<Literal>{std::string("Idle"), std::string("t")});
}

TEST_CASE("set with a non-positive tick count is a runtime error") {
    auto tree = tree_of(kTimer);
    auto trace = run(tree, config(0.01, 0.2), {msg(2, "root", "p", "go", {std::int64_t{0}})});
    REQUIRE(trace.error());
    CHECK(trace.error()->name == "E_RUNTIME");
    CHECK(trace.error()->tick == 2);
    CHECK(&trace.events.back() == trace.error());
}

TEST_CASE("timeliness: reaction within, beyond and without a trigger") {
    auto tree = tree_of(kTimer);
    SUBCASE("3 ticks under deadline 5") {
        auto t = run(tree, config(0.01, 0.2), {msg(1, "root", "p", "go", {std::int64_t{3}})});
        CHECK(check_timeliness(t, tree).ok());
    }
    SUBCASE("7 ticks under deadline 5") {
        auto t = run(tree, config(0.01, 0.2), {msg(1, "root", "p", "go", {std::int64_t{7}})});
        auto rep = check_timeliness(t, tree);
        REQUIRE(rep.violations.size() == 1);
        CHECK(rep.violations[0].instance == "root");
        CHECK(rep.violations[0].trigger == "go");
        CHECK(rep.violations[0].trigger_tick == 1);
        CHECK(rep.violations[0].deadline_ticks == 5);
        CHECK(rep.violations[0].actual_ticks == 7);
        CHECK(rep.violations[0].reacted);
    }
    SUBCASE("never triggered") {
        auto t = run(tree, config(0.01, 0.2), {});
        CHECK(check_timeliness(t, tree).ok());
    }
    SUBCASE("no reaction before the end of the trace") {
        auto t = run(tree, config(0.01, 0.2), {msg(4, "root", "p", "go", {std::int64_t{100}})});
        auto rep = check_timeliness(t, tree);
        REQUIRE(rep.violations.size() == 1);
        CHECK(rep.violations[0].actual_ticks == 16);
        CHECK_FALSE(rep.violations[0].reacted);
    }
}

TEST_CASE("division by zero halts the run and later steps throw") {
    auto tree = tree_of(R"(model Z {
  protocol P { message poke(d : int); }
  actor Root { provides p : P; var x : int = 7; method poke(d : int) { x = x / d; } }
  root Root
})");
    World w(tree, config(0.01, 1.0), {msg(1, "root", "p", "poke", {std::int64_t{2}}), msg(3, "root", "p", "poke", {std::int64_t{0}})});
    w.step();
    w.step();
    CHECK(w.read_signal("root.x") == std::optional<Literal>(std::int64_t{3}));
    w.step();
    auto ev = w.step();
    REQUIRE_FALSE(ev.empty());
    CHECK(ev.back().kind == EventKind::RuntimeError);
    CHECK(ev.back().name == "E_RUNTIME");
    CHECK(w.halted());
    try {
        w.step();
        FAIL("step after a runtime error must throw");
    } catch (const Error& e) {
        CHECK(e.code() == "E_HALTED");
    }
}

TEST_CASE("unbounded message ping-pong is a livelock") {
    auto tree = tree_of(R"(model L {
  protocol B { message ball(); }
  actor P { provides b : B; requires peer : B; method ball() { send peer.ball(); } }
  actor Root { part a : P; part b : P; connect a.peer -- b.b; connect b.peer -- a.b; }
  root Root
})");
    SimConfig cfg = config(0.01, 1.0);
    cfg.drain_cap = 50;
    auto t = run(tree, cfg, {msg(2, "root.a", "b", "ball")});
    REQUIRE(t.error());
    CHECK(t.error()->name == "E_LIVELOCK");
    CHECK(t.error()->tick == 2);
    CHECK(select(t, EventKind::MsgRecv).size() == 50);
}

TEST_CASE("quiescent model: steps carry only samples") {
    auto tree = tree_of(kTimer);
    World w(tree, config(0.01, 1.0));
    auto first = w.step();
    REQUIRE(first.size() == 1);
    CHECK(first[0].kind == EventKind::Sample);
    CHECK(first[0].payload == std::vector<Literal>{std::string("Idle")});
    for (int i = 0; i < 10; ++i) CHECK(w.step().empty());
    CHECK(w.tick() == 11);
    CHECK(w.time() == doctest::Approx(0.11));
}

TEST_CASE("a state-bearing block in a loop reads the previous tick") {
    auto tree = tree_of(R"(model M {
  protocol V { method value() : real; }
  actor Lim { provides o : V; requires i : V; method value() : real { return out; }
    block limiter(-1, 1) input i.value(); }
  actor Lag { provides o : V; requires i : V; method value() : real { return out; }
    block pt1(2, 0.5) input i.value() + 1.0; }
  actor Root { part a : Lim; part b : Lag; connect a.i -- b.o; connect b.i -- a.o; }
  root Root
})");
    const double dt = 0.01;
    auto trace = run(tree, config(dt, 0.5), {});
    auto a = select(trace, EventKind::Sample, "root.a");
    auto b = select(trace, EventKind::Sample, "root.b");
    REQUIRE(a.size() == 50);
    double ya = 0.0, yb = 0.0;
    for (int k = 0; k < 50; ++k) {
        const double prev_a = ya;
        yb = yb + (dt / 0.5) * (2.0 * (prev_a + 1.0) - yb);
        ya = std::clamp(yb, -1.0, 1.0);
        CHECK(std::get<double>(b[k]->payload[0]) == doctest::Approx(yb).epsilon(1e-12));
        CHECK(std::get<double>(a[k]->payload[0]) == doctest::Approx(ya).epsilon(1e-12));
    }
}

TEST_CASE("method stimuli, synchronous calls and return payloads") {
    auto tree = tree_of(R"(model C {
  enum Led { Dark, Lit }
  protocol Q { method read(scale : real) : real; }
  protocol Panel { method press(k : int) : Led; }
  actor Leaf { provides q : Q; var v : real = 2.5; method read(scale : real) : real { return v * scale; } }
  actor User {
    provides panel : Panel;
    requires q : Q;
    var got : real;
    var led : Led;
    method press(k : int) : Led { got = q.read(k); led = Led.Lit; return led; }
  }
  actor Root {
    provides panel : Panel;
    part user : User;
    part leaf : Leaf;
    connect self.panel -- user.panel;
    connect user.q -- leaf.q;
  }
  root Root
})");
    Stimulus s = msg(0, "root", "panel", "press", {std::int64_t{4}});
    s.kind = StimulusKind::Method;
    auto t = run(tree, config(0.01, 0.02), {s});
    REQUIRE(t.events.size() >= 4);
    CHECK(t.events[0].kind == EventKind::Call);
    CHECK(t.events[0].src == "env");
    CHECK(t.events[0].dst == "root.user");
    CHECK(t.events[1].kind == EventKind::Call);
    CHECK(t.events[1].src == "root.user");
    CHECK(t.events[1].dst == "root.leaf");
    CHECK(t.events[1].payload == std::vector<Literal>{4.0});
    CHECK(t.events[2].kind == EventKind::CallReturn);
    CHECK(t.events[2].src == "root.leaf");
    CHECK(t.events[2].payload == std::vector<Literal>{10.0});
    CHECK(t.events[3].kind == EventKind::CallReturn);
    CHECK(t.events[3].payload == std::vector<Literal>{std::string("Led.Lit")});
}

TEST_CASE("World: tunables, signals and machine states") {
    auto tree = tree_of(lag_model(2.0, 0.1));
    World w(tree, config(0.01, 1.0));
    CHECK(w.default_signals() == std::vector<std::string>{"root.src.level", "root.plant.out"});
    w.set_attr("root.src", "level", std::int64_t{3});
    CHECK(w.read_signal("root.src.level") == std::optional<Literal>(3.0));
    w.step();
    const double y = 0.1 * (2.0 * 3.0);
    CHECK(std::get<double>(*w.read_signal("root.plant.out")) == doctest::Approx(y).epsilon(1e-12));
    CHECK_FALSE(w.read_signal("root.plant.nothing"));
    CHECK_THROWS_AS(w.set_attr("root.src", "level", std::string("x")), Error);
    CHECK_THROWS_AS(w.set_attr("root.nobody", "level", 1.0), Error);

    auto t2 = tree_of(kTimer);
    World w2(t2, config(0.01, 1.0));
    CHECK(w2.fsm_states() == std::map<std::string, std::string>{{"root", "Idle"}});
}

TEST_CASE("non-tunable attributes are refused") {
    auto tree = tree_of("model M { actor Root { var x : real; } root Root }");
    World w(tree, config(0.01, 1.0));
    try {
        w.set_attr("root", "x", 1.0);
        FAIL("expected E_TUNABLE");
    } catch (const Error& e) {
        CHECK(e.code() == "E_TUNABLE");
    }
}

TEST_CASE("stimuli that do not resolve") {
    auto tree = tree_of(kTimer);
    auto code_of = [&](Stimulus s) {
        try {
            World w(tree, config(0.01, 1.0), {s});
        } catch (const Error& e) {
            return e.code();
        }
        return std::string();
    };
    CHECK(code_of(msg(0, "root.nope", "p", "go", {std::int64_t{1}})) == "E_STIMULUS");
    CHECK(code_of(msg(0, "root", "q", "go", {std::int64_t{1}})) == "E_STIMULUS");
    CHECK(code_of(msg(0, "root", "p", "stop")) == "E_STIMULUS");
    CHECK(code_of(msg(0, "root", "p", "go", {1.5})) == "E_STIMULUS");
    CHECK(code_of(msg(0, "root", "p", "go")) == "E_STIMULUS");
    Stimulus m = msg(0, "root", "p", "go", {std::int64_t{1}});
    m.kind = StimulusKind::Method;
    CHECK(code_of(m) == "E_STIMULUS");
    CHECK(code_of(msg(0, "root", "p", "go", {std::int64_t{1}})).empty());
}

TEST_CASE("stimulus script parsing") {
    auto s = parse_stimuli(R"({"stimuli":[
      {"at_tick":4,"target":"root","port":"p","name":"go","args":[3]},
      {"at_tick":1,"target":"root","port":"p","name":"go","kind":"message","args":[1]}]})");
    REQUIRE(s.size() == 2);
    CHECK(s[0].at_tick == 1);
    CHECK(s[1].args == std::vector<Literal>{std::int64_t{3}});
    CHECK_THROWS_AS(parse_stimuli("{\"stimuli\":[{\"at_tick\":1}]}"), Error);
    CHECK_THROWS_AS(parse_stimuli("[{\"at_tick\":0,\"target\":\"r\",\"port\":\"p\",\"name\":\"n\",\"kind\":\"x\"}]"), Error);
}

TEST_CASE("check_config") {
    auto tree = tree_of(lag_model(1.0, 0.005));
    auto ds = check_config(tree, config(0.01, 1.0));
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].code == "W_STIFF");
    CHECK(ds[0].span.line == 4);
    CHECK(check_config(tree, config(0.001, 1.0)).empty());
    CHECK(check_config(tree, config(0.0, 1.0))[0].code == "E_INVALID");
    CHECK(check_config(tree, config(0.01, -1.0))[0].code == "E_INVALID");
    CHECK(check_config(tree, config(1e-300, 1e10))[0].code == "E_INVALID");
    CHECK(config(0.01, 0.999).ticks() == 100);
}

TEST_CASE("trace NDJSON round trip") {
    auto tree = tree_of(kTimer);
    auto t = run(tree, config(0.01, 0.2), {msg(0, "root", "p", "go", {std::int64_t{5}})});
    const std::string text = to_ndjson(t);
    CHECK(text.rfind("{\"model\":\"Tm\",\"dt\":0.01,", 0) == 0);
    auto back = parse_ndjson(text);
    CHECK(back.header == t.header);
    CHECK(back.events == t.events);
    CHECK(to_ndjson(back) == text);
    CHECK(format_double(1.0) == "1.0");
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1e300) == "1.0000000000000001e+300");
    CHECK_THROWS_AS(parse_ndjson("{\"model\":1}"), Error);
}

TEST_CASE("random models: determinism, step == run, conservation, call nesting") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        CAPTURE(seed);
        auto m = gen::ModelGen(seed).make();
        auto tree = tree_of(m.text);
        const Trace a = run(tree, m.cfg, m.stimuli);
        const Trace b = run(tree, m.cfg, m.stimuli);
        REQUIRE(to_ndjson(a) == to_ndjson(b));
        CHECK_FALSE(a.error());

        World w(tree, m.cfg, m.stimuli);
        std::vector<TraceEvent> stepped;
        for (std::int64_t k = 0; k < m.cfg.ticks(); ++k) {
            auto ev = w.step();
            stepped.insert(stepped.end(), ev.begin(), ev.end());
        }
        REQUIRE(stepped == a.events);

        // Every msg_send has one msg_recv, FIFO per (src, dst).
        std::map<std::pair<std::string, std::string>, std::vector<const TraceEvent*>> open;
        std::map<std::pair<std::string, std::string>, std::size_t> head;
        for (const auto& e : a.events) {
            if (e.kind == EventKind::MsgSend) open[{e.src, e.dst}].push_back(&e);
            if (e.kind == EventKind::MsgRecv) {
                auto& list = open[{e.src, e.dst}];
                auto& h = head[{e.src, e.dst}];
                REQUIRE(h < list.size());
                CHECK(list[h]->name == e.name);
                CHECK(list[h]->payload == e.payload);
                CHECK(list[h]->tick <= e.tick);
                ++h;
            }
        }
        for (const auto& [key, list] : open) CHECK(head[key] == list.size());

        std::vector<const TraceEvent*> stack;
        for (const auto& e : a.events) {
            if (e.kind == EventKind::Call) stack.push_back(&e);
            if (e.kind == EventKind::CallReturn) {
                REQUIRE_FALSE(stack.empty());
                CHECK(stack.back()->src == e.dst);
                CHECK(stack.back()->dst == e.src);
                CHECK(stack.back()->name == e.name);
                CHECK(stack.back()->tick == e.tick);
                stack.pop_back();
            }
        }
        CHECK(stack.empty());

        std::int64_t last = 0;
        for (const auto& e : a.events) {
            CHECK(e.tick >= last);
            CHECK(e.time == static_cast<double>(e.tick) * m.cfg.dt);
            last = e.tick;
        }
    }
}
