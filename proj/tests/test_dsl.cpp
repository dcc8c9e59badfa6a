#include <cmath>
#include <cstring>
#include <random>

#include "broom/dsl.hpp"
#include "doctest.h"
#include "gen_ast.hpp"

using namespace broom;

namespace {

ModelUnit must_parse(std::string_view text) {
    auto r = dsl::parse(text, "t.broom");
    if (!r.ok()) {
        for (const auto& d : r.diagnostics) MESSAGE(format_diagnostic(d));
    }
    REQUIRE(r.ok());
    return *r.model;
}

const char* kRich = R"(// comment line
model Rich {
  enum Mode { Off, On }
  protocol Ctl {
    method get() : real;
    method put(v : real, k : int);
    message poke(m : Mode);
  }
  data Reading {
    var value : real = 1.5e3;
    var ok : bool;
    method scaled(f : real) : real { return value * f; }
  }
  actor Base {
    provides ctl : Ctl;
    tunable var gain : real = -2.0;
    var r : Reading;
    timer tick;
    method get() : real { r.value = r.value + 1; return gain * r.scaled(2.0); }
    machine {
      initial A;
      A -> B on poke if m == Mode.On and not (gain < 0.0) / set tick(5), r.ok = true;
      B -> A on tick;
    }
    deadline 4;
  }
  actor Lag : Base {
    requires up : Ctl;
    block pt1(1.0, -0.5) input up.get() - out * 2;
  }
  actor Top {
    part b : Base;
    part l : Lag;
    connect l.up -- b.ctl;
  }
  root Top
})";

}  // namespace

TEST_CASE("minimal unit") {
    auto m = must_parse("model M { actor Root { } root Root }");
    CHECK(m.name == "M");
    CHECK(m.actor_classes.size() == 1);
    CHECK(m.root == "Root");
}

TEST_CASE("malformed input reports E_SYNTAX with location") {
    auto r = dsl::parse("model M { actor {", "bad.broom");
    REQUIRE_FALSE(r.ok());
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(r.diagnostics[0].code == "E_SYNTAX");
    CHECK(r.diagnostics[0].span.line == 1);
    CHECK(r.diagnostics[0].span.column == 17);
    CHECK(r.diagnostics[0].message.find("expected") != std::string::npos);
}

TEST_CASE("spans are 1-based and point at the node") {
    auto m = must_parse("model M {\n  actor Root {\n    var x : int;\n  }\n  root Root\n}\n");
    const auto& a = m.actor_classes[0];
    CHECK(a.span.line == 2);
    CHECK(a.span.column == 3);
    CHECK(a.attributes[0].span.line == 3);
    CHECK(a.attributes[0].span.column == 5);
    CHECK(m.root_span.line == 5);
}

TEST_CASE("CRLF and BOM accepted") {
    auto m = must_parse("\xEF\xBB\xBFmodel M {\r\n  actor Root { }\r\n  root Root\r\n}\r\n");
    CHECK(m.actor_classes.size() == 1);
}

TEST_CASE("rich model round-trips and rendering is a fixed point") {
    auto m = must_parse(kRich);
    const std::string text = dsl::render(m);
    auto again = must_parse(text);
    CHECK(again == m);
    CHECK(dsl::render(again) == text);
    CHECK(text.find('\r') == std::string::npos);
}

TEST_CASE("states are inferred when not declared") {
    auto m = must_parse("model M { actor R { machine { initial A; A -> B on x; B -> C on y; } } root R }");
    CHECK(m.actor_classes[0].machine->states == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("operator precedence and associativity") {
    auto m = must_parse("model M { actor R { var x : real = 1 - 2 - 3 * 4 / 5; var b : bool = not 1 < 2 or true and false; } root R }");
    const auto& x = *m.actor_classes[0].attributes[0].init;
    CHECK(dsl::render_expr(x) == "1 - 2 - 3 * 4 / 5");
    REQUIRE(x.kind == ExprKind::Binary);
    CHECK(x.binary == BinaryOp::Sub);
    CHECK(x.args[0].binary == BinaryOp::Sub);
    const auto& b = *m.actor_classes[0].attributes[1].init;
    CHECK(b.binary == BinaryOp::Or);
    CHECK(b.args[0].kind == ExprKind::Unary);

    auto n = must_parse("model M { actor R { var x : real = 1 - (2 - 3); var y : real = -(-1); } root R }");
    CHECK(dsl::render_expr(*n.actor_classes[0].attributes[0].init) == "1 - (2 - 3)");
    CHECK(dsl::render_expr(*n.actor_classes[0].attributes[1].init) == "-(-1)");
}

TEST_CASE("real literal formatting reads back exactly") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (int k = 0; k < 2000; ++k) {
        std::uint64_t u = bits(rng);
        double v;
        std::memcpy(&v, &u, sizeof v);
        if (!std::isfinite(v) || v < 0) continue;
        const std::string s = dsl::format_real_literal(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
        CHECK(s.find_first_of(".e") != std::string::npos);
    }
    CHECK(dsl::format_real_literal(1.0) == "1.0");
    CHECK(dsl::format_real_literal(0.1) == "0.1");
}

TEST_CASE("out-of-range literals are syntax errors") {
    CHECK_FALSE(dsl::parse("model M { actor R { var x : int = 9223372036854775808; } root R }").ok());
    CHECK_FALSE(dsl::parse("model M { actor R { var x : real = 1e999; } root R }").ok());
    CHECK(dsl::parse("model M { actor R { var x : int = 9223372036854775807; } root R }").ok());
}

TEST_CASE("keywords are reserved") {
    auto r = dsl::parse("model M { actor model { } root model }");
    REQUIRE_FALSE(r.ok());
    CHECK(r.diagnostics[0].code == "E_SYNTAX");
}

TEST_CASE("active members in a data class are rejected") {
    auto r = dsl::parse("model M { data D { var x : real; timer t; } actor R { } root R }");
    REQUIRE_FALSE(r.ok());
    CHECK(r.diagnostics[0].code == "E_INVALID");
    CHECK(r.diagnostics[0].span.column == 34);
}

TEST_CASE("arbitrary bytes never crash the parser") {
    std::mt19937_64 rng(99);
    const std::string base = kRich;
    for (int k = 0; k < 3000; ++k) {
        std::string s;
        if (k % 3 == 0) {
            const int n = std::uniform_int_distribution<int>(0, 200)(rng);
            for (int i = 0; i < n; ++i) s += static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng));
        } else {
            s = base;
            const int edits = std::uniform_int_distribution<int>(1, 8)(rng);
            for (int e = 0; e < edits; ++e) {
                const std::size_t at = std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng);
                switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
                    case 0: s.erase(at, 1); break;
                    case 1: s.insert(at, 1, "{}();:.-=<>/\"x1 "[std::uniform_int_distribution<int>(0, 15)(rng)]); break;
                    default: s[at] = static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng));
                }
            }
        }
        auto r = dsl::parse(s);
        CHECK((r.ok() || !r.diagnostics.empty()));
    }
    std::string deep = "model M { actor R { var x : real = ";
    for (int i = 0; i < 100000; ++i) deep += "(";
    auto r = dsl::parse(deep);
    CHECK_FALSE(r.ok());
}

TEST_CASE("generated models round-trip (500 cases)") {
    int failures = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed) {
        gen::AstGen g(seed);
        const ModelUnit m = g.unit();
        const std::string text = dsl::render(m);
        auto r = dsl::parse(text, "gen.broom");
        if (!r.ok() || !(*r.model == m)) {
            ++failures;
            if (failures <= 3) {
                MESSAGE("seed " << seed << "\n" << text);
                for (const auto& d : r.diagnostics) MESSAGE(format_diagnostic(d));
            }
            continue;
        }
        CHECK(dsl::render(*r.model) == text);
    }
    CHECK(failures == 0);
}
