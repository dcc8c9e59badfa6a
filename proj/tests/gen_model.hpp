#pragma once

// Random well-formed models: a continuous chain fed by a source plus a ring of
// timer-driven state machines that ping each other and probe the chain.

#include <random>
#include <string>
#include <vector>

#include "broom/sim.hpp"

namespace gen {

struct RandomModel {
    std::string text;
    std::vector<broom::Stimulus> stimuli;
    broom::SimConfig cfg;
};

class ModelGen {
public:
    explicit ModelGen(std::uint64_t seed) : rng_(seed) {}

    RandomModel make() {
        RandomModel m;
        std::string& s = m.text;
        s = "model Rnd {\n"
            "  protocol V { method value() : real; }\n"
            "  protocol Beat { message ping(n : int); message start(p : int); }\n"
            "  enum Mode { Slow, Fast }\n"
            "  actor Src { provides o : V; tunable var level : real = " + num(-5, 5) +
            "; method value() : real { return level; } }\n"
            "  actor Lag { provides o : V; requires i : V; method value() : real { return out; }\n"
            "    block pt1(" + num(0.2, 3) + ", " + num(0.05, 2) + ") input i.value(); }\n"
            "  actor Ctl { provides o : V; requires i : V; tunable var sp : real = " + num(-3, 3) +
            ";\n    method value() : real { return out; }\n"
            "    block pi(" + num(0.1, 4) + ", " + num(0.01, 2) + ", -" + num(1, 20) + ", " + num(1, 20) +
            ") input sp - i.value(); }\n"
            "  actor Clip { provides o : V; requires i : V; method value() : real { return out; }\n"
            "    block limiter(-" + num(0.5, 4) + ", " + num(0.5, 4) + ") input i.value() * " + num(-2, 2) + "; }\n"
            "  actor Blink {\n"
            "    provides b : Beat; requires peer : Beat; requires probe : V;\n"
            "    var count : int = 0; var last : real; var mode : Mode = Mode.Slow; timer clk;\n"
            "    deadline " + std::to_string(pick(1, 30)) + ";\n"
            "    method start(p : int) { set clk(p); }\n"
            "    machine {\n"
            "      initial A;\n"
            "      A -> B on clk / count = count + 1, last = probe.value(), send peer.ping(count), set clk(" +
            std::to_string(pick(1, 9)) + ");\n"
            "      B -> A on clk if last > " + num(-2, 2) + " / mode = Mode.Fast, set clk(" + std::to_string(pick(1, 9)) +
            ");\n"
            "      B -> A on clk / mode = Mode.Slow, set clk(" + std::to_string(pick(1, 9)) + ");\n"
            "      A -> A on ping if n > " + std::to_string(pick(0, 4)) + " / count = count - n;\n"
            "      B -> B on ping / last = last * 0.5;\n"
            "    }\n"
            "  }\n";

        static const char* kinds[] = {"Lag", "Ctl", "Clip"};
        const int chain = pick(1, 5);
        const int ring = pick(2, 4);
        std::string root = "  actor Root {\n    part src : Src;\n";
        std::vector<std::string> outs{"src"};
        for (int i = 0; i < chain; ++i) {
            const std::string name = "c" + std::to_string(i);
            root += "    part " + name + " : " + kinds[pick(0, 2)] + ";\n";
            root += "    connect " + name + ".i -- " + outs.back() + ".o;\n";
            outs.push_back(name);
        }
        for (int i = 0; i < ring; ++i) {
            const std::string name = "k" + std::to_string(i);
            root += "    part " + name + " : Blink;\n";
            root += "    connect " + name + ".peer -- k" + std::to_string((i + 1) % ring) + ".b;\n";
            root += "    connect " + name + ".probe -- " + outs[pick(0, static_cast<int>(outs.size()) - 1)] + ".o;\n";
        }
        root += "  }\n  root Root\n}\n";
        s += root;

        m.cfg.dt = std::vector<double>{0.001, 0.01, 0.05}[pick(0, 2)];
        m.cfg.duration = m.cfg.dt * pick(20, 300);
        m.cfg.snapshot_every = pick(1, 4);
        for (int i = 0; i < ring; ++i) {
            broom::Stimulus st;
            st.at_tick = pick(0, 10);
            st.target = "root.k" + std::to_string(i);
            st.port = "b";
            st.name = "start";
            st.args = {static_cast<std::int64_t>(pick(1, 6))};
            m.stimuli.push_back(st);
        }
        for (int i = 0, n = pick(0, 3); i < n; ++i) {
            broom::Stimulus st;
            st.at_tick = pick(0, 20);
            st.target = "root.k" + std::to_string(pick(0, ring - 1));
            st.port = "b";
            st.name = "ping";
            st.args = {static_cast<std::int64_t>(pick(0, 6))};
            m.stimuli.push_back(st);
        }
        return m;
    }

private:
    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    std::string num(double lo, double hi) {
        const double v = std::uniform_real_distribution<double>(lo, hi)(rng_);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        return buf;
    }

    std::mt19937_64 rng_;
};

}  // namespace gen
