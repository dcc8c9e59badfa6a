#include <cmath>
#include <random>

#include "broom/blocks.hpp"
#include "doctest.h"

using namespace broom::blocks;

TEST_CASE("pt1 single step") {
    auto s = pt1_step({0.0}, {1.0, 1.0}, 1.0, 0.1);
    CHECK(s.y == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("pt1 fixed point") {
    for (double u : {-3.5, 0.0, 2.0, 17.25}) {
        const Pt1Params p{2.0, 0.7};
        auto s = pt1_step({p.K * u}, p, u, 0.01);
        CHECK(s.y == p.K * u);
    }
}

TEST_CASE("pt1 converges to the closed-form lag") {
    Pt1State s;
    for (int k = 0; k < 1000; ++k) s = pt1_step(s, {1.0, 1.0}, 1.0, 0.001);
    const double exact = 1.0 - std::exp(-1.0);
    CHECK(std::abs(s.y - exact) / exact < 1e-3);
}

TEST_CASE("pt1 step is pure") {
    const Pt1State in{0.25};
    auto a = pt1_step(in, {1.5, 0.3}, 0.8, 0.01);
    auto b = pt1_step(in, {1.5, 0.3}, 0.8, 0.01);
    CHECK(in.y == 0.25);
    CHECK(a.y == b.y);
}

TEST_CASE("pi pure integral term") {
    auto r = pi_step({2.0}, {123.0, 0.5, -10.0, 10.0}, 0.0, 0.01);
    CHECK(r.out == 1.0);
    CHECK(r.state.i == 2.0);
}

TEST_CASE("pi proportional only") {
    auto r = pi_step({0.0}, {2.0, 0.0, -10.0, 10.0}, 1.5, 0.01);
    CHECK(r.out == 3.0);
}

TEST_CASE("pi integral freezes under saturation") {
    const PiParams p{1.0, 1.0, -1.0, 1.0};
    PiState s;
    double frozen = 0.0;
    for (int k = 0; k < 50; ++k) {
        auto r = pi_step(s, p, 100.0, 0.01);
        CHECK(r.out == 1.0);
        if (k == 0) frozen = r.state.i;
        CHECK(r.state.i == frozen);
        s = r.state;
    }
}

TEST_CASE("pi integrates when unsaturated") {
    auto r = pi_step({0.0}, {0.0, 1.0, -10.0, 10.0}, 2.0, 0.5);
    CHECK(r.state.i == 1.0);
    CHECK(r.out == 0.0);  // pre-update integral
}

TEST_CASE("pi saturated but error pulls back inside still integrates") {
    auto r = pi_step({100.0}, {0.0, 1.0, -1.0, 1.0}, -1.0, 0.1);
    CHECK(r.out == 1.0);
    CHECK(r.state.i == doctest::Approx(99.9));
}

TEST_CASE("pi output always within limits") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-100.0, 100.0);
    for (int k = 0; k < 5000; ++k) {
        double lo = d(rng), hi = d(rng);
        if (lo > hi) std::swap(lo, hi);
        if (lo == hi) hi = lo + 1.0;
        const PiParams p{d(rng), d(rng), lo, hi};
        auto r = pi_step({d(rng)}, p, d(rng), 0.01);
        CHECK(r.out >= lo);
        CHECK(r.out <= hi);
    }
}

TEST_CASE("limiter") {
    CHECK(limiter(5, 0, 10) == 5);
    CHECK(limiter(-3, 0, 10) == 0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-1e6, 1e6);
    for (int k = 0; k < 1000; ++k) {
        double lo = d(rng), hi = d(rng);
        if (lo > hi) std::swap(lo, hi);
        if (lo == hi) continue;
        CHECK(limiter(hi + 1.0, lo, hi) == hi);
        const double x = d(rng);
        CHECK(limiter(limiter(x, lo, hi), lo, hi) == limiter(x, lo, hi));
    }
}

TEST_CASE("two chained lags follow the second-order step response") {
    const double T1 = 2.0, T2 = 0.5, K1 = 1.5, K2 = 0.8;
    const double dt = std::min(T1, T2) / 100.0;
    Pt1State a, b;
    double worst = 0.0;
    const int n = static_cast<int>(std::llround(5.0 * T1 / dt));
    for (int k = 1; k <= n; ++k) {
        a = pt1_step(a, {K1, T1}, 1.0, dt);
        b = pt1_step(b, {K2, T2}, a.y, dt);
        const double t = k * dt;
        const double exact = K1 * K2 * (1.0 - (T1 * std::exp(-t / T1) - T2 * std::exp(-t / T2)) / (T1 - T2));
        worst = std::max(worst, std::abs(b.y - exact) / (K1 * K2));
    }
    CHECK(worst < 0.005);
}
