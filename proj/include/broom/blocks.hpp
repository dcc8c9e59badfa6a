#pragma once

// Predefined continuous blocks. Every step is a pure function; the simulator
// and the emitted C perform the same operations in the same order.

namespace broom::blocks {

/// First-order lag T*y' + y = K*u.
struct Pt1Params {
    double K = 1.0;
    double T = 1.0;  // seconds, > 0
};

struct Pt1State {
    double y = 0.0;
};

/// One explicit Euler step: y + (dt/T)*(K*u - y).
Pt1State pt1_step(Pt1State s, const Pt1Params& p, double u, double dt);

struct PiParams {
    double Kp = 0.0;
    double Ki = 0.0;
    double lo = -1.0;
    double hi = 1.0;
};

struct PiState {
    double i = 0.0;  // integral of the error, error*seconds
};

struct PiResult {
    PiState state;
    double out = 0.0;
};

/// u_raw = Kp*e + Ki*i uses the accumulator from before this step. The
/// integral advances by e*dt unless u_raw is already saturated and e pushes it
/// further out (conditional integration). The output is clamped to [lo, hi].
PiResult pi_step(PiState s, const PiParams& p, double e, double dt);

double limiter(double u, double lo, double hi);

}  // namespace broom::blocks
