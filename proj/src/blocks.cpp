#include "broom/blocks.hpp"

namespace broom::blocks {

Pt1State pt1_step(Pt1State s, const Pt1Params& p, double u, double dt) {
    const double k = dt / p.T;
    const double drive = p.K * u;
    const double diff = drive - s.y;
    const double inc = k * diff;
    s.y = s.y + inc;
    return s;
}

PiResult pi_step(PiState s, const PiParams& p, double e, double dt) {
    const double prop = p.Kp * e;
    const double integ = p.Ki * s.i;
    const double raw = prop + integ;
    const bool windup = (raw > p.hi && e > 0.0) || (raw < p.lo && e < 0.0);
    if (!windup) {
        const double de = e * dt;
        s.i = s.i + de;
    }
    return PiResult{s, limiter(raw, p.lo, p.hi)};
}

double limiter(double u, double lo, double hi) {
    if (u < lo) return lo;
    if (u > hi) return hi;
    return u;
}

}  // namespace broom::blocks
