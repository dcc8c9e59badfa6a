#pragma once

// Integer and real arithmetic shared by constant folding, the interpreter and
// (textually mirrored) the emitted C. Signed integers wrap modulo 2^64.

#include <cstdint>
#include <optional>

namespace broom::arith {

inline std::int64_t add(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
}

inline std::int64_t sub(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
}

inline std::int64_t mul(std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
}

inline std::int64_t neg(std::int64_t a) { return static_cast<std::int64_t>(0u - static_cast<std::uint64_t>(a)); }

/// Truncating division; nullopt on a zero divisor.
inline std::optional<std::int64_t> div(std::int64_t a, std::int64_t b) {
    if (b == 0) return std::nullopt;
    if (b == -1) return neg(a);
    return a / b;
}

/// nullopt on a zero divisor (either sign).
inline std::optional<double> div(double a, double b) {
    if (b == 0.0) return std::nullopt;
    return a / b;
}

}  // namespace broom::arith
