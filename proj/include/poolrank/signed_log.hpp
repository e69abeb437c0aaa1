#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

namespace poolrank {

/// A real number stored as sign and natural log of its magnitude. Zero is
/// sign 0 with magnitude -infinity.
struct SignedLog {
    static constexpr double kZeroMagnitude = -std::numeric_limits<double>::infinity();

    std::int8_t sign = 0;
    double magnitude = kZeroMagnitude;

    static SignedLog zero() { return {}; }

    static SignedLog from_double(double v) {
        if (v == 0.0) return {};
        return {static_cast<std::int8_t>(v > 0 ? 1 : -1), std::log(std::abs(v))};
    }

    bool is_zero() const noexcept { return sign == 0; }

    double to_double() const { return sign == 0 ? 0.0 : sign * std::exp(magnitude); }

    friend SignedLog operator*(SignedLog a, SignedLog b) {
        if (a.sign == 0 || b.sign == 0) return {};
        return {static_cast<std::int8_t>(a.sign * b.sign), a.magnitude + b.magnitude};
    }

    friend bool operator==(const SignedLog&, const SignedLog&) = default;
};

/// log-domain sum of signed terms: shifts by the largest magnitude, sums the
/// signed mantissas, and takes the log back. Zero terms are skipped.
inline SignedLog signed_log_sum_exp(std::span<const SignedLog> terms) {
    double shift = SignedLog::kZeroMagnitude;
    for (const auto& t : terms) {
        if (t.sign != 0 && t.magnitude > shift) shift = t.magnitude;
    }
    if (shift == SignedLog::kZeroMagnitude) return {};
    double acc = 0.0;
    for (const auto& t : terms) {
        if (t.sign != 0) acc += t.sign * std::exp(t.magnitude - shift);
    }
    if (acc == 0.0) return {};
    return {static_cast<std::int8_t>(acc > 0 ? 1 : -1), shift + std::log(std::abs(acc))};
}

}  // namespace poolrank
