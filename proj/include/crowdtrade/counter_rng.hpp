#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace crowdtrade {

/// SplitMix64 finalizer: a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Hash of a seed and an ordered list of counters.
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                     std::uint64_t c = 0) noexcept {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ a);
    h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
    return h;
}

/// Maps 64 random bits onto (0, 1), never returning exactly 0 or 1.
constexpr double to_open_unit(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform draw on [-1, 1) keyed by (seed, a, b, c).
inline double counter_symmetric_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                        std::uint64_t c) noexcept {
    return 2.0 * to_open_unit(counter_hash(seed, a, b, c)) - 1.0;
}

/**
 * Counter-based stream: the i-th draw of stream (seed, stream_id) is a pure
 * function of (seed, stream_id, i), so streams can be generated in any order
 * on any thread and still reproduce bit-for-bit.
 */
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
        : key_(counter_hash(seed, stream_id, 0x5eed)) {}

    std::uint64_t next_bits() noexcept { return mix64(key_ ^ mix64(counter_++)); }

    double uniform() noexcept { return to_open_unit(next_bits()); }

    /// Standard normal via Box-Muller; the sine branch is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace crowdtrade
