#pragma once

#include <cstdint>
#include <string_view>

namespace blurforge {

// SplitMix64 finalizer: a bijective 64-bit mixing function.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value));
}

// FNV-1a, used to turn identifiers (paths) into stable 64-bit keys.
constexpr std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Counter-based generator: draw n is a pure function of (key, n), so a
/// stream never depends on global state or on which thread consumes it.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

    constexpr std::uint64_t next_u64() { return hash_combine(key_, counter_++); }

    // Uniform in [0, 1) with 53 bits of resolution.
    constexpr double uniform() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] (inclusive).
    constexpr std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1U;
        if (span == 0) return static_cast<std::int64_t>(next_u64());
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    constexpr bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream.
    constexpr CounterRng fork(std::uint64_t tag) const { return CounterRng(hash_combine(key_, ~tag)); }

    constexpr std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace blurforge
