// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace priorforge {

__extension__ using uint128_t = unsigned __int128;

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (char c : s) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: the i-th draw of a stream is mix64(key + (i+1)·γ),
/// so any draw is addressable without replaying the stream and sub-streams are
/// split off by hashing a stream id into a fresh key.
class CounterRng {
public:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

    constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
        : key_(key), counter_(counter) {}

    constexpr std::uint64_t key() const { return key_; }
    constexpr std::uint64_t counter() const { return counter_; }

    /// Independent child stream; does not advance this one.
    constexpr CounterRng split(std::uint64_t stream) const {
        return CounterRng(mix64(key_ ^ mix64(stream * kGamma + 0x632be59bd9b4e019ULL)));
    }

    constexpr std::uint64_t at(std::uint64_t index) const { return mix64(key_ + (index + 1) * kGamma); }

    constexpr std::uint64_t next_u64() { return at(counter_++); }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform in [0, n) by 128-bit multiply; n > 0.
    constexpr std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<uint128_t>(next_u64()) * n) >> 64);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace priorforge
