#pragma once

#include <cstdint>

namespace sws {

/// SplitMix64: the only generator used anywhere in the library, so datasets,
/// initializations and shuffles are reproducible across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Top 53 bits over 2^53, in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Unbiased enough for our bounds (< 2^32); multiply-shift reduction.
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    // Normal draw truncated to [-2 std, 2 std] by rejection (Box-Muller).
    double truncated_normal(double std);

private:
    std::uint64_t state_;
};

// Mixes two words into a seed; used to derive per-epoch / per-tensor streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// 64-bit FNV-1a.
class Fnv1a {
public:
    void update(const void* bytes, std::size_t n);
    std::uint64_t digest() const { return hash_; }

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace sws
