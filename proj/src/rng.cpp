#include "sws/rng.hpp"

#include <cmath>
#include <numbers>

namespace sws {

double SplitMix64::truncated_normal(double std) {
    for (;;) {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        if (z >= -2.0 && z <= 2.0) return z * std;
    }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(a ^ (b * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
    return g.next();
}

void Fnv1a::update(const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        hash_ ^= p[i];
        hash_ *= 0x100000001b3ULL;
    }
}

}  // namespace sws
