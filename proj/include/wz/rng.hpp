#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace wz {

/// 128 bits of counter-based random output.
struct RandomBlock {
    std::uint32_t w[4];
};

/// Philox-4x32 keyed permutation, 10 rounds (Salmon et al. constants).
/// Stateless: the output is a pure function of (counter, key), so draws can
/// be generated in any order, on any number of threads, with identical bits.
[[nodiscard]] inline RandomBlock philox4x32(std::uint32_t c0, std::uint32_t c1,
                                            std::uint32_t c2, std::uint32_t c3,
                                            std::uint32_t k0, std::uint32_t k1) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
        const std::uint32_t h0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t l0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t h1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t l1 = static_cast<std::uint32_t>(p1);
        c0 = h1 ^ c1 ^ k0;
        c1 = l1;
        c2 = h0 ^ c3 ^ k1;
        c3 = l0;
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return RandomBlock{{c0, c1, c2, c3}};
}

/// Uniform double in (0, 1) from 53 bits of two words; never returns 0 or 1.
[[nodiscard]] inline double uniform_from_words(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t u = (static_cast<std::uint64_t>(hi) << 32) | lo;
    return (static_cast<double>(u >> 11) + 0.5) * 0x1p-53;
}

struct GaussianPair {
    double z0;
    double z1;
};

/// Box-Muller transform of one random block into two independent N(0,1).
[[nodiscard]] inline GaussianPair gaussian_from_block(const RandomBlock& b) {
    const double u = uniform_from_words(b.w[0], b.w[1]);
    const double v = uniform_from_words(b.w[2], b.w[3]);
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 2.0 * std::numbers::pi * v;
    return GaussianPair{r * std::cos(a), r * std::sin(a)};
}

/// Reproducible Gaussian stream. Each draw is keyed by
/// (seed, sample index, step index, component index); components 2*block and
/// 2*block+1 come out of a single keyed call.
struct CounterRng {
    std::uint64_t seed = 0;

    [[nodiscard]] RandomBlock block(std::uint64_t sample, std::uint32_t step,
                                    std::uint32_t component_block = 0) const {
        return philox4x32(static_cast<std::uint32_t>(sample),
                          static_cast<std::uint32_t>(sample >> 32), step, component_block,
                          static_cast<std::uint32_t>(seed),
                          static_cast<std::uint32_t>(seed >> 32));
    }

    [[nodiscard]] GaussianPair normal_pair(std::uint64_t sample, std::uint32_t step,
                                           std::uint32_t component_block = 0) const {
        return gaussian_from_block(block(sample, step, component_block));
    }

    [[nodiscard]] double uniform01(std::uint64_t sample, std::uint32_t step,
                                   std::uint32_t component_block = 0) const {
        const RandomBlock b = block(sample, step, component_block);
        return uniform_from_words(b.w[0], b.w[1]);
    }
};

} // namespace wz
