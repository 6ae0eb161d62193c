#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace bandlab {

// Philox-4x32-10 counter block cipher (Salmon et al.).  Any (key, counter)
// address yields an independent 128-bit block, so parallel samples can draw
// from disjoint counter planes without coordination.
namespace philox {

constexpr std::uint32_t MULT_A = 0xD2511F53u;
constexpr std::uint32_t MULT_B = 0xCD9E8D57u;
constexpr std::uint32_t WEYL_A = 0x9E3779B9u;
constexpr std::uint32_t WEYL_B = 0xBB67AE85u;

inline std::array<std::uint32_t, 4> block(std::uint64_t key, std::uint64_t ctr_hi, std::uint64_t ctr_lo) {
    std::uint32_t c0 = std::uint32_t(ctr_lo);
    std::uint32_t c1 = std::uint32_t(ctr_lo >> 32);
    std::uint32_t c2 = std::uint32_t(ctr_hi);
    std::uint32_t c3 = std::uint32_t(ctr_hi >> 32);
    std::uint32_t k0 = std::uint32_t(key);
    std::uint32_t k1 = std::uint32_t(key >> 32);
    for (int round = 0; round < 10; ++round) {
        std::uint64_t p0 = std::uint64_t(MULT_A) * c0;
        std::uint64_t p1 = std::uint64_t(MULT_B) * c2;
        std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        std::uint32_t n0 = hi1 ^ c1 ^ k0;
        std::uint32_t n1 = lo1;
        std::uint32_t n2 = hi0 ^ c3 ^ k1;
        std::uint32_t n3 = lo0;
        c0 = n0; c1 = n1; c2 = n2; c3 = n3;
        k0 += WEYL_A;
        k1 += WEYL_B;
    }
    return {c0, c1, c2, c3};
}

} // namespace philox

// uniform double in (0, 1] from 53 random bits (never 0, safe under log)
inline double uniform_from_bits(std::uint64_t bits) {
    return (double(bits >> 11) + 1.0) * 0x1p-53;
}

// two standard normals from one counter address via Box-Muller
inline void gaussian_pair(std::uint64_t key, std::uint64_t ctr_hi, std::uint64_t ctr_lo,
                          double& g0, double& g1) {
    auto b = philox::block(key, ctr_hi, ctr_lo);
    std::uint64_t u = (std::uint64_t(b[1]) << 32) | b[0];
    std::uint64_t v = (std::uint64_t(b[3]) << 32) | b[2];
    double radius = std::sqrt(-2.0 * std::log(uniform_from_bits(u)));
    constexpr double two_pi = 6.283185307179586476925286766559;
    double angle = two_pi * uniform_from_bits(v);
    g0 = radius * std::cos(angle);
    g1 = radius * std::sin(angle);
}

// uniform integer in [0, n) from a counter address; rejection-free modulo is
// fine here (n is tiny against 2^64) but keep the bias below 2^-32 explicitly
inline std::uint64_t uniform_index(std::uint64_t key, std::uint64_t ctr_hi, std::uint64_t ctr_lo,
                                   std::uint64_t n) {
    auto b = philox::block(key, ctr_hi, ctr_lo);
    std::uint64_t u = (std::uint64_t(b[1]) << 32) | b[0];
    return u % n;
}

} // namespace bandlab
