#ifndef TCVDP_RNG_HPP
#define TCVDP_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

#include "tcvdp/common.hpp"

namespace tcvdp {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Each
// (counter, key) pair maps to four independent 32-bit words, so any stream
// element can be addressed directly without sequential state. Passes the
// usual statistical batteries (TestU01 BigCrush) per the original paper.
namespace philox {

constexpr std::uint32_t M0 = 0xD2511F53u;
constexpr std::uint32_t M1 = 0xCD9E8D57u;
constexpr std::uint32_t W0 = 0x9E3779B9u;
constexpr std::uint32_t W1 = 0xBB67AE85u;

inline std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                          std::uint32_t k0, std::uint32_t k1) {
    for (int round = 0; round < 10; ++round) {
        std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
        std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
        std::array<std::uint32_t, 4> next = {
            std::uint32_t(p1 >> 32) ^ ctr[1] ^ k0, std::uint32_t(p1),
            std::uint32_t(p0 >> 32) ^ ctr[3] ^ k1, std::uint32_t(p0)};
        ctr = next;
        k0 += W0;
        k1 += W1;
    }
    return ctr;
}

}  // namespace philox

/// Counter-addressable Gaussian noise source. Every draw is a pure function
/// of (seed, trajectory, step, channel), so trajectories can be integrated
/// in any order, on any worker, with identical results.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed)
        : k0_(std::uint32_t(seed)), k1_(std::uint32_t(seed >> 32)) {}

    /// Two independent U(0,1] variates from one Philox block.
    std::array<double, 2> uniforms(std::uint64_t traj, std::uint64_t step,
                                   std::uint32_t channel) const {
        auto r = philox::block({std::uint32_t(step), std::uint32_t(step >> 32),
                                channel, std::uint32_t(traj)},
                               k0_ ^ std::uint32_t(traj >> 32), k1_);
        // (0,1]: the +1 keeps log() finite.
        double u0 = ((std::uint64_t(r[0]) << 32 | r[1]) + 1.0) * 0x1p-64;
        double u1 = ((std::uint64_t(r[2]) << 32 | r[3]) + 1.0) * 0x1p-64;
        return {u0, u1};
    }

    /// Standard complex Gaussian with <z* z> = 1 (variance 1/2 per
    /// quadrature), via Box-Muller.
    cplx complex_normal(std::uint64_t traj, std::uint64_t step,
                        std::uint32_t channel) const {
        auto [u0, u1] = uniforms(traj, step, channel);
        double r = std::sqrt(-std::log(u0));  // sqrt(-2 ln u) / sqrt(2)
        double phi = 2.0 * pi * u1;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    /// Pair of independent standard real normals.
    std::array<double, 2> normals(std::uint64_t traj, std::uint64_t step,
                                  std::uint32_t channel) const {
        auto [u0, u1] = uniforms(traj, step, channel);
        double r = std::sqrt(-2.0 * std::log(u0));
        double phi = 2.0 * pi * u1;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

    std::uint64_t seed() const {
        return std::uint64_t(k1_) << 32 | k0_;
    }

private:
    std::uint32_t k0_, k1_;
};

}  // namespace tcvdp

#endif
