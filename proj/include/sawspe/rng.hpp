#pragma once

#include <array>
#include <cstdint>

namespace sawspe {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is addressed by (seed, stream id); draws inside a stream by a
/// draw index. Any draw can be produced without generating its predecessors,
/// so work split across threads reproduces the serial sequence exactly.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    /// Four 32-bit words for counter (stream, block).
    Block operator()(std::uint64_t stream, std::uint64_t block) const noexcept {
        Block ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                  static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    std::array<std::uint32_t, 2> key_;
};

/// Sequential view over one Philox stream producing doubles.
class CounterStream {
public:
    CounterStream(const Philox4x32& gen, std::uint64_t stream) noexcept : gen_(&gen), stream_(stream) {}

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        const std::uint64_t bits = (*this)() >> 11;  // 53 bits
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    /// UniformRandomBitGenerator interface so <random> distributions can
    /// draw from the stream.
    using result_type = std::uint64_t;
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }
    result_type operator()() noexcept {
        if (used_ >= 2) {
            buf_ = (*gen_)(stream_, block_++);
            used_ = 0;
        }
        const std::uint64_t hi = buf_[2 * used_];
        const std::uint64_t lo = buf_[2 * used_ + 1];
        ++used_;
        return (hi << 32) | lo;
    }

    double exponential(double mean) noexcept;
    double normal() noexcept;
    /// Cauchy (Lorentzian) variate with half-width `gamma`.
    double cauchy(double gamma) noexcept;

private:
    const Philox4x32* gen_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    Philox4x32::Block buf_{};
    int used_ = 2;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Poisson variate drawn through std::poisson_distribution on top of the
/// counter stream.
std::uint64_t poisson(CounterStream& rng, double mean);

}  // namespace sawspe
