#pragma once

#include <cstdint>
#include <vector>

namespace pufauth {

/// A challenge word of `width` bits. Bit position 1 is the MSB, position
/// `width` the LSB of `value`.
struct Challenge {
    unsigned width = 0;
    std::uint64_t value = 0;

    /// Bit at 1-based, MSB-first position `pos`.
    int bit(unsigned pos) const noexcept { return static_cast<int>((value >> (width - pos)) & 1u); }
    bool operator==(const Challenge&) const = default;
};

/// Fibonacci LFSR. Taps use the 1-based MSB-first numbering of the usual
/// maximal-length tables (position `width` is the output bit). Each step
/// shifts right and feeds the XOR of the tapped bits into the MSB.
class Lfsr {
public:
    Lfsr(unsigned width, std::vector<unsigned> taps, Challenge seed);

    unsigned width() const noexcept { return width_; }
    const std::vector<unsigned>& taps() const noexcept { return taps_; }
    Challenge state() const noexcept { return {width_, state_}; }

    Challenge step() noexcept;

private:
    unsigned width_;
    std::vector<unsigned> taps_;
    std::uint64_t tap_mask_ = 0;
    std::uint64_t state_;
};

/// Maximal-length tap set for widths 2..32.
std::vector<unsigned> maximal_taps(unsigned width);

/// C_1..C_n, where C_i is the register state after i steps.
std::vector<Challenge> lfsr_expand(Lfsr lfsr, std::size_t n);

}  // namespace pufauth
