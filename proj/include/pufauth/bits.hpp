#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pufauth {

/// One bit per byte (0 or 1). Length N must be a multiple of 8 wherever it
/// feeds image construction.
using ResponseVector = std::vector<std::uint8_t>;

/// Row-major bit array, one bit per byte.
struct BitMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;

    BitMatrix() = default;
    BitMatrix(std::size_t r, std::size_t c, std::uint8_t fill = 0) : rows(r), cols(c), bits(r * c, fill) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return bits[r * cols + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * cols + c]; }
    bool operator==(const BitMatrix&) const = default;
};

/// Fraction of differing positions between two equal-length bit arrays.
double normalized_hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Mean pairwise normalized Hamming distance over >= 2 equal-shaped readouts.
double device_instability(std::span<const BitMatrix> readouts);

/// Packs 0/1 bytes into LSB-first bytes (bit i -> byte i/8, bit i%8).
std::vector<std::uint8_t> pack_lsb_first(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> unpack_lsb_first(std::span<const std::uint8_t> packed, std::size_t nbits);

}  // namespace pufauth
