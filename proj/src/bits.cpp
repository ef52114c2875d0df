#include "pufauth/bits.hpp"

#include "pufauth/errors.hpp"

namespace pufauth {

double normalized_hamming(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw ShapeMismatch("bit arrays differ in length");
    if (a.empty()) return 0.0;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] != b[i]);
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

double device_instability(std::span<const BitMatrix> readouts) {
    if (readouts.size() < 2) throw PreconditionViolation("device_instability needs at least two readouts");
    for (const auto& r : readouts)
        if (r.rows != readouts[0].rows || r.cols != readouts[0].cols) throw ShapeMismatch("readout shapes differ");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < readouts.size(); ++i)
        for (std::size_t j = i + 1; j < readouts.size(); ++j, ++pairs)
            sum += normalized_hamming(readouts[i].bits, readouts[j].bits);
    return sum / static_cast<double>(pairs);
}

std::vector<std::uint8_t> pack_lsb_first(std::span<const std::uint8_t> bits) {
    std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return out;
}

std::vector<std::uint8_t> unpack_lsb_first(std::span<const std::uint8_t> packed, std::size_t nbits) {
    if (packed.size() * 8 < nbits) throw LengthMismatch("packed buffer too short");
    std::vector<std::uint8_t> out(nbits);
    for (std::size_t i = 0; i < nbits; ++i) out[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return out;
}

}  // namespace pufauth
