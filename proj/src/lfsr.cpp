#include "pufauth/lfsr.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "pufauth/errors.hpp"

namespace pufauth {

Lfsr::Lfsr(unsigned width, std::vector<unsigned> taps, Challenge seed)
    : width_(width), taps_(std::move(taps)), state_(seed.value) {
    if (width_ < 2 || width_ > 64) throw PreconditionViolation("LFSR width must be in [2, 64]");
    if (seed.width != width_) throw ChallengeWidthMismatch("seed width differs from LFSR width");
    if (taps_.empty()) throw PreconditionViolation("LFSR needs at least one tap");
    for (unsigned t : taps_) {
        if (t < 1 || t > width_) throw PreconditionViolation("tap position out of range");
        tap_mask_ |= std::uint64_t{1} << (width_ - t);
    }
    const std::uint64_t mask = width_ == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width_) - 1;
    if ((state_ & ~mask) != 0) throw PreconditionViolation("seed has bits beyond the register width");
    if (state_ == 0) throw DegenerateSeed("all-zero LFSR seed is a fixed point");
}

Challenge Lfsr::step() noexcept {
    const auto fb = static_cast<std::uint64_t>(std::popcount(state_ & tap_mask_) & 1);
    state_ = (state_ >> 1) | (fb << (width_ - 1));
    return {width_, state_};
}

std::vector<unsigned> maximal_taps(unsigned width) {
    static const std::map<unsigned, std::vector<unsigned>> table = {
        {2, {2, 1}},          {3, {3, 2}},          {4, {4, 3}},          {5, {5, 3}},
        {6, {6, 5}},          {7, {7, 6}},          {8, {8, 6, 5, 4}},    {9, {9, 5}},
        {10, {10, 7}},        {11, {11, 9}},        {12, {12, 6, 4, 1}},  {13, {13, 4, 3, 1}},
        {14, {14, 5, 3, 1}},  {15, {15, 14}},       {16, {16, 15, 13, 4}}, {17, {17, 14}},
        {18, {18, 11}},       {19, {19, 6, 2, 1}},  {20, {20, 17}},       {21, {21, 19}},
        {22, {22, 21}},       {23, {23, 18}},       {24, {24, 23, 22, 17}}, {25, {25, 22}},
        {26, {26, 6, 2, 1}},  {27, {27, 5, 2, 1}},  {28, {28, 25}},       {29, {29, 27}},
        {30, {30, 6, 4, 1}},  {31, {31, 28}},       {32, {32, 22, 2, 1}},
    };
    auto it = table.find(width);
    if (it == table.end()) throw PreconditionViolation("no maximal tap table entry for width " + std::to_string(width));
    return it->second;
}

std::vector<Challenge> lfsr_expand(Lfsr lfsr, std::size_t n) {
    require(n >= 1, "lfsr_expand needs n >= 1");
    std::vector<Challenge> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(lfsr.step());
    return out;
}

}  // namespace pufauth
