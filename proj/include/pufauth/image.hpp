#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pufauth/bits.hpp"

namespace pufauth {

/// W x H 8-bit grayscale fingerprint, row-major.
struct PufImage {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::vector<std::uint8_t> pixels;

    std::size_t size() const noexcept { return pixels.size(); }
    bool operator==(const PufImage&) const = default;
};

/// Per-channel normalization applied when replicating to 3 channels.
struct Normalization {
    std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
    std::array<float, 3> std{0.5f, 0.5f, 0.5f};
    bool operator==(const Normalization&) const = default;
};

/// 3 x H x W float tensor.
struct ModelInput {
    int height = 0;
    int width = 0;
    std::vector<float> data;
};

/// Pixel j = sum_b r[8j + b] 2^b; the first response bit is the LSB of the
/// first pixel. Requires r.size() == 8 w h.
PufImage pack_bits_to_image(std::span<const std::uint8_t> r, std::uint16_t w, std::uint16_t h);

ResponseVector unpack_image_to_bits(const PufImage& img);

/// Flattens `cells` row-major, starts at `offset` (row, col) and packs the
/// next 8 w h bits with the rule above.
PufImage crop_cell_array(const BitMatrix& cells, std::uint16_t w, std::uint16_t h,
                         std::pair<std::size_t, std::size_t> offset = {0, 0});

ModelInput to_model_input(const PufImage& img, const Normalization& norm = {});

/// Writes the channel-replicated normalized image into `dst` (3 h w floats).
void write_model_input(const PufImage& img, const Normalization& norm, std::span<float> dst);

/// "PUFI" | u16 W | u16 H | W*H bytes (little-endian header).
std::vector<std::uint8_t> encode_image_file(const PufImage& img);
PufImage decode_image_file(std::span<const std::uint8_t> data);
void write_image_file(const std::filesystem::path& path, const PufImage& img);
PufImage read_image_file(const std::filesystem::path& path);

}  // namespace pufauth
