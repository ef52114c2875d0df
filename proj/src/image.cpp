#include "pufauth/image.hpp"

#include "pufauth/errors.hpp"
#include "pufauth/io.hpp"

namespace pufauth {

PufImage pack_bits_to_image(std::span<const std::uint8_t> r, std::uint16_t w, std::uint16_t h) {
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    if (r.size() != 8 * npix)
        throw LengthMismatch("need " + std::to_string(8 * npix) + " bits, got " + std::to_string(r.size()));
    PufImage img{w, h, std::vector<std::uint8_t>(npix)};
    for (std::size_t j = 0; j < npix; ++j) {
        unsigned v = 0;
        for (unsigned b = 0; b < 8; ++b) v |= static_cast<unsigned>(r[8 * j + b] & 1u) << b;
        img.pixels[j] = static_cast<std::uint8_t>(v);
    }
    return img;
}

ResponseVector unpack_image_to_bits(const PufImage& img) {
    ResponseVector r(img.pixels.size() * 8);
    for (std::size_t j = 0; j < img.pixels.size(); ++j)
        for (unsigned b = 0; b < 8; ++b) r[8 * j + b] = (img.pixels[j] >> b) & 1u;
    return r;
}

PufImage crop_cell_array(const BitMatrix& cells, std::uint16_t w, std::uint16_t h,
                         std::pair<std::size_t, std::size_t> offset) {
    const auto [row, col] = offset;
    const std::size_t need = 8ull * w * h;
    if (row >= cells.rows || col >= cells.cols)
        throw CropOutOfBounds("offset outside the cell array");
    const std::size_t start = row * cells.cols + col;
    if (start + need > cells.bits.size())
        throw CropOutOfBounds("crop needs " + std::to_string(need) + " bits from index " + std::to_string(start) +
                              " but the array holds " + std::to_string(cells.bits.size()));
    return pack_bits_to_image(std::span(cells.bits).subspan(start, need), w, h);
}

void write_model_input(const PufImage& img, const Normalization& norm, std::span<float> dst) {
    const std::size_t plane = img.pixels.size();
    if (dst.size() != 3 * plane) throw ShapeMismatch("model input buffer has wrong size");
    for (int c = 0; c < 3; ++c) {
        if (!(norm.std[c] > 0.0f)) throw InvalidNormalization("std must be positive");
        const float inv = 1.0f / norm.std[c];
        float* out = dst.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) out[i] = (img.pixels[i] / 255.0f - norm.mean[c]) * inv;
    }
}

ModelInput to_model_input(const PufImage& img, const Normalization& norm) {
    ModelInput x{img.height, img.width, std::vector<float>(3 * img.pixels.size())};
    write_model_input(img, norm, x.data);
    return x;
}

std::vector<std::uint8_t> encode_image_file(const PufImage& img) {
    ByteWriter w;
    w.put_magic("PUFI");
    w.put(img.width);
    w.put(img.height);
    w.put_bytes(img.pixels);
    return w.take();
}

PufImage decode_image_file(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    r.expect_magic("PUFI");
    PufImage img;
    img.width = r.get<std::uint16_t>();
    img.height = r.get<std::uint16_t>();
    auto px = r.get_bytes(static_cast<std::size_t>(img.width) * img.height);
    img.pixels.assign(px.begin(), px.end());
    if (!r.done()) throw FormatError("trailing bytes after image payload");
    return img;
}

void write_image_file(const std::filesystem::path& path, const PufImage& img) {
    write_file(path, encode_image_file(img));
}

PufImage read_image_file(const std::filesystem::path& path) { return decode_image_file(read_file(path)); }

}  // namespace pufauth
