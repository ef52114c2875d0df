#include <cmath>

#include "doctest.h"
#include "pufauth/errors.hpp"
#include "pufauth/image.hpp"
#include "pufauth/rng.hpp"

using namespace pufauth;

TEST_CASE("pack: hand example and constant images") {
    std::vector<std::uint8_t> r(8, 0);
    r[0] = 1;
    r[2] = 1;
    const auto img = pack_bits_to_image(r, 1, 1);
    CHECK(img.pixels[0] == 5);
    CHECK(unpack_image_to_bits(img) == r);

    CHECK(pack_bits_to_image(std::vector<std::uint8_t>(8 * 12, 0), 4, 3).pixels == std::vector<std::uint8_t>(12, 0));
    CHECK(pack_bits_to_image(std::vector<std::uint8_t>(8 * 12, 1), 4, 3).pixels == std::vector<std::uint8_t>(12, 255));
    PufImage white{2, 2, std::vector<std::uint8_t>(4, 255)};
    CHECK(unpack_image_to_bits(white) == std::vector<std::uint8_t>(32, 1));
}

TEST_CASE("pack: 50x50 takes exactly 20000 bits") {
    CHECK(pack_bits_to_image(std::vector<std::uint8_t>(20000, 0), 50, 50).size() == 2500);
    CHECK_THROWS_AS(pack_bits_to_image(std::vector<std::uint8_t>(19999, 0), 50, 50), LengthMismatch);
    CHECK_THROWS_AS(pack_bits_to_image(std::vector<std::uint8_t>(20008, 0), 50, 50), LengthMismatch);
}

TEST_CASE("pack: row-major pixel order") {
    std::vector<std::uint8_t> r(8 * 6, 0);
    r[8 * 4 + 7] = 1;  // pixel 4 = row 1, col 1 of a 3x2 image
    const auto img = pack_bits_to_image(r, 3, 2);
    CHECK(img.pixels[4] == 128);
}

TEST_CASE("pack/unpack round-trip on random images") {
    Rng rng(4);
    std::uniform_int_distribution<int> u(0, 255);
    for (int t = 0; t < 200; ++t) {
        PufImage img{7, 5, {}};
        for (int i = 0; i < 35; ++i) img.pixels.push_back(std::uint8_t(u(rng)));
        CHECK(pack_bits_to_image(unpack_image_to_bits(img), 7, 5) == img);
    }
}

TEST_CASE("crop: flattened row-major stream on a small array") {
    // 4x4 cells, 1x1 image needs 8 bits: rows 0 and 1 in order.
    BitMatrix m(4, 4, 0);
    m.at(0, 0) = 1;  // bit 0
    m.at(1, 3) = 1;  // bit 7
    CHECK(crop_cell_array(m, 1, 1).pixels[0] == 129);
    // offset (1, 2): bits are cells (1,2),(1,3),(2,0)...
    CHECK(crop_cell_array(m, 1, 1, {1, 2}).pixels[0] == 2);
    CHECK(crop_cell_array(BitMatrix(4, 4, 0), 1, 1, {1, 0}).pixels[0] == 0);
    CHECK_THROWS_AS(crop_cell_array(m, 1, 1, {2, 1}), CropOutOfBounds);
    CHECK_THROWS_AS(crop_cell_array(m, 1, 3), CropOutOfBounds);
    CHECK_THROWS_AS(crop_cell_array(m, 1, 1, {4, 0}), CropOutOfBounds);
}

TEST_CASE("crop: 220x200 cells give the first 20000 bits for a 50x50 image") {
    Rng rng(2);
    std::bernoulli_distribution coin(0.5);
    BitMatrix m(220, 200);
    for (auto& b : m.bits) b = coin(rng);
    const auto img = crop_cell_array(m, 50, 50);
    const std::vector<std::uint8_t> head(m.bits.begin(), m.bits.begin() + 20000);
    CHECK(img == pack_bits_to_image(head, 50, 50));
}

TEST_CASE("normalization") {
    PufImage img{3, 1, {0, 128, 255}};
    const auto x = to_model_input(img);
    REQUIRE(x.data.size() == 9);
    CHECK(x.data[0] == doctest::Approx(-1.0));
    CHECK(x.data[1] == doctest::Approx((128.0 / 255.0 - 0.5) / 0.5));
    CHECK(x.data[1] == doctest::Approx(0.00392).epsilon(0.01));
    CHECK(x.data[2] == doctest::Approx(1.0));
    for (int c = 1; c < 3; ++c)
        for (int i = 0; i < 3; ++i) CHECK(x.data[c * 3 + i] == x.data[i]);

    Normalization unit{{0, 0, 0}, {1, 1, 1}};
    CHECK(to_model_input(img, unit).data[2] == doctest::Approx(1.0));
    Normalization per{{0.1f, 0.2f, 0.3f}, {1, 2, 4}};
    const auto y = to_model_input(img, per);
    CHECK(y.data[3 + 2] == doctest::Approx((1.0 - 0.2) / 2));
    CHECK(y.data[6 + 2] == doctest::Approx((1.0 - 0.3) / 4));
    CHECK_THROWS_AS(to_model_input(img, Normalization{{0, 0, 0}, {1, 0, 1}}), InvalidNormalization);
}

TEST_CASE("image file round trip and corruption") {
    PufImage img{3, 2, {1, 2, 3, 4, 5, 6}};
    auto bytes = encode_image_file(img);
    CHECK(bytes.size() == 8 + 6);
    CHECK(decode_image_file(bytes) == img);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_image_file(bad), FormatError);
    bytes.pop_back();
    CHECK_THROWS_AS(decode_image_file(bytes), FormatError);
}
