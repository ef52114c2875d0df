#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "pufauth/bits.hpp"
#include "pufauth/device.hpp"
#include "pufauth/errors.hpp"
#include "pufauth/lfsr.hpp"
#include "pufauth/puf.hpp"

using namespace pufauth;

namespace {

// Reference register kept as an explicit bit array, s[0] = position 1 (MSB).
struct RefLfsr {
    std::vector<int> s;
    std::vector<unsigned> taps;
    std::uint64_t step() {
        int fb = 0;
        for (unsigned t : taps) fb ^= s[t - 1];
        for (std::size_t i = s.size() - 1; i > 0; --i) s[i] = s[i - 1];
        s[0] = fb;
        std::uint64_t v = 0;
        for (int b : s) v = (v << 1) | std::uint64_t(b);
        return v;
    }
};

RefLfsr ref_from(unsigned width, std::vector<unsigned> taps, std::uint64_t seed) {
    RefLfsr r{std::vector<int>(width), std::move(taps)};
    for (unsigned i = 0; i < width; ++i) r.s[i] = int((seed >> (width - 1 - i)) & 1u);
    return r;
}

std::uint64_t period(Lfsr l) {
    const auto start = l.state().value;
    std::uint64_t n = 0;
    do {
        l.step();
        ++n;
    } while (l.state().value != start && n <= (1ull << l.width()));
    return n;
}

}  // namespace

TEST_CASE("lfsr: 4-bit taps {4,3} matches the bit-array reference and cycles through 15 states") {
    Lfsr l(4, {4, 3}, {4, 0b0001});
    auto ref = ref_from(4, {4, 3}, 0b0001);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 15; ++i) {
        const auto c = l.step();
        CHECK(c.value == ref.step());
        CHECK(c.value != 0);
        seen.insert(c.value);
    }
    CHECK(seen.size() == 15);
    CHECK(l.state().value == 0b0001);
}

TEST_CASE("lfsr: first step from 0001 shifts right and feeds back into the MSB") {
    Lfsr l(4, {4, 3}, {4, 0b0001});
    // tapped positions 4 (LSB, =1) and 3 (=0) -> feedback 1 enters position 1.
    CHECK(l.step().value == 0b1000);
}

TEST_CASE("lfsr: maximal taps reach period 2^w - 1 for every width up to 20") {
    for (unsigned w = 2; w <= 20; ++w) {
        CAPTURE(w);
        CHECK(period(Lfsr(w, maximal_taps(w), {w, 1})) == (1ull << w) - 1);
    }
}

TEST_CASE("lfsr: 16-bit period is 65535 from arbitrary seeds") {
    for (std::uint64_t seed : {1ull, 0xACE1ull, 0xFFFFull}) CHECK(period(Lfsr(16, maximal_taps(16), {16, seed})) == 65535);
}

TEST_CASE("lfsr: 32-bit reference taps agree with the reference register") {
    Lfsr l(32, {32, 22, 2, 1}, {32, 0xDEADBEEF});
    auto ref = ref_from(32, {32, 22, 2, 1}, 0xDEADBEEF);
    for (int i = 0; i < 1000; ++i) REQUIRE(l.step().value == ref.step());
}

TEST_CASE("lfsr: errors") {
    CHECK_THROWS_AS(Lfsr(16, maximal_taps(16), {16, 0}), DegenerateSeed);
    CHECK_THROWS_AS(Lfsr(16, maximal_taps(16), {32, 1}), ChallengeWidthMismatch);
    CHECK_THROWS_AS(Lfsr(16, {17, 3}, {16, 1}), PreconditionViolation);
    CHECK_THROWS_AS(Lfsr(8, {8, 6, 5, 4}, {8, 0x100}), PreconditionViolation);
}

TEST_CASE("lfsr: expansion returns C_1..C_n deterministically") {
    Lfsr l(32, {32, 22, 2, 1}, {32, 12345});
    const auto a = lfsr_expand(l, 100);
    const auto b = lfsr_expand(l, 100);
    REQUIRE(a.size() == 100);
    CHECK(a == b);
    Lfsr m = l;
    CHECK(a[0] == m.step());
    CHECK(a[1] == m.step());
}

TEST_CASE("arbiter: parity features") {
    const Challenge c{4, 0b1010};  // c1..c4 = 1,0,1,0
    const auto phi = parity_features(c);
    REQUIRE(phi.size() == 5);
    // phi_4 = (1-2*0) = 1; phi_3 = (1-2)*1 = -1; phi_2 = -1; phi_1 = 1; phi_5 = 1
    CHECK(phi == std::vector<double>{1, -1, -1, 1, 1});
}

TEST_CASE("arbiter: noise-free responses are deterministic and flip under negated weights") {
    Rng rng(7);
    auto puf = ArbiterPuf::create(32, 0.0, rng);
    std::vector<double> neg = puf.weights();
    for (auto& w : neg) w = -w;
    ArbiterPuf anti(neg, 0.0);
    Rng a(1), b(2);
    std::uniform_int_distribution<std::uint64_t> u(0, 0xFFFFFFFFull);
    for (int i = 0; i < 2000; ++i) {
        const Challenge c{32, u(rng)};
        const bool r = puf.respond(c, a);
        CHECK(r == puf.respond(c, b));
        if (puf.delay(c) != 0.0) CHECK(anti.respond(c, a) != r);
    }
    CHECK_THROWS_AS(puf.respond({16, 1}, a), ChallengeWidthMismatch);
}

TEST_CASE("arbiter: independent instances disagree on about half of random challenges") {
    Rng rng(11);
    auto p = ArbiterPuf::create(32, 0.0, rng);
    auto q = ArbiterPuf::create(32, 0.0, rng);
    std::uniform_int_distribution<std::uint64_t> u(0, 0xFFFFFFFFull);
    int diff = 0;
    for (int i = 0; i < 10000; ++i) {
        const Challenge c{32, u(rng)};
        diff += p.respond(c, rng) != q.respond(c, rng);
    }
    CHECK(std::abs(diff / 1e4 - 0.5) < 0.05);
}

TEST_CASE("arbiter: quadrature flip rate agrees with a Monte-Carlo of the noise model") {
    // Oracle: delay ~ N(0, s^2), two independent noisy evaluations.
    Rng rng(3);
    std::normal_distribution<double> nd;
    for (double ratio : {0.05, 0.2, 1.0, 3.0}) {
        const double sigma = ratio;
        long dis = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double d = nd(rng);
            dis += ((d + sigma * nd(rng)) > 0) != ((d + sigma * nd(rng)) > 0);
        }
        CAPTURE(ratio);
        CHECK(arbiter_flip_rate(1.0, sigma) == doctest::Approx(double(dis) / n).epsilon(0.03));
    }
    CHECK(arbiter_flip_rate(2.0, 0.0) == 0.0);
    const double s = arbiter_sigma_for_flip_rate(5.0, 0.05);
    CHECK(arbiter_flip_rate(5.0, s) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("arbiter: calibrated 5% device flips about 5% of bits per evaluation pair") {
    Rng rng(21);
    auto puf = ArbiterPuf::create(32, 0.0, rng);
    puf.set_flip_rate(0.05);
    const Challenge seed{32, 0x1234567};
    const std::vector<unsigned> taps{32, 22, 2, 1};
    double total = 0.0;
    const int pairs = 50;
    for (int i = 0; i < pairs; ++i) {
        const auto a = strong_puf_response_vector(puf, seed, taps, 20000, rng);
        const auto b = strong_puf_response_vector(puf, seed, taps, 20000, rng);
        total += normalized_hamming(a, b);
    }
    CHECK(std::abs(total / pairs - 0.05) < 0.01);
}

TEST_CASE("arbiter: response vectors") {
    Rng rng(5);
    auto puf = ArbiterPuf::create(32, 0.0, rng);
    const std::vector<unsigned> taps{32, 22, 2, 1};
    const auto r = strong_puf_response_vector(puf, {32, 99}, taps, 20000, rng);
    CHECK(r.size() == 20000);
    CHECK(r == strong_puf_response_vector(puf, {32, 99}, taps, 20000, rng));
    CHECK_THROWS_AS(strong_puf_response_vector(puf, {32, 99}, taps, 20001, rng), PreconditionViolation);
    CHECK_THROWS_AS(strong_puf_response_vector(puf, {32, 0}, taps, 8, rng), DegenerateSeed);
}

TEST_CASE("memory: constant cells") {
    Rng rng(1);
    MemoryPuf zeros(3, 4, std::vector<double>(12, 0.0), std::vector<double>(12, 0.0));
    MemoryPuf ones(3, 4, std::vector<double>(12, 1.0), std::vector<double>(12, 0.0));
    for (int i = 0; i < 10; ++i) {
        CHECK(zeros.readout(rng) == BitMatrix(3, 4, 0));
        CHECK(ones.readout(rng) == BitMatrix(3, 4, 1));
    }
}

TEST_CASE("memory: independent flips give pairwise distance 2q(1-q)") {
    const double q = 0.0585;
    Rng rng(8);
    std::vector<double> bias(220 * 200);
    std::bernoulli_distribution coin(0.5);
    for (auto& b : bias) b = coin(rng) ? 1.0 : 0.0;
    MemoryPuf puf(220, 200, bias, std::vector<double>(bias.size(), q));
    std::vector<BitMatrix> reads;
    for (int i = 0; i < 101; ++i) reads.push_back(puf.readout(rng));
    CHECK(device_instability(reads) == doctest::Approx(2 * q * (1 - q)).epsilon(0.02));
}

TEST_CASE("memory: cell means converge to the bias") {
    Rng rng(9);
    const std::vector<double> bias{0.0, 0.1, 0.3, 0.5, 0.9, 1.0};
    MemoryPuf puf(2, 3, bias, std::vector<double>(6, 0.0));
    const int n = 20000;
    std::vector<int> ones(6);
    for (int i = 0; i < n; ++i) {
        const auto m = puf.readout(rng);
        for (int c = 0; c < 6; ++c) ones[c] += m.bits[c];
    }
    for (int c = 0; c < 6; ++c) {
        const double sd = std::sqrt(bias[c] * (1 - bias[c]) / n);
        CHECK(std::abs(ones[c] / double(n) - bias[c]) <= 3 * sd + 1e-12);
    }
}

TEST_CASE("memory: bias mixture moments") {
    // Beta(1,a): E[2b(1-b)] = 2a / ((a+1)(a+2)); uniform: 1/3.
    Rng rng(10);
    const BiasMixture mix;
    const auto puf = MemoryPuf::create(220, 200, mix, 0.0, rng);
    double mean = 0.0, pair = 0.0;
    for (double b : puf.bias()) {
        mean += b;
        pair += 2 * b * (1 - b);
    }
    mean /= puf.bias().size();
    pair /= puf.bias().size();
    const double a = mix.sharpness;
    const double expected = 0.95 * 2 * a / ((a + 1) * (a + 2)) + 0.05 / 3.0;
    CHECK(std::abs(mean - 0.5) < 0.01);
    CHECK(pair == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("instability: hand-counted cases") {
    BitMatrix a(2, 2, 0), b(2, 2, 0), c(2, 2, 0);
    CHECK(device_instability(std::vector<BitMatrix>{a, a}) == 0.0);
    CHECK(device_instability(std::vector<BitMatrix>{a, BitMatrix(2, 2, 1)}) == 1.0);
    b.at(0, 0) = 1;
    c.at(0, 0) = 1;
    c.at(0, 1) = 1;
    // pairwise distances 1/4, 2/4, 1/4
    CHECK(device_instability(std::vector<BitMatrix>{a, b, c}) == doctest::Approx(1.0 / 3.0));
    CHECK(device_instability(std::vector<BitMatrix>{a, b}) == 0.25);
    CHECK_THROWS_AS(device_instability(std::vector<BitMatrix>{a, BitMatrix(1, 4, 0)}), ShapeMismatch);
    CHECK_THROWS_AS(device_instability(std::vector<BitMatrix>{a}), PreconditionViolation);
}

TEST_CASE("device: fixed seed reproduces images bit for bit") {
    DeviceSpec s;
    s.id = 3;
    s.seed = 77;
    s.challenge = 0xBEEF;
    Device d1(s), d2(s);
    CHECK(d1.evaluate_image(50, 50) == d2.evaluate_image(50, 50));
    s.kind = PufKind::memory;
    Device m1(s), m2(s);
    CHECK(m1.evaluate_image(50, 50) == m2.evaluate_image(50, 50));
    CHECK(m1.evaluate_image(50, 50).size() == 2500);
}

TEST_CASE("device: spec json round trip") {
    DeviceSpec s;
    s.id = 9;
    s.kind = PufKind::memory;
    s.seed = 0xFFFFFFFFFFFFull;
    s.flip_prob = 0.01;
    s.crop_row = 3;
    nlohmann::json j = s;
    const auto back = j.get<DeviceSpec>();
    CHECK(back.id == 9);
    CHECK(back.kind == PufKind::memory);
    CHECK(back.seed == s.seed);
    CHECK(back.flip_prob == 0.01);
    CHECK(back.crop_row == 3);
}

TEST_CASE("response dump round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "pufauth_dump_test";
    ResponseDump d;
    d.device_id = 42;
    d.is_matrix = true;
    d.bits = BitMatrix(3, 5, 0);
    d.bits.at(1, 2) = 1;
    d.bits.at(2, 4) = 1;
    write_response_dump(dir / "r.bin", d);
    const auto back = read_response_dump(dir / "r.bin");
    CHECK(back.device_id == 42);
    CHECK(back.is_matrix);
    CHECK(back.bits == d.bits);
    std::filesystem::remove_all(dir);
}
