#include "pufauth/bloom.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "pufauth/errors.hpp"
#include "pufauth/io.hpp"

namespace pufauth {

BloomSizing bloom_size_for(std::uint64_t n, double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidTarget("false-positive target must lie in (0, 1)");
    if (n < 1) throw InvalidTarget("expected insertions must be >= 1");
    const double ln2 = std::numbers::ln2;
    const double m = std::ceil(-static_cast<double>(n) * std::log(p) / (ln2 * ln2));
    const double k = std::round(m / static_cast<double>(n) * ln2);
    return {static_cast<std::uint64_t>(m), static_cast<unsigned>(std::max(1.0, k))};
}

double bloom_false_positive_rate(std::uint64_t m, unsigned k, std::uint64_t n) {
    return std::pow(1.0 - std::exp(-static_cast<double>(k) * static_cast<double>(n) / static_cast<double>(m)),
                    static_cast<double>(k));
}

std::uint64_t hash64(std::span<const std::uint8_t> data, std::uint64_t seed) noexcept {
    // MurmurHash64A.
    constexpr std::uint64_t mul = 0xc6a4a7935bd1e995ULL;
    constexpr int r = 47;
    std::uint64_t h = seed ^ (data.size() * mul);
    std::size_t i = 0;
    for (; i + 8 <= data.size(); i += 8) {
        std::uint64_t k = 0;
        for (int b = 0; b < 8; ++b) k |= static_cast<std::uint64_t>(data[i + b]) << (8 * b);
        k *= mul;
        k ^= k >> r;
        k *= mul;
        h ^= k;
        h *= mul;
    }
    const std::size_t rest = data.size() - i;
    if (rest) {
        for (std::size_t j = rest; j-- > 0;) h ^= static_cast<std::uint64_t>(data[i + j]) << (8 * j);
        h *= mul;
    }
    h ^= h >> r;
    h *= mul;
    h ^= h >> r;
    return h;
}

BloomFilter::BloomFilter(std::uint64_t m, unsigned k, std::uint64_t seed1, std::uint64_t seed2)
    : m_(m), k_(k), seed1_(seed1), seed2_(seed2), words_((m + 63) / 64, 0) {
    if (m_ == 0 || k_ == 0) throw InvalidTarget("bloom filter needs m >= 1 and k >= 1");
    if (seed1_ == seed2_) throw InvalidTarget("bloom hash seeds must differ");
}

BloomFilter BloomFilter::for_capacity(std::uint64_t n, double p) {
    const auto s = bloom_size_for(n, p);
    return BloomFilter(s.m, s.k);
}

std::vector<std::uint64_t> BloomFilter::positions(std::span<const std::uint8_t> key) const {
    const std::uint64_t h1 = hash64(key, seed1_);
    const std::uint64_t h2 = hash64(key, seed2_) | 1u;
    std::vector<std::uint64_t> pos(k_);
    // (h1 + i h2) mod m, stepped incrementally to avoid overflow.
    std::uint64_t cur = h1 % m_;
    const std::uint64_t step = h2 % m_;
    for (unsigned i = 0; i < k_; ++i) {
        pos[i] = cur;
        cur = (cur >= m_ - step) ? cur - (m_ - step) : cur + step;
    }
    return pos;
}

void BloomFilter::insert(std::span<const std::uint8_t> key) {
    for (auto p : positions(key)) words_[p >> 6] |= std::uint64_t{1} << (p & 63);
    ++n_inserted_;
}

bool BloomFilter::query(std::span<const std::uint8_t> key) const {
    for (auto p : positions(key))
        if (!(words_[p >> 6] >> (p & 63) & 1u)) return false;
    return true;
}

void BloomFilter::fill() {
    std::fill(words_.begin(), words_.end(), ~std::uint64_t{0});
    if (m_ % 64) words_.back() = (std::uint64_t{1} << (m_ % 64)) - 1;
}

std::uint64_t BloomFilter::popcount() const noexcept {
    std::uint64_t c = 0;
    for (auto w : words_) c += static_cast<std::uint64_t>(std::popcount(w));
    return c;
}

std::vector<std::uint8_t> BloomFilter::snapshot() const {
    ByteWriter w;
    w.put_magic("PUFB");
    w.put<std::uint32_t>(1);
    w.put(m_);
    w.put<std::uint32_t>(k_);
    w.put(seed1_);
    w.put(seed2_);
    w.put(n_inserted_);
    for (auto word : words_) w.put(word);
    return w.take();
}

BloomFilter BloomFilter::restore(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    r.expect_magic("PUFB");
    if (r.get<std::uint32_t>() != 1) throw FormatError("unsupported filter snapshot version");
    const auto m = r.get<std::uint64_t>();
    const auto k = r.get<std::uint32_t>();
    const auto s1 = r.get<std::uint64_t>();
    const auto s2 = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    if (r.remaining() != ((m + 63) / 64) * 8) throw FormatError("filter snapshot bit array has the wrong length");
    BloomFilter f(m, k, s1, s2);
    f.n_inserted_ = n;
    for (auto& word : f.words_) word = r.get<std::uint64_t>();
    return f;
}

void BloomFilter::save(const std::filesystem::path& path) const {
    // Write-then-rename so a crash never leaves a torn snapshot.
    auto tmp = path;
    tmp += ".tmp";
    write_file(tmp, snapshot());
    std::filesystem::rename(tmp, path);
}

BloomFilter BloomFilter::load(const std::filesystem::path& path) { return restore(read_file(path)); }

}  // namespace pufauth
