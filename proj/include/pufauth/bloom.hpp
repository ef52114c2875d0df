#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pufauth {

struct BloomSizing {
    std::uint64_t m = 0;  // bits
    unsigned k = 0;       // hash functions
};

/// m = ceil(-n ln p / (ln 2)^2), k = round(m / n ln 2) (at least 1).
BloomSizing bloom_size_for(std::uint64_t n, double p);

/// Theoretical false-positive rate (1 - e^{-kn/m})^k.
double bloom_false_positive_rate(std::uint64_t m, unsigned k, std::uint64_t n);

/// Seeded 64-bit non-cryptographic hash.
std::uint64_t hash64(std::span<const std::uint8_t> data, std::uint64_t seed) noexcept;

/// Bloom filter with double hashing h_i(x) = h1(x) + i h2(x) mod m, h2 odd.
/// Not internally synchronized; callers serialize insert/query.
class BloomFilter {
public:
    BloomFilter(std::uint64_t m, unsigned k, std::uint64_t seed1 = 0x5bd1e9955bd1e995ULL,
                std::uint64_t seed2 = 0xc2b2ae3d27d4eb4fULL);
    static BloomFilter for_capacity(std::uint64_t n, double p);

    void insert(std::span<const std::uint8_t> key);
    bool query(std::span<const std::uint8_t> key) const;

    /// Sets every bit (test helper for the saturated case).
    void fill();

    std::uint64_t bit_count() const noexcept { return m_; }
    unsigned hash_count() const noexcept { return k_; }
    std::uint64_t inserted() const noexcept { return n_inserted_; }
    std::uint64_t popcount() const noexcept;
    std::uint64_t seed1() const noexcept { return seed1_; }
    std::uint64_t seed2() const noexcept { return seed2_; }
    std::size_t memory_bytes() const noexcept { return words_.size() * sizeof(std::uint64_t); }

    /// Bit positions probed for `key` (exposed for distribution tests).
    std::vector<std::uint64_t> positions(std::span<const std::uint8_t> key) const;

    /// Snapshot: "PUFB" | u32 version | u64 m | u32 k | u64 seed1 | u64 seed2 |
    /// u64 n_inserted | ceil(m/64) little-endian u64 words.
    std::vector<std::uint8_t> snapshot() const;
    static BloomFilter restore(std::span<const std::uint8_t> data);
    void save(const std::filesystem::path& path) const;
    static BloomFilter load(const std::filesystem::path& path);

    bool operator==(const BloomFilter&) const = default;

private:
    std::uint64_t m_;
    unsigned k_;
    std::uint64_t seed1_, seed2_;
    std::uint64_t n_inserted_ = 0;
    std::vector<std::uint64_t> words_;
};

}  // namespace pufauth
