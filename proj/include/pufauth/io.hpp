#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pufauth/errors.hpp"

namespace pufauth {

using Bytes = std::vector<std::uint8_t>;

/// Append-only little-endian encoder for file formats.
class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        if constexpr (std::is_floating_point_v<T>) {
            using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            put(std::bit_cast<U>(v));
        } else {
            for (std::size_t i = 0; i < sizeof(T); ++i)
                buf_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
        }
    }
    void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void put_magic(const char (&m)[5]) { buf_.insert(buf_.end(), m, m + 4); }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }
    template <typename T>
    void put_vector(std::span<const T> v) {
        put(static_cast<std::uint64_t>(v.size()));
        for (const T& x : v) put(x);
    }

    const Bytes& bytes() const noexcept { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Bounds-checked reader matching ByteWriter. Overruns raise FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
    T get() {
        if constexpr (std::is_floating_point_v<T>) {
            using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            return std::bit_cast<T>(get<U>());
        } else {
            need(sizeof(T));
            std::uint64_t v = 0;
            for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
            pos_ += sizeof(T);
            return static_cast<T>(v);
        }
    }
    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    void expect_magic(const char (&m)[5]) {
        auto b = get_bytes(4);
        if (std::memcmp(b.data(), m, 4) != 0) throw FormatError(std::string("bad magic, expected ") + m);
    }
    std::string get_string() {
        auto n = get<std::uint32_t>();
        auto b = get_bytes(n);
        return {b.begin(), b.end()};
    }
    template <typename T>
    std::vector<T> get_vector(std::size_t max_len = std::size_t{1} << 32) {
        auto n = get<std::uint64_t>();
        if (n > max_len || n * sizeof(T) > remaining()) throw FormatError("vector length out of range");
        std::vector<T> v(n);
        for (auto& x : v) x = get<T>();
        return v;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (n > remaining()) throw FormatError("truncated input");
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace pufauth
