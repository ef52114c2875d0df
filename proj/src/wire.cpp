#include "pufauth/wire.hpp"

#include <bit>
#include <cerrno>
#include <cstring>
#include <sys/socket.h>
#include <unistd.h>

#include "pufauth/errors.hpp"

namespace pufauth::wire {

namespace {

void put_be(Bytes& b, std::uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_be(std::span<const std::uint8_t> p, std::size_t& pos, int n) {
    if (pos + n > p.size()) throw ProtocolError("truncated payload");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | p[pos + i];
    pos += n;
    return v;
}

}  // namespace

const char* to_string(Reason r) noexcept {
    switch (r) {
        case Reason::ok: return "ok";
        case Reason::replay: return "replay";
        case Reason::decrypt_fail: return "decrypt_fail";
        case Reason::identity_mismatch: return "identity_mismatch";
        case Reason::low_confidence: return "low_confidence";
    }
    return "unknown";
}

Bytes encode_request(const AuthRequest& req) {
    if (req.m2.size() > 0xffff) throw ProtocolError("m2 longer than 65535 bytes");
    if (req.m1.size() > 0xffffffffu) throw ProtocolError("m1 too long");
    Bytes b;
    b.reserve(11 + req.m1.size() + req.m2.size());
    b.push_back(kVersion);
    put_be(b, req.device_id, 4);
    put_be(b, req.m2.size(), 2);
    b.insert(b.end(), req.m2.begin(), req.m2.end());
    put_be(b, req.m1.size(), 4);
    b.insert(b.end(), req.m1.begin(), req.m1.end());
    return b;
}

AuthRequest decode_request(std::span<const std::uint8_t> p) {
    std::size_t pos = 0;
    if (get_be(p, pos, 1) != kVersion) throw ProtocolError("unsupported request version");
    AuthRequest req;
    req.device_id = static_cast<std::uint32_t>(get_be(p, pos, 4));
    const auto n2 = get_be(p, pos, 2);
    if (pos + n2 > p.size()) throw ProtocolError("m2 length exceeds payload");
    req.m2.assign(p.begin() + pos, p.begin() + pos + n2);
    pos += n2;
    const auto n1 = get_be(p, pos, 4);
    if (pos + n1 != p.size()) throw ProtocolError("m1 length does not match payload");
    req.m1.assign(p.begin() + pos, p.end());
    return req;
}

Bytes encode_response(const AuthResponse& r) {
    Bytes b;
    b.push_back(kVersion);
    b.push_back(static_cast<std::uint8_t>(r.verdict));
    b.push_back(static_cast<std::uint8_t>(r.reason));
    b.push_back(r.p_open ? 1 : 0);
    put_be(b, std::bit_cast<std::uint64_t>(r.p_open.value_or(0.0)), 8);
    put_be(b, static_cast<std::uint32_t>(r.predicted), 4);
    return b;
}

AuthResponse decode_response(std::span<const std::uint8_t> p) {
    if (p.size() != 16) throw ProtocolError("response payload must be 16 bytes");
    std::size_t pos = 0;
    if (get_be(p, pos, 1) != kVersion) throw ProtocolError("unsupported response version");
    AuthResponse r;
    const auto verdict = get_be(p, pos, 1);
    const auto reason = get_be(p, pos, 1);
    const auto flags = get_be(p, pos, 1);
    if (verdict > 1 || reason > 4) throw ProtocolError("response field out of range");
    r.verdict = static_cast<Verdict>(verdict);
    r.reason = static_cast<Reason>(reason);
    const double p_open = std::bit_cast<double>(get_be(p, pos, 8));
    if (flags & 1u) r.p_open = p_open;
    r.predicted = static_cast<std::int32_t>(static_cast<std::uint32_t>(get_be(p, pos, 4)));
    return r;
}

Bytes request_aad(std::uint32_t device_id) {
    Bytes b{kVersion};
    put_be(b, device_id, 4);
    return b;
}

Bytes frame(std::span<const std::uint8_t> payload) {
    if (payload.size() > 0xffffffffu) throw ProtocolError("payload too large to frame");
    Bytes b;
    b.reserve(4 + payload.size());
    put_be(b, payload.size(), 4);
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

namespace {

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
}

// Returns bytes read; stops early only on EOF.
std::size_t read_all(int fd, std::uint8_t* data, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, data + got, n - got, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
        }
        if (r == 0) break;
        got += static_cast<std::size_t>(r);
    }
    return got;
}

}  // namespace

void write_frame(int fd, std::span<const std::uint8_t> payload) {
    const Bytes f = frame(payload);
    write_all(fd, f.data(), f.size());
}

std::optional<Bytes> read_frame(int fd, std::size_t max_frame) {
    std::uint8_t hdr[4];
    const std::size_t got = read_all(fd, hdr, 4);
    if (got == 0) return std::nullopt;
    if (got < 4) throw ProtocolError("truncated frame header");
    const std::uint32_t len = (std::uint32_t(hdr[0]) << 24) | (std::uint32_t(hdr[1]) << 16) |
                              (std::uint32_t(hdr[2]) << 8) | std::uint32_t(hdr[3]);
    if (len > max_frame)
        throw ProtocolError("frame of " + std::to_string(len) + " bytes exceeds limit " + std::to_string(max_frame));
    Bytes payload(len);
    if (read_all(fd, payload.data(), len) != len) throw ProtocolError("truncated frame payload");
    return payload;
}

}  // namespace pufauth::wire
