#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "pufauth/io.hpp"

namespace pufauth::wire {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kDefaultMaxFrame = 64 * 1024;

/// Request payload: version(1) | device_id(4) | len(m2)(2) | m2 | len(m1)(4) | m1.
/// All integers big-endian. m1 = nonce || ciphertext || tag, m2 = asymmetric
/// ciphertext of the session key.
struct AuthRequest {
    std::uint32_t device_id = 0;
    Bytes m1;
    Bytes m2;
    bool operator==(const AuthRequest&) const = default;
};

enum class Verdict : std::uint8_t { reject = 0, accept = 1 };
enum class Reason : std::uint8_t { ok = 0, replay = 1, decrypt_fail = 2, identity_mismatch = 3, low_confidence = 4 };

/// Response payload (16 bytes): version(1) | verdict(1) | reason(1) | flags(1) |
/// p_open(f64 bits, 8) | predicted label(i32, 4). flags bit 0: p_open present.
struct AuthResponse {
    Verdict verdict = Verdict::reject;
    Reason reason = Reason::decrypt_fail;
    std::optional<double> p_open;
    std::int32_t predicted = -1;
    bool operator==(const AuthResponse&) const = default;
};

const char* to_string(Reason r) noexcept;

Bytes encode_request(const AuthRequest& req);
AuthRequest decode_request(std::span<const std::uint8_t> payload);
Bytes encode_response(const AuthResponse& resp);
AuthResponse decode_response(std::span<const std::uint8_t> payload);

/// Associated data bound into m1: version || device_id.
Bytes request_aad(std::uint32_t device_id);

/// 4-byte big-endian length prefix + payload.
Bytes frame(std::span<const std::uint8_t> payload);

/// Blocking frame I/O on a connected socket. `read_frame` returns nullopt on
/// a clean EOF before any header byte; oversized or truncated frames raise
/// ProtocolError.
void write_frame(int fd, std::span<const std::uint8_t> payload);
std::optional<Bytes> read_frame(int fd, std::size_t max_frame = kDefaultMaxFrame);

}  // namespace pufauth::wire
