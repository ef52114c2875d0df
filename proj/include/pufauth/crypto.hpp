#pragma once

#include <memory>
#include <span>
#include <string>

#include "pufauth/io.hpp"

namespace pufauth::crypto {

/// CSPRNG bytes (OpenSSL RAND_bytes).
Bytes random_bytes(std::size_t n);

/// Randomized public-key encryption: encrypt twice, get two different ciphertexts.
class PublicKeyCipher {
public:
    virtual ~PublicKeyCipher() = default;
    virtual Bytes encrypt(std::span<const std::uint8_t> plaintext) const = 0;
    virtual std::string to_pem() const = 0;
};

class PrivateKeyCipher {
public:
    virtual ~PrivateKeyCipher() = default;
    /// Throws CryptoError on any padding or key failure.
    virtual Bytes decrypt(std::span<const std::uint8_t> ciphertext) const = 0;
    virtual std::unique_ptr<PublicKeyCipher> public_key() const = 0;
    virtual std::string to_pem() const = 0;
};

/// Authenticated symmetric cipher. Envelopes are nonce || ciphertext || tag.
class AeadCipher {
public:
    virtual ~AeadCipher() = default;
    virtual std::size_t key_size() const = 0;
    virtual std::size_t nonce_size() const = 0;
    virtual std::size_t tag_size() const = 0;
    /// Seals under a fresh random nonce.
    virtual Bytes seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                       std::span<const std::uint8_t> plaintext) const = 0;
    /// Throws CryptoError if the tag does not verify.
    virtual Bytes open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                       std::span<const std::uint8_t> envelope) const = 0;
};

namespace detail {
struct PkeyDeleter {
    void operator()(void* p) const noexcept;
};
using PkeyPtr = std::unique_ptr<void, PkeyDeleter>;
}  // namespace detail

/// RSA-OAEP with SHA-256 (OAEP digest and MGF1).
class RsaOaepPublicKey final : public PublicKeyCipher {
public:
    static std::unique_ptr<RsaOaepPublicKey> from_pem(const std::string& pem);
    Bytes encrypt(std::span<const std::uint8_t> plaintext) const override;
    std::string to_pem() const override;
    explicit RsaOaepPublicKey(detail::PkeyPtr key) : key_(std::move(key)) {}

private:
    detail::PkeyPtr key_;
};

class RsaOaepPrivateKey final : public PrivateKeyCipher {
public:
    static std::unique_ptr<RsaOaepPrivateKey> generate(int bits = 2048);
    static std::unique_ptr<RsaOaepPrivateKey> from_pem(const std::string& pem);
    Bytes decrypt(std::span<const std::uint8_t> ciphertext) const override;
    std::unique_ptr<PublicKeyCipher> public_key() const override;
    std::string to_pem() const override;
    explicit RsaOaepPrivateKey(detail::PkeyPtr key) : key_(std::move(key)) {}

private:
    detail::PkeyPtr key_;
};

class Aes256Gcm final : public AeadCipher {
public:
    std::size_t key_size() const override { return 32; }
    std::size_t nonce_size() const override { return 12; }
    std::size_t tag_size() const override { return 16; }
    Bytes seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
               std::span<const std::uint8_t> plaintext) const override;
    Bytes open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
               std::span<const std::uint8_t> envelope) const override;
};

}  // namespace pufauth::crypto
