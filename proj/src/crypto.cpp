#include "pufauth/crypto.hpp"

#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>

#include "pufauth/errors.hpp"

namespace pufauth::crypto {

namespace {

[[noreturn]] void fail(const std::string& what) {
    const unsigned long code = ERR_get_error();
    char buf[256] = {0};
    if (code) ERR_error_string_n(code, buf, sizeof buf);
    ERR_clear_error();
    throw CryptoError(what + (code ? std::string(" (") + buf + ")" : std::string()));
}

EVP_PKEY* raw(const detail::PkeyPtr& p) { return static_cast<EVP_PKEY*>(p.get()); }

struct CtxDeleter {
    void operator()(EVP_PKEY_CTX* c) const noexcept { EVP_PKEY_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_PKEY_CTX, CtxDeleter>;

struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const noexcept { EVP_CIPHER_CTX_free(c); }
};
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

struct BioDeleter {
    void operator()(BIO* b) const noexcept { BIO_free(b); }
};
using BioPtr = std::unique_ptr<BIO, BioDeleter>;

void set_oaep(EVP_PKEY_CTX* ctx) {
    if (EVP_PKEY_CTX_set_rsa_padding(ctx, RSA_PKCS1_OAEP_PADDING) <= 0 ||
        EVP_PKEY_CTX_set_rsa_oaep_md(ctx, EVP_sha256()) <= 0 || EVP_PKEY_CTX_set_rsa_mgf1_md(ctx, EVP_sha256()) <= 0)
        fail("cannot configure RSA-OAEP");
}

std::string bio_to_string(BIO* bio) {
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio, &data);
    return std::string(data, static_cast<std::size_t>(len));
}

}  // namespace

void detail::PkeyDeleter::operator()(void* p) const noexcept { EVP_PKEY_free(static_cast<EVP_PKEY*>(p)); }

Bytes random_bytes(std::size_t n) {
    Bytes out(n);
    if (n && RAND_bytes(out.data(), static_cast<int>(n)) != 1) fail("RAND_bytes failed");
    return out;
}

std::unique_ptr<RsaOaepPublicKey> RsaOaepPublicKey::from_pem(const std::string& pem) {
    BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    EVP_PKEY* key = PEM_read_bio_PUBKEY(bio.get(), nullptr, nullptr, nullptr);
    if (!key) fail("cannot parse public key PEM");
    return std::make_unique<RsaOaepPublicKey>(detail::PkeyPtr(key));
}

Bytes RsaOaepPublicKey::encrypt(std::span<const std::uint8_t> plaintext) const {
    CtxPtr ctx(EVP_PKEY_CTX_new(raw(key_), nullptr));
    if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) <= 0) fail("RSA encrypt init");
    set_oaep(ctx.get());
    std::size_t len = 0;
    if (EVP_PKEY_encrypt(ctx.get(), nullptr, &len, plaintext.data(), plaintext.size()) <= 0) fail("RSA encrypt size");
    Bytes out(len);
    if (EVP_PKEY_encrypt(ctx.get(), out.data(), &len, plaintext.data(), plaintext.size()) <= 0) fail("RSA encrypt");
    out.resize(len);
    return out;
}

std::string RsaOaepPublicKey::to_pem() const {
    BioPtr bio(BIO_new(BIO_s_mem()));
    if (PEM_write_bio_PUBKEY(bio.get(), raw(key_)) != 1) fail("cannot export public key");
    return bio_to_string(bio.get());
}

std::unique_ptr<RsaOaepPrivateKey> RsaOaepPrivateKey::generate(int bits) {
    EVP_PKEY* key = EVP_RSA_gen(static_cast<unsigned>(bits));
    if (!key) fail("RSA key generation failed");
    return std::make_unique<RsaOaepPrivateKey>(detail::PkeyPtr(key));
}

std::unique_ptr<RsaOaepPrivateKey> RsaOaepPrivateKey::from_pem(const std::string& pem) {
    BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
    EVP_PKEY* key = PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr);
    if (!key) fail("cannot parse private key PEM");
    return std::make_unique<RsaOaepPrivateKey>(detail::PkeyPtr(key));
}

Bytes RsaOaepPrivateKey::decrypt(std::span<const std::uint8_t> ciphertext) const {
    CtxPtr ctx(EVP_PKEY_CTX_new(raw(key_), nullptr));
    if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) <= 0) fail("RSA decrypt init");
    set_oaep(ctx.get());
    std::size_t len = 0;
    if (EVP_PKEY_decrypt(ctx.get(), nullptr, &len, ciphertext.data(), ciphertext.size()) <= 0) fail("RSA decrypt size");
    Bytes out(len);
    if (EVP_PKEY_decrypt(ctx.get(), out.data(), &len, ciphertext.data(), ciphertext.size()) <= 0) fail("RSA decrypt");
    out.resize(len);
    return out;
}

std::unique_ptr<PublicKeyCipher> RsaOaepPrivateKey::public_key() const {
    BioPtr bio(BIO_new(BIO_s_mem()));
    if (PEM_write_bio_PUBKEY(bio.get(), raw(key_)) != 1) fail("cannot export public key");
    return RsaOaepPublicKey::from_pem(bio_to_string(bio.get()));
}

std::string RsaOaepPrivateKey::to_pem() const {
    BioPtr bio(BIO_new(BIO_s_mem()));
    if (PEM_write_bio_PrivateKey(bio.get(), raw(key_), nullptr, nullptr, 0, nullptr, nullptr) != 1)
        fail("cannot export private key");
    return bio_to_string(bio.get());
}

Bytes Aes256Gcm::seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                      std::span<const std::uint8_t> plaintext) const {
    if (key.size() != key_size()) throw CryptoError("AES-256-GCM needs a 32-byte key");
    Bytes env = random_bytes(nonce_size());
    env.resize(nonce_size() + plaintext.size() + tag_size());
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce_size()), nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), env.data()) != 1)
        fail("AES-GCM encrypt init");
    if (!aad.empty() && EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        fail("AES-GCM aad");
    std::uint8_t* ct = env.data() + nonce_size();
    if (EVP_EncryptUpdate(ctx.get(), ct, &len, plaintext.data(), static_cast<int>(plaintext.size())) != 1)
        fail("AES-GCM encrypt");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), ct + len, &fin) != 1) fail("AES-GCM final");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(tag_size()),
                            ct + plaintext.size()) != 1)
        fail("AES-GCM tag");
    return env;
}

Bytes Aes256Gcm::open(std::span<const std::uint8_t> key, std::span<const std::uint8_t> aad,
                      std::span<const std::uint8_t> envelope) const {
    if (key.size() != key_size()) throw CryptoError("AES-256-GCM needs a 32-byte key");
    if (envelope.size() < nonce_size() + tag_size()) throw CryptoError("AES-GCM envelope too short");
    const std::size_t ct_len = envelope.size() - nonce_size() - tag_size();
    Bytes plain(ct_len);
    CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce_size()), nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), envelope.data()) != 1)
        fail("AES-GCM decrypt init");
    if (!aad.empty() && EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        fail("AES-GCM aad");
    if (EVP_DecryptUpdate(ctx.get(), plain.data(), &len, envelope.data() + nonce_size(), static_cast<int>(ct_len)) != 1)
        fail("AES-GCM decrypt");
    Bytes tag(envelope.end() - static_cast<std::ptrdiff_t>(tag_size()), envelope.end());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(tag_size()), tag.data()) != 1)
        fail("AES-GCM set tag");
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + len, &fin) != 1) {
        ERR_clear_error();
        throw CryptoError("AES-GCM authentication tag mismatch");
    }
    return plain;
}

}  // namespace pufauth::crypto
