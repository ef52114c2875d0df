#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "pufauth/bloom.hpp"
#include "pufauth/crypto.hpp"
#include "pufauth/device.hpp"
#include "pufauth/openset.hpp"
#include "pufauth/wire.hpp"

namespace pufauth {

/// device id -> class label, plus a record of which public key each device received.
struct DeviceRegistry {
    std::map<std::uint32_t, int> labels;
    std::map<std::uint32_t, std::string> pk_record;

    void add(std::uint32_t device_id, int label, std::string pk_fingerprint = {});
};

struct Enrollment {
    LabeledDataset dataset;
    DeviceRegistry registry;
};

/// Evaluates each device's fixed challenge `images_per_device` times (distinct
/// time instants). Device i in `fleet` gets class label i.
Enrollment enroll_fleet(std::vector<Device>& fleet, std::size_t images_per_device, std::uint16_t w, std::uint16_t h,
                        const std::string& pk_fingerprint = {});

/// Device ROM: PUF description (challenge seed and LFSR taps included), the
/// server public key, and the image geometry.
struct Provisioning {
    DeviceSpec device;
    std::string public_key_pem;
    std::uint16_t image_width = 50;
    std::uint16_t image_height = 50;
};

void write_provisioning(const std::filesystem::path& path, const Provisioning& p);
Provisioning read_provisioning(const std::filesystem::path& path);

/// Hybrid encryption of an already-generated image under a fresh session key.
wire::AuthRequest seal_image(std::uint32_t device_id, const PufImage& image, const crypto::PublicKeyCipher& pk,
                             const crypto::AeadCipher& aead);

/// Regenerates the device's image from its stored challenge and seals it.
wire::AuthRequest build_auth_request(Device& device, const crypto::PublicKeyCipher& pk,
                                     const crypto::AeadCipher& aead, std::uint16_t w, std::uint16_t h);

/// When m2 enters the replay filter.
enum class ReplayInsertPolicy {
    after_decrypt,  // any request that decrypts is remembered, whatever the verdict
    after_accept,   // only accepted requests are remembered
};

struct ServerState {
    std::unique_ptr<crypto::PrivateKeyCipher> sk;
    std::unique_ptr<crypto::AeadCipher> aead = std::make_unique<crypto::Aes256Gcm>();
    BloomFilter filter;
    std::uint64_t filter_capacity = 0;  // design n; exceeding it logs a warning
    OpenSetModel model;
    ReplayInsertPolicy insert_policy = ReplayInsertPolicy::after_decrypt;
    std::mutex replay_mutex;  // guards filter across query -> decrypt -> insert
    std::atomic<bool> saturation_warned{false};
    std::function<void(const std::string&)> log = [](const std::string&) {};

    ServerState(std::unique_ptr<crypto::PrivateKeyCipher> key, BloomFilter f, OpenSetModel m)
        : sk(std::move(key)), filter(std::move(f)), model(std::move(m)) {}
};

/// Replay check, decryption, filter insertion, then classification.
wire::AuthResponse handle_auth_request(const wire::AuthRequest& req, ServerState& state);

struct ServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0 picks an ephemeral port
    std::size_t max_frame = wire::kDefaultMaxFrame;
    std::filesystem::path snapshot_path;  // empty disables persistence
    std::chrono::milliseconds snapshot_interval{5000};
};

/// TCP front end: one thread per connection, each connection a sequence of
/// request/response frames. Malformed frames close the connection.
class AuthServer {
public:
    AuthServer(ServerState& state, ServerOptions opts);
    ~AuthServer();
    AuthServer(const AuthServer&) = delete;
    AuthServer& operator=(const AuthServer&) = delete;

    void start();
    void stop();
    std::uint16_t port() const noexcept { return port_; }
    std::uint64_t requests_handled() const noexcept { return handled_.load(); }
    std::uint64_t protocol_errors() const noexcept { return protocol_errors_.load(); }

    void snapshot_filter();

private:
    void accept_loop();
    void serve_connection(int fd);
    void snapshot_loop();

    ServerState& state_;
    ServerOptions opts_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::thread snapshotter_;
    std::mutex conn_mutex_;
    std::vector<std::thread> connections_;
    std::vector<int> open_fds_;
    std::atomic<std::uint64_t> handled_{0};
    std::atomic<std::uint64_t> protocol_errors_{0};
    std::mutex snapshot_mutex_;
    std::condition_variable snapshot_cv_;
};

/// Blocking client connection.
class AuthClient {
public:
    AuthClient(const std::string& host, std::uint16_t port);
    ~AuthClient();
    AuthClient(const AuthClient&) = delete;
    AuthClient& operator=(const AuthClient&) = delete;

    wire::AuthResponse send(const wire::AuthRequest& req);
    /// Sends a raw payload (no validation) and reads one response frame.
    std::optional<Bytes> send_raw(std::span<const std::uint8_t> framed_bytes);
    int fd() const noexcept { return fd_; }

private:
    int fd_ = -1;
};

/// "host:port" -> pair.
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

}  // namespace pufauth
