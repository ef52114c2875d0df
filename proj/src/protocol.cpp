#include "pufauth/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pufauth/errors.hpp"

namespace pufauth {

void DeviceRegistry::add(std::uint32_t device_id, int label, std::string pk_fingerprint) {
    if (!labels.emplace(device_id, label).second)
        throw RegistryConflict("device id " + std::to_string(device_id) + " enrolled twice");
    pk_record[device_id] = std::move(pk_fingerprint);
}

Enrollment enroll_fleet(std::vector<Device>& fleet, std::size_t images_per_device, std::uint16_t w, std::uint16_t h,
                        const std::string& pk_fingerprint) {
    require(images_per_device >= 5, "enrollment needs at least 5 images per device");
    Enrollment e;
    e.dataset.split = Split::train;
    for (std::size_t i = 0; i < fleet.size(); ++i) e.registry.add(fleet[i].id(), static_cast<int>(i), pk_fingerprint);
    for (std::size_t i = 0; i < fleet.size(); ++i)
        for (std::size_t t = 0; t < images_per_device; ++t)
            e.dataset.items.push_back({fleet[i].evaluate_image(w, h), static_cast<int>(i), fleet[i].id()});
    return e;
}

void write_provisioning(const std::filesystem::path& path, const Provisioning& p) {
    nlohmann::json j{{"device", p.device},
                     {"public_key_pem", p.public_key_pem},
                     {"image_width", p.image_width},
                     {"image_height", p.image_height}};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Provisioning read_provisioning(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        Provisioning p;
        p.device = j.at("device").get<DeviceSpec>();
        p.public_key_pem = j.at("public_key_pem").get<std::string>();
        p.image_width = j.at("image_width").get<std::uint16_t>();
        p.image_height = j.at("image_height").get<std::uint16_t>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

wire::AuthRequest seal_image(std::uint32_t device_id, const PufImage& image, const crypto::PublicKeyCipher& pk,
                             const crypto::AeadCipher& aead) {
    const Bytes session_key = crypto::random_bytes(aead.key_size());
    wire::AuthRequest req;
    req.device_id = device_id;
    req.m1 = aead.seal(session_key, wire::request_aad(device_id), image.pixels);
    req.m2 = pk.encrypt(session_key);
    return req;
}

wire::AuthRequest build_auth_request(Device& device, const crypto::PublicKeyCipher& pk,
                                     const crypto::AeadCipher& aead, std::uint16_t w, std::uint16_t h) {
    return seal_image(device.id(), device.evaluate_image(w, h), pk, aead);
}

namespace {

wire::AuthResponse reject(wire::Reason r) { return {wire::Verdict::reject, r, std::nullopt, -1}; }

wire::AuthResponse classify(const Bytes& pixels, std::uint32_t device_id, const ServerState& state) {
    const auto& m = state.model;
    PufImage img{static_cast<std::uint16_t>(m.image_width), static_cast<std::uint16_t>(m.image_height), pixels};
    const auto it = m.registry.find(device_id);
    const int claimed = it == m.registry.end() ? -1 : it->second;
    const AuthDecision d = authenticate_image(m, to_model_input(img, m.norm), claimed);
    wire::AuthResponse r;
    r.p_open = d.p_open;
    r.predicted = d.predicted;
    r.verdict = d.accept ? wire::Verdict::accept : wire::Verdict::reject;
    r.reason = d.reason == DecisionReason::ok               ? wire::Reason::ok
               : d.reason == DecisionReason::low_confidence ? wire::Reason::low_confidence
                                                            : wire::Reason::identity_mismatch;
    return r;
}

}  // namespace

wire::AuthResponse handle_auth_request(const wire::AuthRequest& req, ServerState& state) {
    std::unique_lock lock(state.replay_mutex);
    if (state.filter.query(req.m2)) return reject(wire::Reason::replay);

    Bytes pixels;
    try {
        const Bytes key = state.sk->decrypt(req.m2);
        pixels = state.aead->open(key, wire::request_aad(req.device_id), req.m1);
    } catch (const Error&) {
        return reject(wire::Reason::decrypt_fail);
    }
    const std::size_t expected = static_cast<std::size_t>(state.model.image_width) * state.model.image_height;
    if (pixels.size() != expected) return reject(wire::Reason::decrypt_fail);

    auto remember = [&] {
        state.filter.insert(req.m2);
        if (state.filter_capacity && state.filter.inserted() > state.filter_capacity &&
            !state.saturation_warned.exchange(true))
            state.log("warning: replay filter exceeded its design capacity of " +
                      std::to_string(state.filter_capacity) + " entries");
    };

    if (state.insert_policy == ReplayInsertPolicy::after_decrypt) {
        remember();
        lock.unlock();
        return classify(pixels, req.device_id, state);
    }
    // after_accept: the verdict decides insertion, so classification stays in
    // the critical section.
    auto resp = classify(pixels, req.device_id, state);
    if (resp.verdict == wire::Verdict::accept) remember();
    return resp;
}

// ---------------------------------------------------------------------------

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw ConfigError("endpoint must be host:port, got '" + endpoint + "'");
    const std::string host = endpoint.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(endpoint.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad port in '" + endpoint + "'");
    }
    if (port < 0 || port > 65535) throw ConfigError("port out of range in '" + endpoint + "'");
    return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

AuthServer::AuthServer(ServerState& state, ServerOptions opts) : state_(state), opts_(std::move(opts)) {}

AuthServer::~AuthServer() { stop(); }

void AuthServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ProtocolError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opts_.port);
    if (::inet_pton(AF_INET, opts_.host.c_str(), &addr.sin_addr) != 1)
        throw ConfigError("listen address must be an IPv4 literal: " + opts_.host);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        const std::string err = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw ProtocolError("bind " + opts_.host + ":" + std::to_string(opts_.port) + ": " + err);
    }
    if (::listen(listen_fd_, 64) != 0) throw ProtocolError(std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    if (!opts_.snapshot_path.empty()) snapshotter_ = std::thread([this] { snapshot_loop(); });
    state_.log("listening on " + opts_.host + ":" + std::to_string(port_));
}

void AuthServer::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable()) acceptor_.join();
    {
        std::lock_guard lock(conn_mutex_);
        for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : connections_)
        if (t.joinable()) t.join();
    connections_.clear();
    snapshot_cv_.notify_all();
    if (snapshotter_.joinable()) snapshotter_.join();
    if (!opts_.snapshot_path.empty()) snapshot_filter();
}

void AuthServer::snapshot_filter() {
    std::vector<std::uint8_t> snap;
    {
        std::lock_guard lock(state_.replay_mutex);
        snap = state_.filter.snapshot();
    }
    auto tmp = opts_.snapshot_path;
    tmp += ".tmp";
    write_file(tmp, snap);
    std::filesystem::rename(tmp, opts_.snapshot_path);
}

void AuthServer::snapshot_loop() {
    std::unique_lock lock(snapshot_mutex_);
    while (running_) {
        snapshot_cv_.wait_for(lock, opts_.snapshot_interval, [this] { return !running_; });
        if (!running_) break;
        try {
            snapshot_filter();
        } catch (const std::exception& e) {
            state_.log(std::string("filter snapshot failed: ") + e.what());
        }
    }
}

void AuthServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_) break;
            if (errno == EINTR || errno == ECONNABORTED) continue;
            break;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(conn_mutex_);
        if (!running_) {
            ::close(fd);
            break;
        }
        open_fds_.push_back(fd);
        connections_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void AuthServer::serve_connection(int fd) {
    try {
        while (running_) {
            auto payload = wire::read_frame(fd, opts_.max_frame);
            if (!payload) break;
            const auto t0 = std::chrono::steady_clock::now();
            const auto req = wire::decode_request(*payload);
            const auto resp = handle_auth_request(req, state_);
            ++handled_;
            wire::write_frame(fd, wire::encode_response(resp));
            const auto us =
                std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0).count();
            std::ostringstream msg;
            msg << "device " << req.device_id << " -> "
                << (resp.verdict == wire::Verdict::accept ? "accept" : "reject") << " (" << wire::to_string(resp.reason)
                << ") in " << us << " us";
            state_.log(msg.str());
        }
    } catch (const ProtocolError& e) {
        ++protocol_errors_;
        state_.log(std::string("closing connection: ") + e.what());
    } catch (const std::exception& e) {
        ++protocol_errors_;
        state_.log(std::string("connection error: ") + e.what());
    }
    std::lock_guard lock(conn_mutex_);
    std::erase(open_fds_, fd);
    ::close(fd);
}

AuthClient::AuthClient(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw ProtocolError("cannot resolve " + host);
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        const std::string err = std::strerror(errno);
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
        throw ProtocolError("connect " + host + ":" + std::to_string(port) + ": " + err);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

AuthClient::~AuthClient() {
    if (fd_ >= 0) ::close(fd_);
}

wire::AuthResponse AuthClient::send(const wire::AuthRequest& req) {
    wire::write_frame(fd_, wire::encode_request(req));
    auto resp = wire::read_frame(fd_);
    if (!resp) throw ProtocolError("server closed the connection");
    return wire::decode_response(*resp);
}

std::optional<Bytes> AuthClient::send_raw(std::span<const std::uint8_t> framed_bytes) {
    std::size_t off = 0;
    while (off < framed_bytes.size()) {
        const ssize_t w = ::send(fd_, framed_bytes.data() + off, framed_bytes.size() - off, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            return std::nullopt;
        }
        off += static_cast<std::size_t>(w);
    }
    try {
        return wire::read_frame(fd_);
    } catch (const ProtocolError&) {
        return std::nullopt;
    }
}

}  // namespace pufauth
