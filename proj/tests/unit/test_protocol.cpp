#include <algorithm>
#include <atomic>
#include <thread>

#include "doctest.h"
#include "pufauth/errors.hpp"
#include "pufauth/protocol.hpp"
#include "server_fixture.hpp"

using namespace pufauth;
using testutil::ServerFixture;

TEST_CASE("protocol: legit request accepted, replay rejected") {
    ServerFixture fx;
    const auto req = fx.request(0);
    const auto first = handle_auth_request(req, *fx.state);
    CHECK(first.verdict == wire::Verdict::accept);
    CHECK(first.reason == wire::Reason::ok);
    CHECK(first.predicted == fx.state->model.registry.at(fx.devices[0].id()));
    const auto again = handle_auth_request(req, *fx.state);
    CHECK(again.verdict == wire::Verdict::reject);
    CHECK(again.reason == wire::Reason::replay);
    CHECK_FALSE(again.p_open.has_value());
    // A fresh session from the same device is fine.
    CHECK(handle_auth_request(fx.request(0), *fx.state).verdict == wire::Verdict::accept);
}

TEST_CASE("protocol: wrong claimed identity") {
    ServerFixture fx;
    auto& reg = fx.state->model.registry;
    // Find two devices with different labels, then present one under the other's id.
    std::size_t a = 0, b = 1;
    for (; b < fx.devices.size(); ++b)
        if (reg.at(fx.devices[b].id()) != reg.at(fx.devices[a].id())) break;
    if (b == fx.devices.size()) {
        reg[fx.devices[1].id()] = (reg.at(fx.devices[0].id()) + 1) % 4;
        b = 1;
    }
    const auto img = fx.devices[a].evaluate_image(fx.side, fx.side);
    const auto req = seal_image(fx.devices[b].id(), img, *fx.pk, fx.aead);
    const auto r = handle_auth_request(req, *fx.state);
    CHECK(r.verdict == wire::Verdict::reject);
    CHECK(r.reason == wire::Reason::identity_mismatch);

    const auto unknown = seal_image(424242, img, *fx.pk, fx.aead);
    CHECK(handle_auth_request(unknown, *fx.state).reason == wire::Reason::identity_mismatch);
}

TEST_CASE("protocol: tampered or re-addressed requests fail decryption") {
    ServerFixture fx;
    auto req = fx.request(1);
    auto tampered = req;
    tampered.m1[20] ^= 1;
    CHECK(handle_auth_request(tampered, *fx.state).reason == wire::Reason::decrypt_fail);

    auto readdressed = fx.request(1);
    readdressed.device_id = fx.devices[2].id();
    CHECK(handle_auth_request(readdressed, *fx.state).reason == wire::Reason::decrypt_fail);

    auto bad_key = fx.request(1);
    bad_key.m2[5] ^= 0x80;
    CHECK(handle_auth_request(bad_key, *fx.state).reason == wire::Reason::decrypt_fail);

    // Wrong geometry decrypts but is not an image the server can use.
    const auto small = seal_image(fx.devices[1].id(), fx.devices[1].evaluate_image(8, 8), *fx.pk, fx.aead);
    CHECK(handle_auth_request(small, *fx.state).reason == wire::Reason::decrypt_fail);
}

TEST_CASE("protocol: insertion policy") {
    ServerFixture fx;
    fx.state->insert_policy = ReplayInsertPolicy::after_accept;
    fx.state->model.tau = 1.0;  // everything is low confidence
    const auto req = fx.request(0);
    CHECK(handle_auth_request(req, *fx.state).reason == wire::Reason::low_confidence);
    CHECK(fx.state->filter.inserted() == 0);
    CHECK(handle_auth_request(req, *fx.state).reason == wire::Reason::low_confidence);

    fx.state->insert_policy = ReplayInsertPolicy::after_decrypt;
    CHECK(handle_auth_request(req, *fx.state).reason == wire::Reason::low_confidence);
    CHECK(fx.state->filter.inserted() == 1);
    CHECK(handle_auth_request(req, *fx.state).reason == wire::Reason::replay);
}

TEST_CASE("protocol: capacity warning fires once") {
    ServerFixture fx(2, 2, 0.01);
    int warnings = 0;
    fx.state->log = [&](const std::string& s) { warnings += s.find("capacity") != std::string::npos; };
    for (int i = 0; i < 5; ++i) handle_auth_request(fx.request(0), *fx.state);
    CHECK(warnings == 1);
}

TEST_CASE("protocol: ciphertext does not contain the image") {
    ServerFixture fx;
    const auto img = fx.devices[0].evaluate_image(fx.side, fx.side);
    const auto req = seal_image(fx.devices[0].id(), img, *fx.pk, fx.aead);
    const auto payload = wire::encode_request(req);
    // No 8-byte window of the pixels appears anywhere in the payload.
    for (std::size_t i = 0; i + 8 <= img.pixels.size(); i += 8) {
        const auto it = std::search(payload.begin(), payload.end(), img.pixels.begin() + i, img.pixels.begin() + i + 8);
        CHECK(it == payload.end());
    }
}

TEST_CASE("registry: duplicate ids conflict; enrollment needs images") {
    DeviceRegistry r;
    r.add(1, 0);
    CHECK_THROWS_AS(r.add(1, 1), RegistryConflict);

    std::vector<Device> fleet;
    DeviceSpec s;
    s.id = 3;
    fleet.emplace_back(s);
    CHECK_THROWS_AS(enroll_fleet(fleet, 0, 16, 16), PreconditionViolation);
    fleet.emplace_back(s);
    CHECK_THROWS_AS(enroll_fleet(fleet, 5, 16, 16), RegistryConflict);
    fleet.pop_back();
    const auto e = enroll_fleet(fleet, 6, 16, 16);
    CHECK(e.dataset.items.size() == 6);
    CHECK(e.registry.labels.at(3) == 0);
}

TEST_CASE("provisioning file round trip") {
    Provisioning p;
    p.device.id = 17;
    p.device.challenge = 0xdeadbeef;
    p.public_key_pem = "-----BEGIN PUBLIC KEY-----\nabc\n-----END PUBLIC KEY-----\n";
    p.image_width = 32;
    const auto path = std::filesystem::temp_directory_path() / "pufauth_prov_test.json";
    write_provisioning(path, p);
    const auto q = read_provisioning(path);
    CHECK(q.device.id == 17);
    CHECK(q.device.challenge == 0xdeadbeef);
    CHECK(q.public_key_pem == p.public_key_pem);
    CHECK(q.image_width == 32);
    std::filesystem::remove(path);
}

TEST_CASE("endpoint parsing") {
    CHECK(parse_endpoint("127.0.0.1:8080") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 8080});
    CHECK(parse_endpoint(":9").first == "127.0.0.1");
    CHECK_THROWS_AS(parse_endpoint("nohost"), ConfigError);
    CHECK_THROWS_AS(parse_endpoint("h:70000"), ConfigError);
}

TEST_CASE("server: concurrent devices over loopback") {
    ServerFixture fx(10);
    AuthServer server(*fx.state, {});
    server.start();
    REQUIRE(server.port() != 0);

    std::vector<wire::AuthRequest> reqs;
    for (std::size_t i = 0; i < 10; ++i) reqs.push_back(fx.request(i));
    std::atomic<int> accepted{0}, replays{0};
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < 10; ++i)
        threads.emplace_back([&, i] {
            AuthClient c("127.0.0.1", server.port());
            if (c.send(reqs[i]).verdict == wire::Verdict::accept) ++accepted;
            if (c.send(reqs[i]).reason == wire::Reason::replay) ++replays;
        });
    for (auto& t : threads) t.join();
    CHECK(accepted == 10);
    CHECK(replays == 10);
    CHECK(server.requests_handled() == 20);

    // A malformed frame closes the connection without taking the server down.
    {
        AuthClient c("127.0.0.1", server.port());
        const Bytes junk = wire::frame(Bytes{9, 9, 9});
        CHECK_FALSE(c.send_raw(junk).has_value());
    }
    AuthClient c("127.0.0.1", server.port());
    CHECK(c.send(fx.request(3)).verdict == wire::Verdict::accept);
    server.stop();
    CHECK(server.protocol_errors() >= 1);
}

TEST_CASE("server: filter snapshot survives restart") {
    ServerFixture fx;
    const auto path = std::filesystem::temp_directory_path() / "pufauth_filter_snapshot.bin";
    ServerOptions opts;
    opts.snapshot_path = path;
    const auto req = fx.request(2);
    {
        AuthServer server(*fx.state, opts);
        server.start();
        AuthClient c("127.0.0.1", server.port());
        CHECK(c.send(req).verdict == wire::Verdict::accept);
        server.snapshot_filter();
    }
    fx.state->filter = BloomFilter::load(path);
    CHECK(handle_auth_request(req, *fx.state).reason == wire::Reason::replay);
    std::filesystem::remove(path);
}
