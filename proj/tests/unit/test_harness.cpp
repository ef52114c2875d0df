#include <set>

#include "doctest.h"
#include "pufauth/errors.hpp"
#include "pufauth/harness.hpp"

using namespace pufauth;
using namespace pufauth::harness;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.legit = {1, 2, 0, 0.0};
    c.impostors = {1001, 2, 0, 0.0};
    c.images_per_device = 10;
    c.image_width = c.image_height = 16;
    c.backbone.channels = {4, 8};
    c.closed_set.epochs = 20;
    c.closed_set.batch_size = 4;
    c.closed_set.optim.lr = 3e-3;
    c.gan.epochs = 4;
    c.gan.batch_size = 8;
    c.gan.n_d = c.gan.n_g = 16;
    c.gan.z_dim = 8;
    c.repeats = 1;
    return c;
}

std::string config_error_text(const ExperimentConfig& c) {
    try {
        validate(c);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("config: defaults validate and survive json") {
    ExperimentConfig c;
    CHECK_NOTHROW(validate(c));
    const auto back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
    c.master_seed = 2;
    CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("config: field errors name their paths") {
    auto c = ExperimentConfig{};
    c.impostors.first_id = 3;  // collides with ids 1..10
    CHECK(config_error_text(c).find("impostors") != std::string::npos);

    c = ExperimentConfig{};
    c.ablation_axis = AblationAxis::image_size;
    CHECK(config_error_text(c).find("ablation.values") != std::string::npos);

    c.ablation_values = {500};  // 8*500*500 bits do not fit in a 220x200 array
    CHECK(config_error_text(c).find("ablation.values") != std::string::npos);

    c = ExperimentConfig{};
    c.image_width = 0;
    c.split = {3, 0, 1};
    const auto text = config_error_text(c);
    CHECK(text.find("image") != std::string::npos);
    CHECK(text.find("split") != std::string::npos);

    c = ExperimentConfig{};
    c.checkpoint_burn_in = 1.0;
    c.gan.perturb_mix = 2.0;
    const auto text2 = config_error_text(c);
    CHECK(text2.find("checkpoint_burn_in") != std::string::npos);
    CHECK(text2.find("gan.perturb_mix") != std::string::npos);

    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"no_such_key", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_axis("colour"), ConfigError);
    CHECK(parse_axis("n_d") == AblationAxis::n_d);
}

TEST_CASE("fleet: ids, kinds and reproducibility") {
    FleetSpec s{100, 3, 2};
    const auto a = make_fleet(s, 7);
    const auto b = make_fleet(s, 7);
    REQUIRE(a.size() == 5);
    std::set<std::uint64_t> challenges;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == 100 + i);
        CHECK(a[i].kind == (i < 3 ? PufKind::arbiter : PufKind::memory));
        CHECK(a[i].seed == b[i].seed);
        CHECK(a[i].challenge == b[i].challenge);
        if (a[i].kind == PufKind::arbiter) {
            CHECK(a[i].challenge != 0);
            challenges.insert(a[i].challenge);
        }
    }
    CHECK(challenges.size() == 3);
    CHECK(make_fleet(s, 8)[0].seed != a[0].seed);
}

TEST_CASE("datasets: split sizes and impostor separation") {
    const auto c = tiny_config();
    const auto d = build_datasets(c, 5);
    CHECK(d.train.items.size() == 2 * 6);
    CHECK(d.val.items.size() == 2 * 2);
    CHECK(d.test.items.size() == 2 * 2);
    CHECK(d.val_impostor.size() == 10);
    CHECK(d.test_impostor.size() == 10);
    std::set<std::uint32_t> vi, ti;
    for (const auto& s : d.val_impostor) vi.insert(s.device_id);
    for (const auto& s : d.test_impostor) ti.insert(s.device_id);
    for (auto id : vi) CHECK(ti.count(id) == 0);
}

TEST_CASE("experiment: zero-noise toy run is learned and deterministic") {
    const auto c = tiny_config();
    const auto r1 = run_experiment(c);
    const auto r2 = run_experiment(c);
    REQUIRE(r1.seeds.size() == 1);
    CHECK(r1.seeds[0].train_accuracy == 1.0);
    const WireOverhead w = measure_wire_overhead(16, 16);
    CHECK(results_json({r1}, w).dump() == results_json({r2}, w).dump());
    CHECK(w.framed_bytes == w.request_payload_bytes + 4);
    CHECK(w.m2_bytes == 256);
    CHECK(w.m1_bytes == 16 * 16 + 12 + 16);
    const auto table = results_table({r1}, AblationAxis::none);
    CHECK(table.find("FAR") != std::string::npos);
}

TEST_CASE("ablation: values rewrite the intended field") {
    ExperimentConfig c;
    CHECK(apply_ablation(c, AblationAxis::n_d, 64).gan.n_d == 64);
    const auto s = apply_ablation(c, AblationAxis::image_size, 32);
    CHECK(s.image_width == 32);
    CHECK(s.image_height == 32);
    const auto d = apply_ablation(c, AblationAxis::device_count, 20);
    CHECK(d.legit.total() == 20);
}

TEST_CASE("config: the desk config loads") {
    const auto c = load_config(std::string(PUFAUTH_CONFIG_DIR) + "/desk.json");
    CHECK(c.legit.arbiter + c.legit.memory == 10);
    CHECK(c.images_per_device == 100);
    CHECK(c.checkpoint_burn_in == 0.5);
    CHECK(c.threshold_position == 0.9);
}
