#include "pufauth/device.hpp"

#include <fstream>

#include "pufauth/errors.hpp"

namespace pufauth {

namespace {

std::variant<ArbiterPuf, MemoryPuf> build_puf(const DeviceSpec& s) {
    Rng rng = make_rng(s.seed, 0);
    if (s.kind == PufKind::arbiter) {
        auto puf = ArbiterPuf::create(s.stages, 0.0, rng);
        puf.set_flip_rate(s.flip_rate);
        return puf;
    }
    return MemoryPuf::create(s.rows, s.cols, s.bias, s.flip_prob, rng);
}

}  // namespace

void to_json(nlohmann::json& j, const DeviceSpec& s) {
    j = nlohmann::json{{"id", s.id}, {"type", s.kind == PufKind::arbiter ? "arbiter" : "memory"}, {"seed", s.seed}};
    if (s.kind == PufKind::arbiter) {
        j["stages"] = s.stages;
        j["flip_rate"] = s.flip_rate;
        j["challenge"] = s.challenge;
        j["lfsr_taps"] = s.taps;
    } else {
        j["rows"] = s.rows;
        j["cols"] = s.cols;
        j["bias_weight_low"] = s.bias.weight_low;
        j["bias_weight_high"] = s.bias.weight_high;
        j["bias_sharpness"] = s.bias.sharpness;
        j["flip_prob"] = s.flip_prob;
        j["crop_row"] = s.crop_row;
        j["crop_col"] = s.crop_col;
    }
}

void from_json(const nlohmann::json& j, DeviceSpec& s) {
    s = DeviceSpec{};
    j.at("id").get_to(s.id);
    const auto type = j.at("type").get<std::string>();
    if (type == "arbiter")
        s.kind = PufKind::arbiter;
    else if (type == "memory")
        s.kind = PufKind::memory;
    else
        throw ConfigError("unknown device type '" + type + "'");
    j.at("seed").get_to(s.seed);
    s.stages = j.value("stages", s.stages);
    s.flip_rate = j.value("flip_rate", s.flip_rate);
    s.challenge = j.value("challenge", s.challenge);
    s.taps = j.value("lfsr_taps", s.taps);
    s.rows = j.value("rows", s.rows);
    s.cols = j.value("cols", s.cols);
    s.bias.weight_low = j.value("bias_weight_low", s.bias.weight_low);
    s.bias.weight_high = j.value("bias_weight_high", s.bias.weight_high);
    s.bias.sharpness = j.value("bias_sharpness", s.bias.sharpness);
    s.flip_prob = j.value("flip_prob", s.flip_prob);
    s.crop_row = j.value("crop_row", s.crop_row);
    s.crop_col = j.value("crop_col", s.crop_col);
}

Device::Device(DeviceSpec spec) : spec_(std::move(spec)), puf_(build_puf(spec_)), eval_rng_(make_rng(spec_.seed, 1)) {}

void Device::reseed_evaluations(std::uint64_t salt) { eval_rng_ = make_rng(spec_.seed, 2 + salt); }

BitMatrix Device::evaluate_raw(std::size_t n_bits) {
    if (const auto* apuf = std::get_if<ArbiterPuf>(&puf_)) {
        auto r = strong_puf_response_vector(*apuf, challenge(), spec_.taps, n_bits, eval_rng_);
        BitMatrix m;
        m.rows = 1;
        m.cols = r.size();
        m.bits = std::move(r);
        return m;
    }
    return std::get<MemoryPuf>(puf_).readout(eval_rng_);
}

PufImage Device::evaluate_image(std::uint16_t w, std::uint16_t h) {
    const std::size_t n = 8ull * w * h;
    BitMatrix raw = evaluate_raw(n);
    if (spec_.kind == PufKind::arbiter) return pack_bits_to_image(raw.bits, w, h);
    return crop_cell_array(raw, w, h, {spec_.crop_row, spec_.crop_col});
}

void write_fleet_file(const std::filesystem::path& path, const FleetFile& fleet) {
    nlohmann::json j{{"master_seed", fleet.master_seed}, {"devices", fleet.devices}};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

FleetFile read_fleet_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        FleetFile f;
        f.master_seed = j.at("master_seed").get<std::uint64_t>();
        f.devices = j.at("devices").get<std::vector<DeviceSpec>>();
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace pufauth
