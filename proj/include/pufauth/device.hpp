#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pufauth/image.hpp"
#include "pufauth/puf.hpp"

namespace pufauth {

enum class PufKind { arbiter, memory };

/// Everything needed to rebuild one simulated device bit-for-bit.
struct DeviceSpec {
    std::uint32_t id = 0;
    PufKind kind = PufKind::arbiter;
    std::uint64_t seed = 0;  // creation + evaluation streams derive from this

    // Arbiter
    unsigned stages = 32;
    double flip_rate = 0.05;  // pairwise disagreement between two evaluations
    std::uint64_t challenge = 1;
    std::vector<unsigned> taps = {32, 22, 2, 1};

    // Memory
    std::size_t rows = 220;
    std::size_t cols = 200;
    BiasMixture bias;
    double flip_prob = 0.0;
    std::size_t crop_row = 0;
    std::size_t crop_col = 0;
};

void to_json(nlohmann::json& j, const DeviceSpec& s);
void from_json(const nlohmann::json& j, DeviceSpec& s);

/// A simulated device. The PUF instance is fixed at construction; each call
/// to `evaluate*` models a fresh evaluation at a new time instant.
class Device {
public:
    explicit Device(DeviceSpec spec);

    const DeviceSpec& spec() const noexcept { return spec_; }
    std::uint32_t id() const noexcept { return spec_.id; }
    Challenge challenge() const noexcept { return {spec_.stages, spec_.challenge}; }

    /// Re-seeds the evaluation stream (e.g. to separate enrollment from field use).
    void reseed_evaluations(std::uint64_t salt);

    /// Raw response: N bits for Arbiter devices, the native cell array for memory devices.
    BitMatrix evaluate_raw(std::size_t n_bits);
    PufImage evaluate_image(std::uint16_t w, std::uint16_t h);

    const std::variant<ArbiterPuf, MemoryPuf>& puf() const noexcept { return puf_; }

private:
    DeviceSpec spec_;
    std::variant<ArbiterPuf, MemoryPuf> puf_;
    Rng eval_rng_;
};

/// Fleet file: {"master_seed": n, "devices": [DeviceSpec...]}.
struct FleetFile {
    std::uint64_t master_seed = 0;
    std::vector<DeviceSpec> devices;
};

void write_fleet_file(const std::filesystem::path& path, const FleetFile& fleet);
FleetFile read_fleet_file(const std::filesystem::path& path);

}  // namespace pufauth
