#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pufauth/device.hpp"
#include "pufauth/openset.hpp"

namespace pufauth::harness {

/// A group of simulated devices of mixed type.
struct FleetSpec {
    std::uint32_t first_id = 1;
    int arbiter = 5;
    int memory = 5;
    double arbiter_flip_rate = 0.05;
    double memory_flip_prob = 0.0;
    double memory_bias_sharpness = 20.0;
    std::size_t memory_rows = 220;
    std::size_t memory_cols = 200;

    int total() const noexcept { return arbiter + memory; }
};

enum class AblationAxis { none, image_size, n_d, device_count };

struct ExperimentConfig {
    std::uint64_t master_seed = 1;
    FleetSpec legit{1, 5, 5};
    FleetSpec impostors{100001, 3, 2};
    std::size_t images_per_device = 60;
    std::uint16_t image_width = 50;
    std::uint16_t image_height = 50;
    std::array<int, 3> split{3, 1, 1};
    BackboneConfig backbone;
    ClosedSetHyperparams closed_set;
    GanHyperparams gan;
    Normalization norm;
    ThresholdRule threshold_rule = ThresholdRule::max_f1;
    double threshold_position = 0.5;
    double checkpoint_burn_in = 0.0;  // leading fraction of GAN checkpoints left out of selection
    int repeats = 5;
    AblationAxis ablation_axis = AblationAxis::none;
    std::vector<double> ablation_values;
};

/// Throws ConfigError listing every invalid field by path.
void validate(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 16 hex digits derived from the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

using Log = std::function<void(const std::string&)>;

/// Device ids run from spec.first_id upward; Arbiter devices come first.
/// Memory devices crop from the start of their flattened cell array.
std::vector<DeviceSpec> make_fleet(const FleetSpec& spec, std::uint64_t seed);

struct SplitData {
    LabeledDataset train, val, test;
    std::vector<Sample> val_impostor, test_impostor;
    std::vector<DeviceSpec> legit_devices, impostor_devices;
    std::map<std::uint32_t, int> registry;
};

/// Fleet generation, enrollment and the per-device 3:1:1 split (train takes
/// the rounding remainder). Impostor devices alternate between the validation
/// and test groups; none of their images reaches a training set.
SplitData build_datasets(const ExperimentConfig& cfg, std::uint64_t seed);

struct SeedResult {
    std::uint64_t seed = 0;
    MetricsReport test;
    double train_accuracy = 0.0;
    double val_f1 = 0.0;
    double tau = 0.0;
    int selected_epoch = -1;
    bool low_separation = false;
    double seconds = 0.0;
};

struct TrainedSeed {
    OpenSetModel model;
    SplitData data;
    SeedResult result;
};

/// Full pipeline for one seed: fleets -> enroll -> split -> closed-set ->
/// GAN -> calibration -> test evaluation.
TrainedSeed run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Log& log = {});

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (0 for one seed)
};

struct ExperimentResult {
    std::string label;  // ablation value or "base"
    ExperimentConfig config;
    std::vector<SeedResult> seeds;
    MetricSummary accuracy, far, frr, auroc, f1;
};

/// Seeds are derived from master_seed; returns mean and std per metric.
std::vector<std::uint64_t> experiment_seeds(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Log& log = {});

/// Re-runs the experiment per value of `axis`, all else fixed.
std::vector<ExperimentResult> run_ablation(const ExperimentConfig& cfg, AblationAxis axis,
                                           const std::vector<double>& values, const Log& log = {});

ExperimentConfig apply_ablation(ExperimentConfig cfg, AblationAxis axis, double value);

AblationAxis parse_axis(const std::string& s);
std::string to_string(AblationAxis a);

struct WireOverhead {
    std::size_t request_payload_bytes = 0;
    std::size_t framed_bytes = 0;
    std::size_t m1_bytes = 0;
    std::size_t m2_bytes = 0;
};

/// Serialized size of one auth request carrying a W x H image.
WireOverhead measure_wire_overhead(std::uint16_t w, std::uint16_t h);

/// results.json (config, seeds, per-seed metrics) and table.txt (mean +- std).
nlohmann::json results_json(const std::vector<ExperimentResult>& results, const WireOverhead& overhead);
std::string results_table(const std::vector<ExperimentResult>& results, AblationAxis axis);
void emit_report(const std::vector<ExperimentResult>& results, AblationAxis axis, const WireOverhead& overhead,
                 const std::filesystem::path& dir);

}  // namespace pufauth::harness
