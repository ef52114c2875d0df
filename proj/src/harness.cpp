#include "pufauth/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "pufauth/bloom.hpp"
#include "pufauth/crypto.hpp"
#include "pufauth/errors.hpp"
#include "pufauth/protocol.hpp"
#include "pufauth/wire.hpp"

namespace pufauth::harness {

using nlohmann::json;

namespace {

bool fits_memory(const FleetSpec& f, std::size_t w, std::size_t h) {
    return f.memory == 0 || 8 * w * h <= f.memory_rows * f.memory_cols;
}

void check_fleet(const FleetSpec& f, const std::string& path, std::vector<std::string>& errs) {
    if (f.arbiter < 0) errs.push_back(path + ".arbiter: must be >= 0");
    if (f.memory < 0) errs.push_back(path + ".memory: must be >= 0");
    if (!(f.arbiter_flip_rate >= 0.0 && f.arbiter_flip_rate < 0.5))
        errs.push_back(path + ".arbiter_flip_rate: must be in [0, 0.5)");
    if (!(f.memory_flip_prob >= 0.0 && f.memory_flip_prob < 0.5))
        errs.push_back(path + ".memory_flip_prob: must be in [0, 0.5)");
    if (!(f.memory_bias_sharpness > 0.0)) errs.push_back(path + ".memory_bias_sharpness: must be positive");
    if (f.memory > 0 && (f.memory_rows == 0 || f.memory_cols == 0))
        errs.push_back(path + ".memory_rows/memory_cols: must be positive");
    if (f.first_id == 0) errs.push_back(path + ".first_id: device id 0 is reserved");
}

bool is_integer(double v) { return std::isfinite(v) && v == std::floor(v); }

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& path, std::vector<std::string>& errs) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        errs.push_back(path + "." + key + ": wrong type");
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& path,
                    std::vector<std::string>& errs) {
    if (!j.is_object()) {
        errs.push_back(path + ": expected an object");
        return;
    }
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* name : known) ok = ok || k == name;
        if (!ok) errs.push_back(path + "." + k + ": unknown key");
    }
}

json fleet_json(const FleetSpec& f) {
    return {{"first_id", f.first_id},
            {"arbiter", f.arbiter},
            {"memory", f.memory},
            {"arbiter_flip_rate", f.arbiter_flip_rate},
            {"memory_flip_prob", f.memory_flip_prob},
            {"memory_bias_sharpness", f.memory_bias_sharpness},
            {"memory_rows", f.memory_rows},
            {"memory_cols", f.memory_cols}};
}

void fleet_from(const json& j, FleetSpec& f, const std::string& path, std::vector<std::string>& errs) {
    reject_unknown(j,
                   {"first_id", "arbiter", "memory", "arbiter_flip_rate", "memory_flip_prob",
                    "memory_bias_sharpness", "memory_rows", "memory_cols"},
                   path, errs);
    if (!j.is_object()) return;
    read_opt(j, "first_id", f.first_id, path, errs);
    read_opt(j, "arbiter", f.arbiter, path, errs);
    read_opt(j, "memory", f.memory, path, errs);
    read_opt(j, "arbiter_flip_rate", f.arbiter_flip_rate, path, errs);
    read_opt(j, "memory_flip_prob", f.memory_flip_prob, path, errs);
    read_opt(j, "memory_bias_sharpness", f.memory_bias_sharpness, path, errs);
    read_opt(j, "memory_rows", f.memory_rows, path, errs);
    read_opt(j, "memory_cols", f.memory_cols, path, errs);
}

MetricSummary summarize(const std::vector<double>& v) {
    MetricSummary s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

void say(const Log& log, const std::string& msg) {
    if (log) log(msg);
}

std::string fmt(const char* f, double a, double b) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

}  // namespace

AblationAxis parse_axis(const std::string& s) {
    if (s == "none") return AblationAxis::none;
    if (s == "image_size") return AblationAxis::image_size;
    if (s == "n_d") return AblationAxis::n_d;
    if (s == "device_count") return AblationAxis::device_count;
    throw ConfigError("ablation.axis: unknown axis '" + s + "'");
}

std::string to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::none: return "none";
        case AblationAxis::image_size: return "image_size";
        case AblationAxis::n_d: return "n_d";
        case AblationAxis::device_count: return "device_count";
    }
    return "none";
}

void validate(const ExperimentConfig& c) {
    std::vector<std::string> errs;
    check_fleet(c.legit, "fleet", errs);
    check_fleet(c.impostors, "impostors", errs);
    if (c.legit.total() < 2) errs.push_back("fleet: need at least 2 legitimate devices");
    if (c.impostors.total() < 2)
        errs.push_back("impostors: need at least 2 impostor devices (one for validation, one for test)");

    const auto ids = [](const FleetSpec& f) {
        return std::pair<std::uint64_t, std::uint64_t>{f.first_id, std::uint64_t(f.first_id) + f.total()};
    };
    const auto [l0, l1] = ids(c.legit);
    const auto [i0, i1] = ids(c.impostors);
    if (l0 < i1 && i0 < l1) errs.push_back("impostors.first_id: impostor device ids overlap the legitimate fleet");
    if (l1 > 0xFFFFFFFFull || i1 > 0xFFFFFFFFull) errs.push_back("fleet/impostors: device ids exceed 32 bits");

    if (c.image_width == 0 || c.image_height == 0) errs.push_back("image: width and height must be positive");
    if (!fits_memory(c.legit, c.image_width, c.image_height))
        errs.push_back("image: 8*W*H bits exceed the memory-cell array of fleet");
    if (!fits_memory(c.impostors, c.image_width, c.image_height))
        errs.push_back("image: 8*W*H bits exceed the memory-cell array of impostors");

    int ratio_sum = 0;
    for (int r : c.split) {
        if (r <= 0) errs.push_back("split: ratios must be positive");
        ratio_sum += r;
    }
    if (c.images_per_device < 5) errs.push_back("images_per_device: must be >= 5");
    if (ratio_sum > 0 && c.split[1] > 0 && c.split[2] > 0) {
        const std::size_t nv = c.images_per_device * c.split[1] / ratio_sum;
        const std::size_t nt = c.images_per_device * c.split[2] / ratio_sum;
        if (nv == 0 || nt == 0) errs.push_back("images_per_device: too few images to fill every split");
    }

    if (c.repeats < 1) errs.push_back("repeats: must be >= 1");
    if (c.backbone.channels.empty()) errs.push_back("backbone.channels: must not be empty");
    for (int ch : c.backbone.channels)
        if (ch <= 0) errs.push_back("backbone.channels: must be positive");
    if (c.backbone.kernel <= 0 || c.backbone.kernel % 2 == 0) errs.push_back("backbone.kernel: must be odd and positive");
    if (c.backbone.stride <= 0) errs.push_back("backbone.stride: must be positive");
    if (c.closed_set.epochs < 1) errs.push_back("closed_set.epochs: must be >= 1");
    if (c.closed_set.batch_size < 1) errs.push_back("closed_set.batch_size: must be >= 1");
    if (!(c.closed_set.optim.lr > 0.0)) errs.push_back("closed_set.lr: must be positive");
    if (c.gan.epochs < 1) errs.push_back("gan.epochs: must be >= 1");
    if (c.gan.batch_size < 1) errs.push_back("gan.batch_size: must be >= 1");
    if (c.gan.z_dim < 1) errs.push_back("gan.z_dim: must be >= 1");
    if (c.gan.n_g < 1) errs.push_back("gan.n_g: must be >= 1");
    if (c.gan.n_d < 1) errs.push_back("gan.n_d: must be >= 1");
    if (!(c.gan.lr_g > 0.0) || !(c.gan.lr_d > 0.0)) errs.push_back("gan.lr_g/lr_d: must be positive");
    if (!(c.gan.perturb_fraction >= 0.0)) errs.push_back("gan.perturb_fraction: must be >= 0");
    if (!(c.gan.perturb_scale > 0.0)) errs.push_back("gan.perturb_scale: must be positive");
    if (!(c.gan.perturb_mix >= 0.0 && c.gan.perturb_mix <= 1.0)) errs.push_back("gan.perturb_mix: must be in [0, 1]");
    if (!(c.gan.d_ema_decay >= 0.0 && c.gan.d_ema_decay < 1.0)) errs.push_back("gan.d_ema_decay: must be in [0, 1)");
    if (!(c.gan.real_label > c.gan.fake_label)) errs.push_back("gan.real_label: must exceed fake_label");
    if (!(c.threshold_position >= 0.0 && c.threshold_position < 1.0))
        errs.push_back("threshold_position: must be in [0, 1)");
    if (!(c.checkpoint_burn_in >= 0.0 && c.checkpoint_burn_in < 1.0))
        errs.push_back("checkpoint_burn_in: must be in [0, 1)");
    for (float sd : c.norm.std)
        if (!(sd > 0.0f)) errs.push_back("normalization.std: must be positive");

    if (c.ablation_axis != AblationAxis::none) {
        if (c.ablation_values.empty()) errs.push_back("ablation.values: must not be empty");
        for (double v : c.ablation_values) {
            if (!is_integer(v) || v < 1) {
                errs.push_back("ablation.values: " + std::to_string(v) + " is not a positive integer");
                continue;
            }
            if (c.ablation_axis == AblationAxis::image_size) {
                const auto s = static_cast<std::size_t>(v);
                if (s > 0xFFFF || !fits_memory(c.legit, s, s) || !fits_memory(c.impostors, s, s))
                    errs.push_back("ablation.values: image size " + std::to_string(s) +
                                   " does not fit in the device response");
            }
            if (c.ablation_axis == AblationAxis::device_count && v < 2)
                errs.push_back("ablation.values: device_count must be >= 2");
        }
    }

    if (!errs.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ConfigError(msg);
    }
}

json to_json(const ExperimentConfig& c) {
    return {{"master_seed", c.master_seed},
            {"fleet", fleet_json(c.legit)},
            {"impostors", fleet_json(c.impostors)},
            {"images_per_device", c.images_per_device},
            {"image", {{"width", c.image_width}, {"height", c.image_height}}},
            {"split", c.split},
            {"backbone", {{"channels", c.backbone.channels}, {"kernel", c.backbone.kernel}, {"stride", c.backbone.stride}}},
            {"closed_set",
             {{"epochs", c.closed_set.epochs},
              {"batch_size", c.closed_set.batch_size},
              {"lr", c.closed_set.optim.lr},
              {"beta1", c.closed_set.optim.beta1},
              {"beta2", c.closed_set.optim.beta2},
              {"eps", c.closed_set.optim.eps},
              {"weight_decay", c.closed_set.optim.weight_decay}}},
            {"gan",
             {{"epochs", c.gan.epochs},
              {"batch_size", c.gan.batch_size},
              {"z_dim", c.gan.z_dim},
              {"n_g", c.gan.n_g},
              {"n_d", c.gan.n_d},
              {"lr_g", c.gan.lr_g},
              {"lr_d", c.gan.lr_d},
              {"weight_decay", c.gan.weight_decay},
              {"real_label", c.gan.real_label},
              {"fake_label", c.gan.fake_label},
              {"lambda_g", c.gan.lambda_g},
              {"standardize_features", c.gan.standardize_features},
              {"d_ema_decay", c.gan.d_ema_decay},
              {"perturb_fraction", c.gan.perturb_fraction},
              {"perturb_scale", c.gan.perturb_scale},
              {"perturb_mix", c.gan.perturb_mix}}},
            {"normalization", {{"mean", c.norm.mean}, {"std", c.norm.std}}},
            {"threshold_rule", c.threshold_rule == ThresholdRule::max_f1 ? "max_f1" : "eer"},
            {"threshold_position", c.threshold_position},
            {"checkpoint_burn_in", c.checkpoint_burn_in},
            {"repeats", c.repeats},
            {"ablation", {{"axis", to_string(c.ablation_axis)}, {"values", c.ablation_values}}}};
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    std::vector<std::string> errs;
    reject_unknown(j,
                   {"master_seed", "fleet", "impostors", "images_per_device", "image", "split", "backbone",
                    "closed_set", "gan", "normalization", "threshold_rule", "threshold_position", "checkpoint_burn_in",
                    "repeats", "ablation"},
                   "config", errs);
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    read_opt(j, "master_seed", c.master_seed, "config", errs);
    if (j.contains("fleet")) fleet_from(j["fleet"], c.legit, "fleet", errs);
    if (j.contains("impostors")) fleet_from(j["impostors"], c.impostors, "impostors", errs);
    read_opt(j, "images_per_device", c.images_per_device, "config", errs);
    if (j.contains("image")) {
        reject_unknown(j["image"], {"width", "height"}, "image", errs);
        read_opt(j["image"], "width", c.image_width, "image", errs);
        read_opt(j["image"], "height", c.image_height, "image", errs);
    }
    read_opt(j, "split", c.split, "config", errs);
    if (j.contains("backbone")) {
        const auto& b = j["backbone"];
        reject_unknown(b, {"channels", "kernel", "stride"}, "backbone", errs);
        read_opt(b, "channels", c.backbone.channels, "backbone", errs);
        read_opt(b, "kernel", c.backbone.kernel, "backbone", errs);
        read_opt(b, "stride", c.backbone.stride, "backbone", errs);
    }
    if (j.contains("closed_set")) {
        const auto& s = j["closed_set"];
        reject_unknown(s, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "weight_decay"}, "closed_set", errs);
        read_opt(s, "epochs", c.closed_set.epochs, "closed_set", errs);
        read_opt(s, "batch_size", c.closed_set.batch_size, "closed_set", errs);
        read_opt(s, "lr", c.closed_set.optim.lr, "closed_set", errs);
        read_opt(s, "beta1", c.closed_set.optim.beta1, "closed_set", errs);
        read_opt(s, "beta2", c.closed_set.optim.beta2, "closed_set", errs);
        read_opt(s, "eps", c.closed_set.optim.eps, "closed_set", errs);
        read_opt(s, "weight_decay", c.closed_set.optim.weight_decay, "closed_set", errs);
    }
    if (j.contains("gan")) {
        const auto& g = j["gan"];
        reject_unknown(g,
                       {"epochs", "batch_size", "z_dim", "n_g", "n_d", "lr_g", "lr_d", "weight_decay", "real_label",
                        "fake_label", "lambda_g", "standardize_features", "d_ema_decay", "perturb_fraction",
                        "perturb_scale", "perturb_mix"},
                       "gan", errs);
        read_opt(g, "epochs", c.gan.epochs, "gan", errs);
        read_opt(g, "batch_size", c.gan.batch_size, "gan", errs);
        read_opt(g, "z_dim", c.gan.z_dim, "gan", errs);
        read_opt(g, "n_g", c.gan.n_g, "gan", errs);
        read_opt(g, "n_d", c.gan.n_d, "gan", errs);
        read_opt(g, "lr_g", c.gan.lr_g, "gan", errs);
        read_opt(g, "lr_d", c.gan.lr_d, "gan", errs);
        read_opt(g, "weight_decay", c.gan.weight_decay, "gan", errs);
        read_opt(g, "real_label", c.gan.real_label, "gan", errs);
        read_opt(g, "fake_label", c.gan.fake_label, "gan", errs);
        read_opt(g, "lambda_g", c.gan.lambda_g, "gan", errs);
        read_opt(g, "standardize_features", c.gan.standardize_features, "gan", errs);
        read_opt(g, "d_ema_decay", c.gan.d_ema_decay, "gan", errs);
        read_opt(g, "perturb_fraction", c.gan.perturb_fraction, "gan", errs);
        read_opt(g, "perturb_scale", c.gan.perturb_scale, "gan", errs);
        read_opt(g, "perturb_mix", c.gan.perturb_mix, "gan", errs);
    }
    if (j.contains("normalization")) {
        reject_unknown(j["normalization"], {"mean", "std"}, "normalization", errs);
        read_opt(j["normalization"], "mean", c.norm.mean, "normalization", errs);
        read_opt(j["normalization"], "std", c.norm.std, "normalization", errs);
    }
    if (j.contains("threshold_rule")) {
        std::string r;
        read_opt(j, "threshold_rule", r, "config", errs);
        if (r == "max_f1") c.threshold_rule = ThresholdRule::max_f1;
        else if (r == "eer") c.threshold_rule = ThresholdRule::equal_error_rate;
        else errs.push_back("threshold_rule: expected max_f1 or eer");
    }
    read_opt(j, "threshold_position", c.threshold_position, "config", errs);
    read_opt(j, "checkpoint_burn_in", c.checkpoint_burn_in, "config", errs);
    read_opt(j, "repeats", c.repeats, "config", errs);
    if (j.contains("ablation")) {
        const auto& a = j["ablation"];
        reject_unknown(a, {"axis", "values"}, "ablation", errs);
        std::string axis = "none";
        read_opt(a, "axis", axis, "ablation", errs);
        try {
            c.ablation_axis = parse_axis(axis);
        } catch (const ConfigError& e) {
            errs.push_back(e.what());
        }
        read_opt(a, "values", c.ablation_values, "ablation", errs);
    }
    if (!errs.empty()) {
        std::string msg = "invalid experiment config:";
        for (const auto& e : errs) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string s = to_json(cfg).dump();
    const auto h = hash64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, 0x5eedc0de);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<DeviceSpec> make_fleet(const FleetSpec& f, std::uint64_t seed) {
    std::vector<DeviceSpec> out;
    Rng rng(seed);
    const int n = f.total();
    for (int i = 0; i < n; ++i) {
        DeviceSpec d;
        d.id = f.first_id + static_cast<std::uint32_t>(i);
        d.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        if (i < f.arbiter) {
            d.kind = PufKind::arbiter;
            d.flip_rate = f.arbiter_flip_rate;
            std::uniform_int_distribution<std::uint64_t> c(1, 0xFFFFFFFFull);
            d.challenge = c(rng);
        } else {
            d.kind = PufKind::memory;
            d.rows = f.memory_rows;
            d.cols = f.memory_cols;
            d.bias.sharpness = f.memory_bias_sharpness;
            d.flip_prob = f.memory_flip_prob;
        }
        out.push_back(std::move(d));
    }
    return out;
}

SplitData build_datasets(const ExperimentConfig& cfg, std::uint64_t seed) {
    SplitData s;
    s.legit_devices = make_fleet(cfg.legit, derive_seed(seed, 1));
    s.impostor_devices = make_fleet(cfg.impostors, derive_seed(seed, 2));

    std::vector<Device> legit(s.legit_devices.begin(), s.legit_devices.end());
    auto enrollment = enroll_fleet(legit, cfg.images_per_device, cfg.image_width, cfg.image_height);
    s.registry = enrollment.registry.labels;

    const int sum = cfg.split[0] + cfg.split[1] + cfg.split[2];
    const std::size_t n = cfg.images_per_device;
    const std::size_t n_val = n * cfg.split[1] / sum;
    const std::size_t n_test = n * cfg.split[2] / sum;
    const std::size_t n_train = n - n_val - n_test;
    s.train.split = Split::train;
    s.val.split = Split::val;
    s.test.split = Split::test;
    // enroll_fleet emits each device's images contiguously.
    for (std::size_t i = 0; i < enrollment.dataset.items.size(); ++i) {
        const std::size_t t = i % n;
        auto& dst = t < n_train ? s.train : (t < n_train + n_val ? s.val : s.test);
        dst.items.push_back(std::move(enrollment.dataset.items[i]));
    }

    for (std::size_t i = 0; i < s.impostor_devices.size(); ++i) {
        Device dev(s.impostor_devices[i]);
        auto& dst = i % 2 == 0 ? s.val_impostor : s.test_impostor;
        for (std::size_t t = 0; t < n; ++t) dst.push_back({dev.evaluate_image(cfg.image_width, cfg.image_height), -1, dev.id()});
    }
    return s;
}

TrainedSeed run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Log& log) {
    const auto t0 = std::chrono::steady_clock::now();
    SplitData data = build_datasets(cfg, seed);
    const int k = cfg.legit.total();

    Rng cs_rng = make_rng(seed, 3);
    auto closed = train_closed_set(data.train, k, cfg.backbone, cfg.closed_set, cfg.norm, cs_rng);
    closed.model.freeze();
    say(log, "seed " + std::to_string(seed) + ": closed-set loss " + std::to_string(closed.final_loss) +
                 ", train acc " + std::to_string(closed.train_accuracy));

    const auto train_emb = embed(closed.model, data.train.items, cfg.norm);
    Rng gan_rng = make_rng(seed, 4);
    auto gan = train_open_gan(closed.model, train_emb.features, cfg.gan, gan_rng);

    const auto val_emb = embed(closed.model, data.val.items, cfg.norm);
    std::vector<int> val_labels;
    for (const auto& smp : data.val.items) val_labels.push_back(smp.label);
    const auto val_imp = embed(closed.model, data.val_impostor, cfg.norm);
    const Calibration cal =
        calibrate_threshold(gan.checkpoints, val_emb, val_labels, val_imp.features, cfg.threshold_rule,
                            cfg.threshold_position,
                            static_cast<std::size_t>(cfg.checkpoint_burn_in * double(gan.checkpoints.size())));

    OpenSetModel model{std::move(closed.model), gan.checkpoints[cal.checkpoint]};
    model.tau = cal.choice.tau;
    model.norm = cfg.norm;
    model.image_width = cfg.image_width;
    model.image_height = cfg.image_height;
    model.selected_epoch = static_cast<int>(cal.checkpoint);
    model.val_f1 = cal.choice.f1;
    model.low_separation = cal.choice.low_separation;
    model.registry = data.registry;
    json meta{{"seed", seed},
              {"config_hash", config_hash(cfg)},
              {"train_accuracy", closed.train_accuracy},
              {"closed_set_final_loss", closed.final_loss},
              {"gan_d_loss", gan.d_loss},
              {"gan_g_loss", gan.g_loss}};
    model.training_metadata = meta.dump();
    if (model.low_separation) say(log, "seed " + std::to_string(seed) + ": warning: low separation on validation");

    SeedResult r;
    r.seed = seed;
    r.test = evaluate(model, data.test.items, data.test_impostor);
    r.train_accuracy = closed.train_accuracy;
    r.val_f1 = cal.choice.f1;
    r.tau = cal.choice.tau;
    r.selected_epoch = model.selected_epoch;
    r.low_separation = model.low_separation;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    say(log, "seed " + std::to_string(seed) + ": acc " + std::to_string(r.test.closed_set_accuracy) + " FAR " +
                 std::to_string(r.test.far) + " FRR " + std::to_string(r.test.frr) + " F1 " +
                 std::to_string(r.test.f1) + " tau " + std::to_string(r.tau) + " (" + std::to_string(r.seconds) +
                 " s)");
    return {std::move(model), std::move(data), r};
}

std::vector<std::uint64_t> experiment_seeds(const ExperimentConfig& cfg) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.repeats; ++i) seeds.push_back(derive_seed(cfg.master_seed, 1000 + i));
    return seeds;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Log& log) {
    validate(cfg);
    ExperimentResult res;
    res.label = "base";
    res.config = cfg;
    for (std::uint64_t seed : experiment_seeds(cfg)) res.seeds.push_back(run_seed(cfg, seed, log).result);
    std::vector<double> acc, far, frr, au, f1;
    for (const auto& s : res.seeds) {
        acc.push_back(s.test.closed_set_accuracy);
        far.push_back(s.test.far);
        frr.push_back(s.test.frr);
        au.push_back(s.test.auroc);
        f1.push_back(s.test.f1);
    }
    res.accuracy = summarize(acc);
    res.far = summarize(far);
    res.frr = summarize(frr);
    res.auroc = summarize(au);
    res.f1 = summarize(f1);
    return res;
}

ExperimentConfig apply_ablation(ExperimentConfig cfg, AblationAxis axis, double value) {
    const int v = static_cast<int>(value);
    switch (axis) {
        case AblationAxis::image_size:
            cfg.image_width = cfg.image_height = static_cast<std::uint16_t>(v);
            break;
        case AblationAxis::n_d:
            cfg.gan.n_d = v;
            break;
        case AblationAxis::device_count: {
            // Keep the Arbiter/memory proportion of the base fleet.
            const int total = cfg.legit.total();
            const int arb = total > 0 ? static_cast<int>(std::lround(double(v) * cfg.legit.arbiter / total)) : 0;
            cfg.legit.arbiter = arb;
            cfg.legit.memory = v - arb;
            break;
        }
        case AblationAxis::none:
            throw ConfigError("ablation.axis: must be image_size, n_d or device_count");
    }
    cfg.ablation_axis = AblationAxis::none;
    cfg.ablation_values.clear();
    return cfg;
}

std::vector<ExperimentResult> run_ablation(const ExperimentConfig& cfg, AblationAxis axis,
                                           const std::vector<double>& values, const Log& log) {
    if (axis == AblationAxis::none) throw ConfigError("ablation.axis: must be image_size, n_d or device_count");
    if (values.empty()) throw ConfigError("ablation.values: must not be empty");
    ExperimentConfig check = cfg;
    check.ablation_axis = axis;
    check.ablation_values = values;
    validate(check);

    std::vector<ExperimentResult> out;
    for (double v : values) {
        ExperimentConfig c = apply_ablation(cfg, axis, v);
        validate(c);
        say(log, to_string(axis) + " = " + std::to_string(static_cast<long long>(v)));
        auto r = run_experiment(c, log);
        r.label = std::to_string(static_cast<long long>(v));
        out.push_back(std::move(r));
    }
    return out;
}

WireOverhead measure_wire_overhead(std::uint16_t w, std::uint16_t h) {
    const auto sk = crypto::RsaOaepPrivateKey::generate(2048);
    const auto pk = sk->public_key();
    const crypto::Aes256Gcm aead;
    PufImage img{w, h, std::vector<std::uint8_t>(std::size_t(w) * h, 0xA5)};
    const auto req = seal_image(1, img, *pk, aead);
    WireOverhead o;
    o.request_payload_bytes = wire::encode_request(req).size();
    o.framed_bytes = wire::frame(wire::encode_request(req)).size();
    o.m1_bytes = req.m1.size();
    o.m2_bytes = req.m2.size();
    return o;
}

namespace {

json metrics_json(const MetricsReport& m) {
    return {{"accuracy", m.closed_set_accuracy}, {"far", m.far},         {"frr", m.frr},
            {"auroc", m.auroc},                  {"f1", m.f1},           {"n_legit", m.n_legit},
            {"n_impostor", m.n_impostor}};
}

json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

}  // namespace

json results_json(const std::vector<ExperimentResult>& results, const WireOverhead& o) {
    if (results.empty()) throw PreconditionViolation("no results to report");
    json j;
    j["master_seed"] = results.front().config.master_seed;
    j["config_hash"] = config_hash(results.front().config);
    j["wire_overhead"] = {{"request_payload_bytes", o.request_payload_bytes},
                          {"framed_bytes", o.framed_bytes},
                          {"m1_bytes", o.m1_bytes},
                          {"m2_bytes", o.m2_bytes},
                          {"reference_bytes", 2958}};
    json runs = json::array();
    for (const auto& r : results) {
        json seeds = json::array();
        for (const auto& s : r.seeds)
            seeds.push_back({{"seed", s.seed},
                             {"test", metrics_json(s.test)},
                             {"train_accuracy", s.train_accuracy},
                             {"val_f1", s.val_f1},
                             {"tau", s.tau},
                             {"selected_epoch", s.selected_epoch},
                             {"low_separation", s.low_separation}});
        runs.push_back({{"label", r.label},
                        {"config", to_json(r.config)},
                        {"seeds", seeds},
                        {"summary",
                         {{"accuracy", summary_json(r.accuracy)},
                          {"far", summary_json(r.far)},
                          {"frr", summary_json(r.frr)},
                          {"auroc", summary_json(r.auroc)},
                          {"f1", summary_json(r.f1)}}}});
    }
    j["runs"] = runs;
    return j;
}

std::string results_table(const std::vector<ExperimentResult>& results, AblationAxis axis) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %-16s %-16s %-16s %-16s %-16s\n",
                  axis == AblationAxis::none ? "run" : to_string(axis).c_str(), "Accuracy (%)", "FAR (%)", "FRR (%)",
                  "AUROC", "F1");
    os << line;
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-14s %-16s %-16s %-16s %-16s %-16s\n", r.label.c_str(),
                      fmt("%.2f±%.2f", 100 * r.accuracy.mean, 100 * r.accuracy.stddev).c_str(),
                      fmt("%.2f±%.2f", 100 * r.far.mean, 100 * r.far.stddev).c_str(),
                      fmt("%.2f±%.2f", 100 * r.frr.mean, 100 * r.frr.stddev).c_str(),
                      fmt("%.4f±%.4f", r.auroc.mean, r.auroc.stddev).c_str(),
                      fmt("%.4f±%.4f", r.f1.mean, r.f1.stddev).c_str());
        os << line;
    }
    os << "mean ± sample std over " << (results.empty() ? 0 : results.front().seeds.size()) << " seeds\n";
    return os.str();
}

void emit_report(const std::vector<ExperimentResult>& results, AblationAxis axis, const WireOverhead& o,
                 const std::filesystem::path& dir) {
    const json j = results_json(results, o);
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "results.json");
        if (!out) throw FormatError("cannot write " + (dir / "results.json").string());
        out << j.dump(2) << '\n';
    }
    std::ofstream out(dir / "table.txt");
    if (!out) throw FormatError("cannot write " + (dir / "table.txt").string());
    out << results_table(results, axis);
    out << "auth request: " << o.framed_bytes << " bytes framed (" << o.request_payload_bytes
        << " payload; reference 2958)\n";
}

}  // namespace pufauth::harness
