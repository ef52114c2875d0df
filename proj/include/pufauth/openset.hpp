#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pufauth/image.hpp"
#include "pufauth/nn.hpp"
#include "pufauth/rng.hpp"

namespace pufauth {

enum class Split { train, val, test };

struct Sample {
    PufImage image;
    int label = -1;  // 0-based class index; -1 for impostors
    std::uint32_t device_id = 0;
};

struct LabeledDataset {
    Split split = Split::train;
    std::vector<Sample> items;
};

/// Normalized 3-channel batch for the samples at `indices`.
nn::Tensor<float> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                             const Normalization& norm);

// ---------------------------------------------------------------------------
// Closed-set backbone

/// Conv blocks (3x3, stride 2, ReLU) followed by global average pooling; the
/// pooled vector is the pre-logit feature, and a linear head maps it to K logits.
struct BackboneConfig {
    std::vector<int> channels{16, 32, 64};
    int kernel = 3;
    int stride = 2;
};

struct BackboneOutput {
    nn::Tensor<float> logits;    // N x K
    nn::Tensor<float> features;  // N x d
};

class Backbone {
public:
    Backbone(const BackboneConfig& cfg, int num_classes, Rng& rng);
    /// Zero-initialized network with the given architecture (used by the loader).
    Backbone(const BackboneConfig& cfg, int num_classes);

    BackboneOutput forward(const nn::Tensor<float>& x);
    BackboneOutput infer(const nn::Tensor<float>& x) const;
    void backward(const nn::Tensor<float>& dlogits);

    std::vector<nn::Param<float>*> params();
    std::vector<const nn::Param<float>*> params() const;

    const BackboneConfig& config() const noexcept { return cfg_; }
    int feature_dim() const noexcept { return cfg_.channels.back(); }
    int num_classes() const noexcept { return k_; }

    bool frozen() const noexcept { return frozen_; }
    void freeze() noexcept { frozen_ = true; }

private:
    void build();

    BackboneConfig cfg_;
    int k_;
    nn::Sequential<float> body_;
    nn::Sequential<float> head_;
    bool frozen_ = false;
};

struct ClosedSetHyperparams {
    int epochs = 10;
    int batch_size = 32;
    nn::AdamWConfig optim{1e-4, 0.9, 0.999, 1e-8, 1e-3};
};

struct ClosedSetResult {
    Backbone model;
    double final_loss = 0.0;       // mean cross-entropy over the last epoch
    double final_objective = 0.0;  // cross-entropy + (wd / 2) * sum w^2
    double train_accuracy = 0.0;   // inference-mode accuracy on the training split
};

ClosedSetResult train_closed_set(const LabeledDataset& train, int num_classes, const BackboneConfig& arch,
                                 const ClosedSetHyperparams& hp, const Normalization& norm, Rng& rng);

/// Logits and pre-logit features for every sample, in batches.
BackboneOutput embed(const Backbone& model, const std::vector<Sample>& samples, const Normalization& norm,
                     int batch_size = 64);

/// Pre-logit feature of a single input.
std::vector<float> extract_feature(const Backbone& model, const ModelInput& x);

// ---------------------------------------------------------------------------
// Open-set head

/// d -> n_d -> 1 MLP; `score` returns sigmoid outputs (P_open).
///
/// The MLP works on standardized features (x - mean) / std. The statistics
/// come from the legitimate training features and default to the identity.
class Discriminator {
public:
    Discriminator(int feature_dim, int hidden, Rng& rng);
    Discriminator(int feature_dim, int hidden);

    void set_standardization(std::vector<float> mean, std::vector<float> stddev);
    const std::vector<float>& feature_mean() const noexcept { return mean_; }
    const std::vector<float>& feature_std() const noexcept { return std_; }
    nn::Tensor<float> standardize(const nn::Tensor<float>& features) const;

    /// Logits of already-standardized inputs; caches for backward.
    nn::Tensor<float> logits(const nn::Tensor<float>& standardized);
    nn::Tensor<float> backward(const nn::Tensor<float>& dlogits);
    /// P_open for raw backbone features.
    std::vector<float> score(const nn::Tensor<float>& features) const;

    std::vector<nn::Param<float>*> params() { return net_.params(); }
    std::vector<const nn::Param<float>*> params() const { return net_.params(); }
    int feature_dim() const noexcept { return d_; }
    int hidden() const noexcept { return hidden_; }

private:
    int d_, hidden_;
    nn::Sequential<float> net_;
    std::vector<float> mean_, std_;
};

/// z_dim -> n_g -> d MLP producing synthetic open-set features (in the
/// discriminator's standardized feature space).
class Generator {
public:
    Generator(int z_dim, int hidden, int feature_dim, Rng& rng);

    nn::Tensor<float> forward(const nn::Tensor<float>& z);
    void backward(const nn::Tensor<float>& dfeatures);
    nn::Tensor<float> sample(int n, Rng& rng) const;

    std::vector<nn::Param<float>*> params() { return net_.params(); }
    int z_dim() const noexcept { return z_dim_; }

private:
    int z_dim_;
    nn::Sequential<float> net_;
};

struct GanHyperparams {
    int epochs = 50;
    int batch_size = 256;
    int z_dim = 100;
    int n_g = 256;
    int n_d = 256;
    double lr_g = 3e-4;
    double lr_d = 1.2e-4;
    double weight_decay = 1e-3;
    double real_label = 0.95;
    double fake_label = 0.05;
    double lambda_g = 1.0;
    bool standardize_features = true;
    /// Per-step decay of an exponential moving average of the discriminator
    /// weights; checkpoints hold the average. 0 checkpoints the raw weights.
    double d_ema_decay = 0.0;
    /// Extra negatives per discriminator batch, as a fraction of the batch:
    /// real features plus N(0, perturb_scale^2) noise in standardized space.
    /// They mark the space around the real clusters as fake. 0 disables.
    double perturb_fraction = 0.0;
    double perturb_scale = 0.5;
    /// Share of those negatives built by interpolating two random real
    /// features (weight uniform in [0.25, 0.75]) before the noise is added.
    double perturb_mix = 0.0;
};

struct GanTraining {
    Generator generator;
    Discriminator discriminator;
    std::vector<Discriminator> checkpoints;  // one per epoch
    std::vector<double> d_loss;              // per-epoch mean
    std::vector<double> g_loss;
};

/// Adversarial training in feature space on frozen-backbone features of the
/// legitimate training split. Only legitimate features are consumed.
GanTraining train_open_gan(const Backbone& frozen, const nn::Tensor<float>& train_features, const GanHyperparams& hp,
                           Rng& rng);

// ---------------------------------------------------------------------------
// Calibration, inference, metrics

enum class ThresholdRule { max_f1, equal_error_rate };

/// Scores of one split under one discriminator. `correct[i]` says whether
/// the closed-set prediction of legit sample i matched its label.
struct ScoredSplit {
    std::vector<double> legit_scores;
    std::vector<bool> legit_correct;
    std::vector<double> impostor_scores;
};

struct MetricsReport {
    double closed_set_accuracy = 0.0;
    double far = 0.0;
    double frr = 0.0;
    double auroc = 0.0;
    double f1 = 0.0;
    std::size_t n_legit = 0;
    std::size_t n_impostor = 0;
};

/// Open-set rates at `tau` (accept iff score > tau and the prediction is correct;
/// impostors claim whatever identity the classifier predicts).
MetricsReport score_metrics(const ScoredSplit& s, double tau);

/// Mann-Whitney AUROC with legit as the positive class; ties count 1/2.
double auroc(const std::vector<double>& positives, const std::vector<double>& negatives);

struct ThresholdChoice {
    double tau = 0.5;
    double f1 = 0.0;
    double far = 0.0;
    double frr = 0.0;
    bool low_separation = false;  // best F1 no better than accepting everything
};

/// `position` places tau inside the winning decision interval, in log-odds:
/// 0 is its lower end, 0.5 the middle, values near 1 hug the next score up.
ThresholdChoice choose_threshold(const ScoredSplit& s, ThresholdRule rule = ThresholdRule::max_f1,
                                 double position = 0.5);

struct OpenSetModel {
    Backbone backbone;
    Discriminator discriminator;
    double tau = 0.5;
    Normalization norm;
    int image_width = 50;
    int image_height = 50;
    int selected_epoch = -1;
    double val_f1 = 0.0;
    bool low_separation = false;
    std::map<std::uint32_t, int> registry;  // device id -> class label
    std::vector<unsigned> lfsr_taps{32, 22, 2, 1};
    std::string training_metadata = "{}";   // JSON blob, recorded verbatim
};

struct Calibration {
    std::size_t checkpoint = 0;
    ThresholdChoice choice;
};

/// Picks the (checkpoint, tau) pair with the best validation F1. Checkpoints
/// before first_checkpoint are skipped.
Calibration calibrate_threshold(const std::vector<Discriminator>& checkpoints, const BackboneOutput& val_legit,
                                const std::vector<int>& val_labels, const nn::Tensor<float>& val_impostor_features,
                                ThresholdRule rule = ThresholdRule::max_f1, double position = 0.5,
                                std::size_t first_checkpoint = 0);

enum class DecisionReason { ok, low_confidence, identity_mismatch };

struct AuthDecision {
    bool accept = false;
    int predicted = -1;
    double p_open = 0.0;
    DecisionReason reason = DecisionReason::low_confidence;
};

/// Single forward pass: accept iff P_open > tau and argmax == claimed label.
AuthDecision authenticate_image(const OpenSetModel& model, const ModelInput& x, int claimed_label);

ScoredSplit score_split(const OpenSetModel& model, const std::vector<Sample>& legit,
                        const std::vector<Sample>& impostor);

/// Test metrics; FAR/FRR/AUROC/F1 need a non-empty impostor set.
MetricsReport evaluate(const OpenSetModel& model, const std::vector<Sample>& test_legit,
                       const std::vector<Sample>& test_impostor);

// ---------------------------------------------------------------------------
// Model manifest: "PUFM" | u32 version | JSON header | parameter blobs.

std::vector<std::uint8_t> encode_manifest(const OpenSetModel& model);
OpenSetModel decode_manifest(std::span<const std::uint8_t> data);
void save_manifest(const std::filesystem::path& path, const OpenSetModel& model);
OpenSetModel load_manifest(const std::filesystem::path& path);

}  // namespace pufauth
