#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "pufauth/device.hpp"
#include "pufauth/errors.hpp"
#include "pufauth/openset.hpp"

using namespace pufauth;

namespace {

// Two zero-noise Arbiter devices, small images.
LabeledDataset toy_dataset(int per_device, std::uint16_t side, int devices = 2) {
    LabeledDataset ds;
    for (int d = 0; d < devices; ++d) {
        DeviceSpec s;
        s.id = 10 + d;
        s.seed = 1000 + d;
        s.challenge = 0x1111 * (d + 1);
        s.flip_rate = 0.0;
        Device dev(s);
        for (int i = 0; i < per_device; ++i) ds.items.push_back({dev.evaluate_image(side, side), d, s.id});
    }
    return ds;
}

std::vector<std::vector<float>> param_values(const Backbone& b) {
    std::vector<std::vector<float>> v;
    for (const auto* p : b.params()) v.push_back(p->value);
    return v;
}

BackboneConfig small_arch() {
    BackboneConfig a;
    a.channels = {4, 8};
    return a;
}

}  // namespace

TEST_CASE("backbone: shapes and inference determinism") {
    Rng rng(1);
    Backbone b(BackboneConfig{}, 10, rng);
    nn::Tensor<float> x({2, 3, 50, 50});
    std::normal_distribution<float> nd;
    for (auto& v : x.data) v = nd(rng);
    const auto o = b.infer(x);
    CHECK(o.features.shape == std::vector<int>{2, 64});
    CHECK(o.logits.shape == std::vector<int>{2, 10});
    const auto o2 = b.forward(x);
    CHECK(o.features.data == o2.features.data);
    CHECK(o.logits.data == o2.logits.data);

    PufImage img{50, 50, std::vector<std::uint8_t>(2500, 7)};
    const auto f1 = extract_feature(b, to_model_input(img));
    CHECK(f1.size() == 64);
    CHECK(f1 == extract_feature(b, to_model_input(img)));
    CHECK_THROWS_AS(extract_feature(b, ModelInput{50, 50, std::vector<float>(10)}), ShapeMismatch);
}

TEST_CASE("closed set: zero-noise toy problem is learned; features follow devices") {
    const auto ds = toy_dataset(30, 16);
    Rng rng(2);
    ClosedSetHyperparams hp;
    hp.epochs = 15;
    hp.optim.lr = 1e-3;
    const auto r = train_closed_set(ds, 2, small_arch(), hp, {}, rng);
    CHECK(r.train_accuracy == 1.0);
    CHECK(std::isfinite(r.final_loss));
    CHECK(r.final_objective > r.final_loss);
    const auto fa = extract_feature(r.model, to_model_input(ds.items[0].image));
    CHECK(fa == extract_feature(r.model, to_model_input(ds.items[1].image)));
    CHECK(fa != extract_feature(r.model, to_model_input(ds.items.back().image)));
}

TEST_CASE("closed set: preconditions") {
    auto ds = toy_dataset(5, 8);
    Rng rng(3);
    LabeledDataset one;
    for (const auto& s : ds.items)
        if (s.label == 0) one.items.push_back(s);
    CHECK_THROWS_AS(train_closed_set(one, 2, small_arch(), {}, {}, rng), EmptyClass);
    CHECK_THROWS_AS(train_closed_set(ds, 1, small_arch(), {}, {}, rng), PreconditionViolation);
    ClosedSetHyperparams hot;
    hot.optim.lr = 1e30;
    hot.epochs = 3;
    CHECK_THROWS_AS(train_closed_set(ds, 2, small_arch(), hot, {}, rng), TrainingDiverged);
}

TEST_CASE("open gan: freezing contract, checkpoints and score ranges") {
    const auto ds = toy_dataset(20, 16, 3);
    Rng rng(4);
    ClosedSetHyperparams hp;
    hp.epochs = 3;
    hp.optim.lr = 1e-3;
    auto cs = train_closed_set(ds, 3, small_arch(), hp, {}, rng);
    const auto feats = embed(cs.model, ds.items, {}).features;
    GanHyperparams g;
    g.epochs = 40;
    g.batch_size = 16;
    g.n_d = 32;
    g.n_g = 32;
    g.z_dim = 8;
    g.lr_d = g.lr_g = 1e-3;
    CHECK_THROWS_AS(train_open_gan(cs.model, feats, g, rng), PreconditionViolation);

    cs.model.freeze();
    CHECK_THROWS_AS(cs.model.params(), PreconditionViolation);
    const auto before = param_values(cs.model);
    const auto gan = train_open_gan(cs.model, feats, g, rng);
    CHECK(param_values(cs.model) == before);
    CHECK(gan.checkpoints.size() == 40);
    CHECK(gan.d_loss.size() == 40);

    const auto real = gan.discriminator.score(feats);
    Rng zr(9);
    const auto fake_std = gan.generator.sample(200, zr);
    CHECK(fake_std.dim(1) == cs.model.feature_dim());
    // Generator samples live in the standardized space the MLP sees.
    nn::Tensor<float> fake = fake_std;
    const auto& mu = gan.discriminator.feature_mean();
    const auto& sd = gan.discriminator.feature_std();
    for (int i = 0; i < fake.dim(0); ++i)
        for (int j = 0; j < fake.dim(1); ++j) fake.data[i * fake.dim(1) + j] = fake.data[i * fake.dim(1) + j] * sd[j] + mu[j];
    const auto fs = gan.discriminator.score(fake);
    double mr = 0, mf = 0;
    for (float v : real) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
        mr += v;
    }
    for (float v : fs) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
        mf += v;
    }
    CHECK(mr / real.size() > mf / fs.size());
    CHECK_THROWS_AS(train_open_gan(cs.model, nn::Tensor<float>({3, 5}), g, rng), ShapeMismatch);
}

TEST_CASE("open gan: perturbation negatives close the real region") {
    const auto ds = toy_dataset(20, 16, 3);
    Rng rng(14);
    ClosedSetHyperparams hp;
    hp.epochs = 3;
    hp.optim.lr = 1e-3;
    auto cs = train_closed_set(ds, 3, small_arch(), hp, {}, rng);
    cs.model.freeze();
    const auto feats = embed(cs.model, ds.items, {}).features;
    GanHyperparams g;
    g.epochs = 60;
    g.batch_size = 16;
    g.n_d = g.n_g = 32;
    g.z_dim = 8;
    g.lr_d = g.lr_g = 1e-3;
    g.perturb_fraction = 1.0;
    g.perturb_scale = 0.5;
    g.d_ema_decay = 0.9;
    const auto gan = train_open_gan(cs.model, feats, g, rng);
    CHECK(gan.checkpoints.size() == 60);

    // Points pushed several units away from the data, in standardized space.
    const auto& sd = gan.discriminator.feature_std();
    std::normal_distribution<float> nd;
    nn::Tensor<float> far = feats;
    const int d = feats.dim(1);
    for (int i = 0; i < far.dim(0); ++i)
        for (int j = 0; j < d; ++j) far.data[i * d + j] += 3.0f * sd[j] * nd(rng);
    const auto& last = gan.checkpoints.back();
    const auto real_scores = last.score(feats);
    const auto far_scores = last.score(far);
    double mr = 0, mf = 0;
    for (float v : real_scores) mr += v;
    for (float v : far_scores) mf += v;
    CHECK(mr / real_scores.size() > mf / far_scores.size() + 0.1);

    g.d_ema_decay = 1.0;
    CHECK_THROWS_AS(train_open_gan(cs.model, feats, g, rng), PreconditionViolation);
    g.d_ema_decay = 0.0;
    g.perturb_fraction = -1.0;
    CHECK_THROWS_AS(train_open_gan(cs.model, feats, g, rng), PreconditionViolation);
}

TEST_CASE("metrics: hand-computed confusion matrix") {
    ScoredSplit s{{0.9, 0.8}, {true, true}, {0.2, 0.1}};
    const auto m = score_metrics(s, 0.5);
    CHECK(m.far == 0.0);
    CHECK(m.frr == 0.0);
    CHECK(m.auroc == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.closed_set_accuracy == 1.0);

    ScoredSplit mis{{0.9, 0.8, 0.7, 0.2}, {true, false, true, true}, {0.6, 0.1}};
    const auto all = score_metrics(mis, 0.0);
    CHECK(all.far == 1.0);
    CHECK(all.frr == 0.25);  // only the misidentified image
    const auto none = score_metrics(mis, 1.0);
    CHECK(none.far == 0.0);
    CHECK(none.frr == 1.0);
    const auto mid = score_metrics(mis, 0.65);
    // tp 2 (0.9, 0.7), fn 2, fp 0 -> F1 = 4 / 6
    CHECK(mid.f1 == doctest::Approx(4.0 / 6.0));
    CHECK(mid.closed_set_accuracy == 0.75);
}

TEST_CASE("auroc: ties count half") {
    CHECK(auroc({0.5}, {0.5}) == 0.5);
    CHECK(auroc({0.9, 0.5}, {0.5, 0.1}) == doctest::Approx((1 + 1 + 0.5 + 1) / 4.0));
    CHECK(auroc({0.1}, {0.9}) == 0.0);
}

TEST_CASE("threshold: separated scores give F1 1 with tau in the gap") {
    ScoredSplit s{{0.9, 0.8, 0.95}, {true, true, true}, {0.3, 0.1}};
    const auto c = choose_threshold(s);
    CHECK(c.f1 == 1.0);
    CHECK(c.tau > 0.3);
    CHECK(c.tau < 0.8);
    // Log-odds midpoint of the gap (0.3, 0.8).
    const double mid = 0.5 * (std::log(0.3 / 0.7) + std::log(0.8 / 0.2));
    CHECK(c.tau == doctest::Approx(1.0 / (1.0 + std::exp(-mid))));
    CHECK_FALSE(c.low_separation);
}

TEST_CASE("threshold: position inside the gap") {
    ScoredSplit s{{0.9, 0.8, 0.95}, {true, true, true}, {0.3, 0.1}};
    const auto logit = [](double p) { return std::log(p / (1 - p)); };
    CHECK(choose_threshold(s, ThresholdRule::max_f1, 0.0).tau == doctest::Approx(0.3));
    const double z = logit(0.3) + 0.9 * (logit(0.8) - logit(0.3));
    const auto c = choose_threshold(s, ThresholdRule::max_f1, 0.9);
    CHECK(c.tau == doctest::Approx(1.0 / (1.0 + std::exp(-z))));
    CHECK(c.tau < 0.8);
    CHECK(c.f1 == 1.0);
    CHECK_THROWS_AS(choose_threshold(s, ThresholdRule::max_f1, 1.0), PreconditionViolation);
}

TEST_CASE("threshold: identical scores are flagged") {
    ScoredSplit s{{0.5, 0.5, 0.5}, {true, true, true}, {0.5, 0.5, 0.5}};
    const auto c = choose_threshold(s);
    CHECK(c.low_separation);
    CHECK(c.f1 <= 2.0 * 3 / (2.0 * 3 + 3) + 1e-12);
}

TEST_CASE("threshold: equal error rate rule") {
    ScoredSplit s{{0.9, 0.8, 0.4, 0.7}, {true, true, true, true}, {0.6, 0.3, 0.2, 0.1}};
    const auto c = choose_threshold(s, ThresholdRule::equal_error_rate);
    CHECK(c.far == doctest::Approx(0.25));
    CHECK(c.frr == doctest::Approx(0.25));
}

TEST_CASE("calibration: empty impostors and latest tie") {
    Rng rng(5);
    Discriminator d(4, 3, rng);
    BackboneOutput val{nn::Tensor<float>({2, 2}, {1, 0, 0, 1}), nn::Tensor<float>({2, 4})};
    CHECK_THROWS_AS(calibrate_threshold({d}, val, {0, 1}, nn::Tensor<float>({0, 4})), CalibrationImpossible);
    CHECK_THROWS_AS(calibrate_threshold({}, val, {0, 1}, nn::Tensor<float>({1, 4})), CalibrationImpossible);
    const auto c = calibrate_threshold({d, d, d}, val, {0, 1}, nn::Tensor<float>({1, 4}, {1, 1, 1, 1}));
    CHECK(c.checkpoint == 2);
}

TEST_CASE("calibration: burn-in skips early checkpoints") {
    Rng rng(8);
    Discriminator a(4, 3, rng), b(4, 3, rng);
    BackboneOutput val{nn::Tensor<float>({2, 2}, {1, 0, 0, 1}), nn::Tensor<float>({2, 4}, {1, 2, 3, 4, -1, 0, 2, 1})};
    const nn::Tensor<float> imp({2, 4}, {4, -3, 1, 0, -2, 5, 0, 3});
    const auto full = calibrate_threshold({a, b}, val, {0, 1}, imp);
    const Discriminator& winner = full.checkpoint == 0 ? a : b;
    const Discriminator& loser = full.checkpoint == 0 ? b : a;
    const auto late = calibrate_threshold({winner, loser}, val, {0, 1}, imp, ThresholdRule::max_f1, 0.5, 1);
    CHECK(late.checkpoint == 1);
    const auto alone = calibrate_threshold({loser}, val, {0, 1}, imp);
    CHECK(late.choice.tau == alone.choice.tau);
    CHECK_THROWS_AS(calibrate_threshold({a, b}, val, {0, 1}, imp, ThresholdRule::max_f1, 0.5, 2), PreconditionViolation);
}

TEST_CASE("monotonicity of FAR and FRR in tau") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    std::bernoulli_distribution coin(0.9);
    for (int t = 0; t < 20; ++t) {
        ScoredSplit s;
        for (int i = 0; i < 30; ++i) {
            s.legit_scores.push_back(std::round(u(rng) * 20) / 20);
            s.legit_correct.push_back(coin(rng));
            s.impostor_scores.push_back(std::round(u(rng) * 20) / 20);
        }
        double far = 2, frr = -1;
        for (double tau = 0.0; tau <= 1.0; tau += 0.01) {
            const auto m = score_metrics(s, tau);
            CHECK(m.far <= far);
            CHECK(m.frr >= frr);
            far = m.far;
            frr = m.frr;
        }
    }
}

TEST_CASE("authentication: reasons and rule conjunction") {
    Rng rng(7);
    OpenSetModel m{Backbone(small_arch(), 3, rng), Discriminator(8, 4, rng)};
    m.backbone.freeze();
    PufImage img{16, 16, std::vector<std::uint8_t>(256, 200)};
    const auto x = to_model_input(img);
    m.tau = 0.0;
    const auto d = authenticate_image(m, x, 0);
    CHECK(d.p_open > 0.0);
    const int other = (d.predicted + 1) % 3;
    CHECK(authenticate_image(m, x, d.predicted).accept);
    CHECK(authenticate_image(m, x, d.predicted).reason == DecisionReason::ok);
    CHECK(authenticate_image(m, x, other).reason == DecisionReason::identity_mismatch);
    m.tau = 1.0;
    const auto low = authenticate_image(m, x, d.predicted);
    CHECK_FALSE(low.accept);
    CHECK(low.reason == DecisionReason::low_confidence);
}

TEST_CASE("evaluation requires legit samples") {
    Rng rng(8);
    OpenSetModel m{Backbone(small_arch(), 2, rng), Discriminator(8, 4, rng)};
    CHECK_THROWS_AS(evaluate(m, {}, {}), EvaluationImpossible);
}

TEST_CASE("manifest: round trip preserves decisions and metadata") {
    Rng rng(9);
    OpenSetModel m{Backbone(small_arch(), 3, rng), Discriminator(8, 5, rng)};
    m.discriminator.set_standardization(std::vector<float>(8, 0.25f), std::vector<float>(8, 2.0f));
    m.tau = 0.375;
    m.selected_epoch = 7;
    m.val_f1 = 0.99;
    m.registry = {{101, 0}, {102, 1}, {205, 2}};
    m.norm.mean = {0.1f, 0.2f, 0.3f};
    m.image_width = m.image_height = 16;
    m.training_metadata = R"({"seed":3})";
    m.backbone.freeze();
    const auto bytes = encode_manifest(m);
    const auto back = decode_manifest(bytes);
    CHECK(back.tau == m.tau);
    CHECK(back.selected_epoch == 7);
    CHECK(back.registry == m.registry);
    CHECK(back.norm == m.norm);
    CHECK(back.backbone.frozen());
    CHECK(back.discriminator.feature_std() == m.discriminator.feature_std());
    CHECK(encode_manifest(back) == bytes);

    PufImage img{16, 16, std::vector<std::uint8_t>(256)};
    for (std::size_t i = 0; i < 256; ++i) img.pixels[i] = std::uint8_t(i * 37);
    const auto a = authenticate_image(m, to_model_input(img, m.norm), 1);
    const auto b = authenticate_image(back, to_model_input(img, back.norm), 1);
    CHECK(a.p_open == b.p_open);
    CHECK(a.predicted == b.predicted);

    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_AS(decode_manifest(bad), FormatError);
    bad = bytes;
    bad.resize(bad.size() - 3);
    CHECK_THROWS_AS(decode_manifest(bad), FormatError);
}

TEST_CASE("argmax is invariant to positive scaling of logits") {
    std::mt19937_64 rng(10);
    std::normal_distribution<float> nd;
    std::uniform_real_distribution<float> sc(0.01f, 100.0f);
    for (int t = 0; t < 100; ++t) {
        std::vector<float> z(10);
        for (auto& v : z) v = nd(rng);
        const int a = nn::argmax(z.data(), 10);
        const float c = sc(rng);
        for (auto& v : z) v *= c;
        CHECK(nn::argmax(z.data(), 10) == a);
    }
}
