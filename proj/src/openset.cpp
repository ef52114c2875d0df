#include "pufauth/openset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "json.hpp"
#include "pufauth/errors.hpp"
#include "pufauth/io.hpp"

namespace pufauth {

nn::Tensor<float> make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                             const Normalization& norm) {
    if (indices.empty()) throw PreconditionViolation("empty batch");
    const auto& first = samples.at(indices.front()).image;
    const int h = first.height, w = first.width;
    const std::size_t per = 3ull * h * w;
    nn::Tensor<float> x({static_cast<int>(indices.size()), 3, h, w});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& img = samples.at(indices[i]).image;
        if (img.height != h || img.width != w) throw ShapeMismatch("batch mixes image sizes");
        write_model_input(img, norm, std::span(x.data).subspan(i * per, per));
    }
    return x;
}

// ---------------------------------------------------------------------------

Backbone::Backbone(const BackboneConfig& cfg, int num_classes) : cfg_(cfg), k_(num_classes) {
    if (cfg_.channels.empty()) throw ConfigError("backbone needs at least one conv block");
    if (k_ < 2) throw PreconditionViolation("closed-set classifier needs K >= 2");
    build();
}

Backbone::Backbone(const BackboneConfig& cfg, int num_classes, Rng& rng) : Backbone(cfg, num_classes) {
    for (auto& l : body_.layers())
        if (auto* c = dynamic_cast<nn::Conv2d<float>*>(l.get())) c->init_he(rng);
    for (auto& l : head_.layers())
        if (auto* lin = dynamic_cast<nn::Linear<float>*>(l.get())) lin->init_uniform(rng);
}

void Backbone::build() {
    int in = 3;
    for (int c : cfg_.channels) {
        body_.add(nn::Conv2d<float>(in, c, cfg_.kernel, cfg_.stride, cfg_.kernel / 2));
        body_.add(nn::LeakyRelu<float>(0.0f));
        in = c;
    }
    body_.add(nn::GlobalAvgPool<float>());
    head_.add(nn::Linear<float>(in, k_));
}

BackboneOutput Backbone::forward(const nn::Tensor<float>& x) {
    BackboneOutput out;
    out.features = body_.forward(x);
    out.logits = head_.forward(out.features);
    return out;
}

BackboneOutput Backbone::infer(const nn::Tensor<float>& x) const {
    BackboneOutput out;
    out.features = body_.infer(x);
    out.logits = head_.infer(out.features);
    return out;
}

void Backbone::backward(const nn::Tensor<float>& dlogits) {
    if (frozen_) throw PreconditionViolation("backbone is frozen");
    body_.backward(head_.backward(dlogits));
}

std::vector<nn::Param<float>*> Backbone::params() {
    if (frozen_) throw PreconditionViolation("backbone is frozen");
    auto p = body_.params();
    for (auto* q : head_.params()) p.push_back(q);
    return p;
}

std::vector<const nn::Param<float>*> Backbone::params() const {
    auto p = body_.params();
    for (auto* q : head_.params()) p.push_back(q);
    return p;
}

ClosedSetResult train_closed_set(const LabeledDataset& train, int num_classes, const BackboneConfig& arch,
                                 const ClosedSetHyperparams& hp, const Normalization& norm, Rng& rng) {
    if (num_classes < 2) throw PreconditionViolation("closed-set training needs K >= 2");
    require(hp.epochs >= 1 && hp.batch_size >= 1, "epochs and batch size must be positive");
    std::vector<std::size_t> per_class(num_classes, 0);
    for (const auto& s : train.items) {
        if (s.label < 0 || s.label >= num_classes) throw PreconditionViolation("training label out of range");
        ++per_class[s.label];
    }
    for (int c = 0; c < num_classes; ++c)
        if (per_class[c] == 0) throw EmptyClass("class " + std::to_string(c) + " has no training samples");

    ClosedSetResult result{Backbone(arch, num_classes, rng)};
    Backbone& model = result.model;
    nn::AdamW<float> opt(model.params(), hp.optim);

    std::vector<std::size_t> order(train.items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t end = std::min(order.size(), start + hp.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
            std::vector<int> labels;
            for (auto i : idx) labels.push_back(train.items[i].label);
            auto out = model.forward(make_batch(train.items, idx, norm));
            auto ce = nn::softmax_cross_entropy(out.logits, labels);
            if (!std::isfinite(ce.loss)) throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch));
            loss_sum += ce.loss * static_cast<double>(idx.size());
            model.backward(ce.grad);
            opt.step();
        }
        result.final_loss = loss_sum / static_cast<double>(order.size());
    }
    result.final_objective =
        result.final_loss + 0.5 * hp.optim.weight_decay * nn::squared_norm(std::as_const(model).params());

    const auto emb = embed(model, train.items, norm);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < train.items.size(); ++i)
        correct += nn::argmax(emb.logits.data.data() + i * num_classes, num_classes) == train.items[i].label;
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.items.size());
    return result;
}

BackboneOutput embed(const Backbone& model, const std::vector<Sample>& samples, const Normalization& norm,
                     int batch_size) {
    const int n = static_cast<int>(samples.size());
    BackboneOutput all{nn::Tensor<float>({n, model.num_classes()}), nn::Tensor<float>({n, model.feature_dim()})};
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), std::size_t(start));
        const auto out = model.infer(make_batch(samples, idx, norm));
        std::copy(out.logits.data.begin(), out.logits.data.end(),
                  all.logits.data.begin() + std::size_t(start) * model.num_classes());
        std::copy(out.features.data.begin(), out.features.data.end(),
                  all.features.data.begin() + std::size_t(start) * model.feature_dim());
    }
    return all;
}

std::vector<float> extract_feature(const Backbone& model, const ModelInput& x) {
    if (x.data.size() != 3ull * x.height * x.width) throw ShapeMismatch("model input is not 3 x H x W");
    return model.infer(nn::Tensor<float>({1, 3, x.height, x.width}, x.data)).features.data;
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(int feature_dim, int hidden)
    : d_(feature_dim), hidden_(hidden), mean_(std::size_t(std::max(feature_dim, 0)), 0.0f),
      std_(std::size_t(std::max(feature_dim, 0)), 1.0f) {
    require(feature_dim >= 1 && hidden >= 1, "discriminator dimensions must be positive");
    net_.add(nn::Linear<float>(feature_dim, hidden));
    net_.add(nn::LeakyRelu<float>(0.2f));
    net_.add(nn::Linear<float>(hidden, 1));
}

Discriminator::Discriminator(int feature_dim, int hidden, Rng& rng) : Discriminator(feature_dim, hidden) {
    for (auto& l : net_.layers())
        if (auto* lin = dynamic_cast<nn::Linear<float>*>(l.get())) lin->init_uniform(rng);
}

void Discriminator::set_standardization(std::vector<float> mean, std::vector<float> stddev) {
    if (mean.size() != std::size_t(d_) || stddev.size() != std::size_t(d_))
        throw ShapeMismatch("standardization statistics must have the feature dimension");
    for (float s : stddev)
        if (!(s > 0.0f) || !std::isfinite(s)) throw PreconditionViolation("feature std must be positive");
    mean_ = std::move(mean);
    std_ = std::move(stddev);
}

nn::Tensor<float> Discriminator::standardize(const nn::Tensor<float>& features) const {
    if (features.shape.size() != 2 || features.dim(1) != d_) throw ShapeMismatch("features must be N x d");
    nn::Tensor<float> out = features;
    const std::size_t n = std::size_t(features.dim(0));
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < d_; ++j) {
            float& v = out.data[i * d_ + j];
            v = (v - mean_[j]) / std_[j];
        }
    return out;
}

nn::Tensor<float> Discriminator::logits(const nn::Tensor<float>& standardized) { return net_.forward(standardized); }
nn::Tensor<float> Discriminator::backward(const nn::Tensor<float>& dlogits) { return net_.backward(dlogits); }

std::vector<float> Discriminator::score(const nn::Tensor<float>& features) const {
    auto z = net_.infer(standardize(features));
    for (auto& v : z.data) v = nn::sigmoid(v);
    return z.data;
}

Generator::Generator(int z_dim, int hidden, int feature_dim, Rng& rng) : z_dim_(z_dim) {
    require(z_dim >= 1 && hidden >= 1 && feature_dim >= 1, "generator dimensions must be positive");
    auto& l1 = net_.add(nn::Linear<float>(z_dim, hidden));
    net_.add(nn::LeakyRelu<float>(0.2f));
    auto& l2 = net_.add(nn::Linear<float>(hidden, feature_dim));
    l1.init_uniform(rng);
    l2.init_uniform(rng);
}

nn::Tensor<float> Generator::forward(const nn::Tensor<float>& z) { return net_.forward(z); }
void Generator::backward(const nn::Tensor<float>& dfeatures) { net_.backward(dfeatures); }

nn::Tensor<float> Generator::sample(int n, Rng& rng) const {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    nn::Tensor<float> z({n, z_dim_});
    for (auto& v : z.data) v = nd(rng);
    return net_.infer(z);
}

GanTraining train_open_gan(const Backbone& frozen, const nn::Tensor<float>& train_features, const GanHyperparams& hp,
                           Rng& rng) {
    if (!frozen.frozen()) throw PreconditionViolation("backbone must be frozen before open-set training");
    const int d = frozen.feature_dim();
    if (train_features.shape.size() != 2 || train_features.dim(1) != d)
        throw ShapeMismatch("training features must be N x d");
    const int n = train_features.dim(0);
    require(n >= 1, "open-set training needs features");
    require(hp.epochs >= 1 && hp.batch_size >= 1, "epochs and batch size must be positive");

    GanTraining out{Generator(hp.z_dim, hp.n_g, d, rng), Discriminator(d, hp.n_d, rng), {}, {}, {}};
    if (hp.standardize_features) {
        std::vector<double> mean(d, 0.0), var(d, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) mean[j] += train_features.data[std::size_t(i) * d + j];
        for (auto& m : mean) m /= n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                const double t = train_features.data[std::size_t(i) * d + j] - mean[j];
                var[j] += t * t;
            }
        std::vector<float> mf(d), sf(d);
        for (int j = 0; j < d; ++j) {
            mf[j] = static_cast<float>(mean[j]);
            // Dead units (constant zero after ReLU) keep unit scale.
            const double sd = std::sqrt(var[j] / n);
            sf[j] = sd > 1e-6 ? static_cast<float>(sd) : 1.0f;
        }
        out.discriminator.set_standardization(std::move(mf), std::move(sf));
    }
    const nn::Tensor<float> real = out.discriminator.standardize(train_features);
    nn::AdamW<float> opt_g(out.generator.params(), {hp.lr_g, 0.9, 0.999, 1e-8, hp.weight_decay});
    nn::AdamW<float> opt_d(out.discriminator.params(), {hp.lr_d, 0.9, 0.999, 1e-8, hp.weight_decay});
    std::normal_distribution<float> nd(0.0f, 1.0f);

    require(hp.perturb_fraction >= 0.0 && hp.perturb_scale > 0.0, "perturbation settings must be non-negative");
    std::uniform_int_distribution<int> pick_real(0, n - 1);
    std::uniform_real_distribution<float> coin(0.0f, 1.0f);
    require(hp.d_ema_decay >= 0.0 && hp.d_ema_decay < 1.0, "discriminator EMA decay must be in [0, 1)");
    Discriminator averaged = out.discriminator;
    long step = 0;
    auto update_average = [&] {
        // Warm-up keeps early averages from being dominated by the initialization.
        const double decay = std::min(hp.d_ema_decay, (1.0 + step) / (10.0 + step));
        ++step;
        const auto src = std::as_const(out.discriminator).params();
        const auto dst = averaged.params();
        for (std::size_t p = 0; p < src.size(); ++p)
            for (std::size_t i = 0; i < src[p]->value.size(); ++i)
                dst[p]->value[i] = static_cast<float>(decay * dst[p]->value[i] + (1.0 - decay) * src[p]->value[i]);
    };

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double d_sum = 0.0, g_sum = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += hp.batch_size) {
            const int b = std::min(n, start + hp.batch_size) - start;

            nn::Tensor<float> z({b, hp.z_dim});
            for (auto& v : z.data) v = nd(rng);
            const nn::Tensor<float> fake = out.generator.forward(z);

            // Discriminator: real features vs. synthetic ones in one batch.
            const int np = static_cast<int>(std::lround(hp.perturb_fraction * b));
            const int rows = 2 * b + np;
            nn::Tensor<float> both({rows, d});
            for (int i = 0; i < b; ++i)
                std::copy_n(real.data.begin() + std::size_t(order[start + i]) * d, d,
                            both.data.begin() + std::size_t(i) * d);
            std::copy(fake.data.begin(), fake.data.end(), both.data.begin() + std::size_t(b) * d);
            for (int i = 0; i < np; ++i) {
                const auto a = real.data.begin() + std::size_t(pick_real(rng)) * d;
                auto dst = both.data.begin() + std::size_t(2 * b + i) * d;
                if (coin(rng) < hp.perturb_mix) {
                    const auto c = real.data.begin() + std::size_t(pick_real(rng)) * d;
                    const float t = 0.25f + 0.5f * coin(rng);
                    for (int j = 0; j < d; ++j) dst[j] = t * a[j] + (1.0f - t) * c[j];
                } else {
                    std::copy_n(a, d, dst);
                }
                for (int j = 0; j < d; ++j) dst[j] += static_cast<float>(hp.perturb_scale) * nd(rng);
            }
            std::vector<float> targets(rows), weights(rows);
            // bce_with_logits averages over all rows; scale so the loss is the mean
            // over real rows plus lambda_g times the mean over negative rows.
            for (int i = 0; i < rows; ++i) {
                const bool is_real = i < b;
                targets[i] = static_cast<float>(is_real ? hp.real_label : hp.fake_label);
                weights[i] = static_cast<float>(is_real ? double(rows) / b : hp.lambda_g * rows / (b + np));
            }
            const auto d_loss = nn::bce_with_logits(out.discriminator.logits(both), targets, weights);
            if (!std::isfinite(d_loss.loss)) throw TrainingDiverged("discriminator loss is not finite");
            out.discriminator.backward(d_loss.grad);
            opt_d.step();
            if (hp.d_ema_decay > 0.0) update_average();

            // Generator: non-saturating loss, pushing D(G(z)) towards the real label.
            const auto g_logits = out.discriminator.logits(fake);
            const auto g_loss = nn::bce_with_logits(
                g_logits, std::vector<float>(b, static_cast<float>(hp.real_label)),
                std::vector<float>(b, static_cast<float>(hp.lambda_g)));
            if (!std::isfinite(g_loss.loss)) throw TrainingDiverged("generator loss is not finite");
            out.generator.backward(out.discriminator.backward(g_loss.grad));
            opt_g.step();

            d_sum += d_loss.loss;
            g_sum += g_loss.loss;
            ++batches;
        }
        out.d_loss.push_back(d_sum / batches);
        out.g_loss.push_back(g_sum / batches);
        out.checkpoints.push_back(hp.d_ema_decay > 0.0 ? averaged : out.discriminator);
    }
    return out;
}

// ---------------------------------------------------------------------------

double auroc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    if (positives.empty() || negatives.empty()) return 0.0;
    std::vector<double> neg = negatives;
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : positives) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
        wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(positives.size()) * static_cast<double>(neg.size()));
}

MetricsReport score_metrics(const ScoredSplit& s, double tau) {
    if (s.legit_scores.size() != s.legit_correct.size()) throw ShapeMismatch("legit scores and flags differ");
    MetricsReport m;
    m.n_legit = s.legit_scores.size();
    m.n_impostor = s.impostor_scores.size();
    std::size_t tp = 0, correct = 0, fp = 0;
    for (std::size_t i = 0; i < m.n_legit; ++i) {
        correct += s.legit_correct[i];
        tp += s.legit_correct[i] && s.legit_scores[i] > tau;
    }
    for (double v : s.impostor_scores) fp += v > tau;
    const std::size_t fn = m.n_legit - tp;
    m.closed_set_accuracy = m.n_legit ? double(correct) / double(m.n_legit) : 0.0;
    m.frr = m.n_legit ? double(fn) / double(m.n_legit) : 0.0;
    m.far = m.n_impostor ? double(fp) / double(m.n_impostor) : 0.0;
    const std::size_t denom = 2 * tp + fp + fn;
    m.f1 = denom ? 2.0 * double(tp) / double(denom) : 0.0;
    m.auroc = auroc(s.legit_scores, s.impostor_scores);
    return m;
}

ThresholdChoice choose_threshold(const ScoredSplit& s, ThresholdRule rule, double position) {
    require(position >= 0.0 && position < 1.0, "threshold position must be in [0, 1)");
    std::vector<double> cands{0.0};
    cands.insert(cands.end(), s.legit_scores.begin(), s.legit_scores.end());
    cands.insert(cands.end(), s.impostor_scores.begin(), s.impostor_scores.end());
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

    std::size_t best = 0;
    MetricsReport best_m = score_metrics(s, cands[0]);
    const double accept_all_f1 = best_m.f1;
    for (std::size_t i = 1; i < cands.size(); ++i) {
        const MetricsReport m = score_metrics(s, cands[i]);
        const bool better = rule == ThresholdRule::max_f1
                                ? m.f1 > best_m.f1
                                : std::abs(m.far - m.frr) < std::abs(best_m.far - best_m.frr);
        if (better) {
            best = i;
            best_m = m;
        }
    }
    // Every tau in [cands[best], next score) makes the same decisions. Place it
    // in log-odds, where sigmoid outputs near 0 or 1 are not squashed.
    const double upper = best + 1 < cands.size() ? cands[best + 1] : 1.0;
    auto log_odds = [](double p) {
        p = std::clamp(p, 1e-12, 1.0 - 1e-12);
        return std::log(p / (1.0 - p));
    };
    ThresholdChoice c;
    const double lo = log_odds(cands[best]), hi = log_odds(upper);
    c.tau = 1.0 / (1.0 + std::exp(-(lo + position * (hi - lo))));
    if (!(c.tau >= cands[best] && c.tau < upper)) c.tau = cands[best];
    c.f1 = best_m.f1;
    c.far = best_m.far;
    c.frr = best_m.frr;
    c.low_separation = best_m.f1 <= accept_all_f1 + 1e-12 && best_m.far > 0.0;
    return c;
}

Calibration calibrate_threshold(const std::vector<Discriminator>& checkpoints, const BackboneOutput& val_legit,
                                const std::vector<int>& val_labels, const nn::Tensor<float>& val_impostor_features,
                                ThresholdRule rule, double position, std::size_t first_checkpoint) {
    if (checkpoints.empty()) throw CalibrationImpossible("no discriminator checkpoints");
    if (first_checkpoint >= checkpoints.size())
        throw PreconditionViolation("first_checkpoint is past the last checkpoint");
    if (val_impostor_features.size() == 0 || val_impostor_features.dim(0) == 0)
        throw CalibrationImpossible("validation impostor set is empty");
    const int n = val_legit.logits.dim(0), k = val_legit.logits.dim(1);
    if (static_cast<int>(val_labels.size()) != n) throw ShapeMismatch("validation labels do not match logits");

    ScoredSplit split;
    for (int i = 0; i < n; ++i)
        split.legit_correct.push_back(nn::argmax(val_legit.logits.data.data() + std::size_t(i) * k, k) == val_labels[i]);

    // F1 saturates quickly on small validation sets, so equal-F1 checkpoints
    // are ranked by AUROC and then by the log-odds gap between the weakest
    // legit score and the strongest impostor score. Remaining ties go to the
    // latest checkpoint.
    auto log_odds = [](double p) {
        p = std::clamp(p, 1e-12, 1.0 - 1e-12);
        return std::log(p / (1.0 - p));
    };
    Calibration best;
    double best_auc = 0.0, best_gap = 0.0;
    bool have = false;
    for (std::size_t c = first_checkpoint; c < checkpoints.size(); ++c) {
        const auto ls = checkpoints[c].score(val_legit.features);
        const auto is = checkpoints[c].score(val_impostor_features);
        split.legit_scores.assign(ls.begin(), ls.end());
        split.impostor_scores.assign(is.begin(), is.end());
        const ThresholdChoice choice = choose_threshold(split, rule, position);
        const double auc = auroc(split.legit_scores, split.impostor_scores);
        const double gap = log_odds(*std::min_element(split.legit_scores.begin(), split.legit_scores.end())) -
                           log_odds(*std::max_element(split.impostor_scores.begin(), split.impostor_scores.end()));
        bool better;
        if (rule == ThresholdRule::max_f1) {
            better = choice.f1 > best.choice.f1 ||
                     (choice.f1 == best.choice.f1 && (auc > best_auc || (auc == best_auc && gap >= best_gap)));
        } else {
            const double e = std::abs(choice.far - choice.frr), b = std::abs(best.choice.far - best.choice.frr);
            better = e < b || (e == b && (auc > best_auc || (auc == best_auc && gap >= best_gap)));
        }
        if (!have || better) {
            best = {c, choice};
            best_auc = auc;
            best_gap = gap;
            have = true;
        }
    }
    return best;
}

AuthDecision authenticate_image(const OpenSetModel& model, const ModelInput& x, int claimed_label) {
    if (x.data.size() != 3ull * x.height * x.width) throw ShapeMismatch("model input is not 3 x H x W");
    const auto out = model.backbone.infer(nn::Tensor<float>({1, 3, x.height, x.width}, x.data));
    AuthDecision d;
    d.predicted = nn::argmax(out.logits.data.data(), model.backbone.num_classes());
    d.p_open = model.discriminator.score(out.features)[0];
    if (!(d.p_open > model.tau))
        d.reason = DecisionReason::low_confidence;
    else if (d.predicted != claimed_label)
        d.reason = DecisionReason::identity_mismatch;
    else
        d.reason = DecisionReason::ok;
    d.accept = d.reason == DecisionReason::ok;
    return d;
}

ScoredSplit score_split(const OpenSetModel& model, const std::vector<Sample>& legit,
                        const std::vector<Sample>& impostor) {
    ScoredSplit s;
    const int k = model.backbone.num_classes();
    if (!legit.empty()) {
        const auto emb = embed(model.backbone, legit, model.norm);
        const auto scores = model.discriminator.score(emb.features);
        s.legit_scores.assign(scores.begin(), scores.end());
        for (std::size_t i = 0; i < legit.size(); ++i)
            s.legit_correct.push_back(nn::argmax(emb.logits.data.data() + i * k, k) == legit[i].label);
    }
    if (!impostor.empty()) {
        const auto emb = embed(model.backbone, impostor, model.norm);
        const auto scores = model.discriminator.score(emb.features);
        s.impostor_scores.assign(scores.begin(), scores.end());
    }
    return s;
}

MetricsReport evaluate(const OpenSetModel& model, const std::vector<Sample>& test_legit,
                       const std::vector<Sample>& test_impostor) {
    if (test_legit.empty()) throw EvaluationImpossible("test legit set is empty");
    return score_metrics(score_split(model, test_legit, test_impostor), model.tau);
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kManifestVersion = 1;
}

std::vector<std::uint8_t> encode_manifest(const OpenSetModel& m) {
    nlohmann::json h;
    h["num_classes"] = m.backbone.num_classes();
    h["channels"] = m.backbone.config().channels;
    h["kernel"] = m.backbone.config().kernel;
    h["stride"] = m.backbone.config().stride;
    h["feature_dim"] = m.backbone.feature_dim();
    h["disc_hidden"] = m.discriminator.hidden();
    h["disc_feature_mean"] = m.discriminator.feature_mean();
    h["disc_feature_std"] = m.discriminator.feature_std();
    h["tau"] = m.tau;
    h["norm_mean"] = m.norm.mean;
    h["norm_std"] = m.norm.std;
    h["image_width"] = m.image_width;
    h["image_height"] = m.image_height;
    h["selected_epoch"] = m.selected_epoch;
    h["val_f1"] = m.val_f1;
    h["low_separation"] = m.low_separation;
    nlohmann::json reg = nlohmann::json::array();
    for (const auto& [id, label] : m.registry) reg.push_back({id, label});
    h["registry"] = reg;
    h["lfsr_taps"] = m.lfsr_taps;
    h["training"] = nlohmann::json::parse(m.training_metadata);

    ByteWriter w;
    w.put_magic("PUFM");
    w.put(kManifestVersion);
    w.put_string(h.dump());
    auto put_params = [&](const auto& params) {
        w.put(static_cast<std::uint32_t>(params.size()));
        for (const auto* p : params) w.put_vector<float>(p->value);
    };
    put_params(m.backbone.params());
    put_params(m.discriminator.params());
    return w.take();
}

OpenSetModel decode_manifest(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    r.expect_magic("PUFM");
    if (r.get<std::uint32_t>() != kManifestVersion) throw FormatError("unsupported manifest version");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(r.get_string());
        BackboneConfig arch;
        arch.channels = h.at("channels").get<std::vector<int>>();
        arch.kernel = h.at("kernel").get<int>();
        arch.stride = h.at("stride").get<int>();
        OpenSetModel m{Backbone(arch, h.at("num_classes").get<int>()),
                       Discriminator(h.at("feature_dim").get<int>(), h.at("disc_hidden").get<int>())};
        m.discriminator.set_standardization(h.at("disc_feature_mean").get<std::vector<float>>(),
                                            h.at("disc_feature_std").get<std::vector<float>>());
        m.tau = h.at("tau").get<double>();
        m.norm.mean = h.at("norm_mean").get<std::array<float, 3>>();
        m.norm.std = h.at("norm_std").get<std::array<float, 3>>();
        m.image_width = h.at("image_width").get<int>();
        m.image_height = h.at("image_height").get<int>();
        m.selected_epoch = h.at("selected_epoch").get<int>();
        m.val_f1 = h.at("val_f1").get<double>();
        m.low_separation = h.at("low_separation").get<bool>();
        for (const auto& e : h.at("registry")) m.registry[e.at(0).get<std::uint32_t>()] = e.at(1).get<int>();
        m.lfsr_taps = h.at("lfsr_taps").get<std::vector<unsigned>>();
        m.training_metadata = h.at("training").dump();

        auto get_params = [&](const std::vector<nn::Param<float>*>& params) {
            if (r.get<std::uint32_t>() != params.size()) throw FormatError("parameter count mismatch");
            for (auto* p : params) {
                auto v = r.get_vector<float>();
                if (v.size() != p->value.size()) throw FormatError("parameter shape mismatch for " + p->name);
                p->value = std::move(v);
            }
        };
        get_params(m.backbone.params());
        get_params(m.discriminator.params());
        if (!r.done()) throw FormatError("trailing bytes in manifest");
        m.backbone.freeze();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest header: ") + e.what());
    }
}

void save_manifest(const std::filesystem::path& path, const OpenSetModel& model) {
    write_file(path, encode_manifest(model));
}

OpenSetModel load_manifest(const std::filesystem::path& path) { return decode_manifest(read_file(path)); }

}  // namespace pufauth
