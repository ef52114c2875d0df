#pragma once

// Minimal training core: NCHW tensors, a handful of layers with analytic
// backward passes, softmax/BCE losses and AdamW. Layers are templated on the
// scalar type; models use float, gradient checks use double.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "pufauth/errors.hpp"
#include "pufauth/kernels.hpp"

namespace pufauth::nn {

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) throw ShapeMismatch("tensor data does not match shape");
    }

    static std::size_t count(const std::vector<int>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, [](std::size_t a, int b) { return a * b; });
    }
    std::size_t size() const noexcept { return data.size(); }
    int dim(std::size_t i) const { return shape.at(i); }
};

template <typename T>
struct Param {
    std::string name;
    std::vector<T> value;
    std::vector<T> grad;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    /// Caches what backward needs, then computes the output.
    virtual Tensor<T> forward(const Tensor<T>& x) = 0;
    /// Stateless forward for concurrent inference.
    virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
    /// Uses the input cached by the last forward call; fills param grads.
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual std::string kind() const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int in_c, int out_c, int kernel, int stride, int pad)
        : in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad) {
        w_.name = "conv.w";
        b_.name = "conv.b";
        w_.value.assign(std::size_t(out_c) * in_c * kernel * kernel, T(0));
        b_.value.assign(out_c, T(0));
        w_.grad.assign(w_.value.size(), T(0));
        b_.grad.assign(b_.value.size(), T(0));
    }

    template <typename Gen>
    void init_he(Gen& rng) {
        std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (in_c_ * kernel_ * kernel_)));
        for (auto& v : w_.value) v = static_cast<T>(nd(rng));
        std::fill(b_.value.begin(), b_.value.end(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) override {
        cache_ = x;
        return infer(x);
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        if (x.shape.size() != 4 || x.dim(1) != in_c_) throw ShapeMismatch("conv2d expects N x C x H x W input");
        const auto s = shape_for(x);
        Tensor<T> y({s.batch, out_c_, s.out_h(), s.out_w()});
        kernels::conv2d_forward<T>(s, x.data, w_.value, b_.value, y.data);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const auto s = shape_for(cache_);
        kernels::conv2d_backward_params<T>(s, cache_.data, dy.data, w_.grad, b_.grad);
        Tensor<T> dx(cache_.shape);
        kernels::conv2d_backward_input<T>(s, w_.value, dy.data, dx.data);
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }
    std::string kind() const override { return "conv2d"; }

    int in_channels() const noexcept { return in_c_; }
    int out_channels() const noexcept { return out_c_; }

private:
    kernels::ConvShape shape_for(const Tensor<T>& x) const {
        return {x.dim(0), in_c_, x.dim(2), x.dim(3), out_c_, kernel_, stride_, pad_};
    }

    int in_c_, out_c_, kernel_, stride_, pad_;
    Param<T> w_, b_;
    Tensor<T> cache_;
};

template <typename T>
class Linear final : public Layer<T> {
public:
    Linear(int in, int out) : in_(in), out_(out) {
        w_.name = "linear.w";
        b_.name = "linear.b";
        w_.value.assign(std::size_t(in) * out, T(0));
        b_.value.assign(out, T(0));
        w_.grad.assign(w_.value.size(), T(0));
        b_.grad.assign(b_.value.size(), T(0));
    }

    /// U(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
    template <typename Gen>
    void init_uniform(Gen& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
        std::uniform_real_distribution<double> ud(-bound, bound);
        for (auto& v : w_.value) v = static_cast<T>(ud(rng));
        for (auto& v : b_.value) v = static_cast<T>(ud(rng));
    }

    Tensor<T> forward(const Tensor<T>& x) override {
        cache_ = x;
        return infer(x);
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        if (x.shape.size() != 2 || x.dim(1) != in_) throw ShapeMismatch("linear expects N x " + std::to_string(in_));
        Tensor<T> y({x.dim(0), out_});
        kernels::dense_forward<T>({x.dim(0), in_, out_}, x.data, w_.value, b_.value, y.data);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const kernels::DenseShape s{cache_.dim(0), in_, out_};
        kernels::dense_backward_params<T>(s, cache_.data, dy.data, w_.grad, b_.grad);
        Tensor<T> dx(cache_.shape);
        kernels::dense_backward_input<T>(s, w_.value, dy.data, dx.data);
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }
    std::string kind() const override { return "linear"; }

    int in_features() const noexcept { return in_; }
    int out_features() const noexcept { return out_; }

private:
    int in_, out_;
    Param<T> w_, b_;
    Tensor<T> cache_;
};

/// max(x, slope * x); slope 0 is a plain ReLU.
template <typename T>
class LeakyRelu final : public Layer<T> {
public:
    explicit LeakyRelu(T slope = T(0)) : slope_(slope) {}

    Tensor<T> forward(const Tensor<T>& x) override {
        cache_ = x;
        return infer(x);
    }
    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> y = x;
        for (auto& v : y.data)
            if (v < T(0)) v *= slope_;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (cache_.data[i] < T(0)) dx.data[i] *= slope_;
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<LeakyRelu>(*this); }
    std::string kind() const override { return "leaky_relu"; }
    T slope() const noexcept { return slope_; }

private:
    T slope_;
    Tensor<T> cache_;
};

/// N x C x H x W -> N x C.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override {
        in_shape_ = x.shape;
        return infer(x);
    }
    Tensor<T> infer(const Tensor<T>& x) const override {
        if (x.shape.size() != 4) throw ShapeMismatch("global average pool expects 4-D input");
        const int n = x.dim(0), c = x.dim(1);
        const std::size_t plane = std::size_t(x.dim(2)) * x.dim(3);
        Tensor<T> y({n, c});
        for (std::size_t i = 0; i < std::size_t(n) * c; ++i) {
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) acc += x.data[i * plane + p];
            y.data[i] = static_cast<T>(acc / plane);
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(in_shape_);
        const std::size_t plane = std::size_t(in_shape_[2]) * in_shape_[3];
        const T inv = T(1) / static_cast<T>(plane);
        for (std::size_t i = 0; i < dy.size(); ++i)
            std::fill_n(dx.data.begin() + i * plane, plane, dy.data[i] * inv);
        return dx;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
    std::string kind() const override { return "global_avg_pool"; }

private:
    std::vector<int> in_shape_;
};

/// N x C x H x W -> N x (C H W).
template <typename T>
class Flatten final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override {
        in_shape_ = x.shape;
        return infer(x);
    }
    Tensor<T> infer(const Tensor<T>& x) const override {
        const int n = x.dim(0);
        return Tensor<T>({n, static_cast<int>(x.size() / std::max(n, 1))}, x.data);
    }
    Tensor<T> backward(const Tensor<T>& dy) override { return Tensor<T>(in_shape_, dy.data); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }
    std::string kind() const override { return "flatten"; }

private:
    std::vector<int> in_shape_;
};

template <typename T>
class Sequential {
public:
    Sequential() = default;
    Sequential(const Sequential& o) {
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
    }
    Sequential& operator=(const Sequential& o) {
        if (this != &o) {
            layers_.clear();
            for (const auto& l : o.layers_) layers_.push_back(l->clone());
        }
        return *this;
    }
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <typename L>
    L& add(L layer) {
        layers_.push_back(std::make_unique<L>(std::move(layer)));
        return static_cast<L&>(*layers_.back());
    }

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> h = x;
        for (auto& l : layers_) h = l->forward(h);
        return h;
    }
    Tensor<T> infer(const Tensor<T>& x) const {
        Tensor<T> h = x;
        for (const auto& l : layers_) h = l->infer(h);
        return h;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> g = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<const Param<T>*> params() const {
        std::vector<const Param<T>*> out;
        for (auto* p : const_cast<Sequential*>(this)->params()) out.push_back(p);
        return out;
    }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto* p : params()) n += p->value.size();
        return n;
    }

    std::vector<std::unique_ptr<Layer<T>>>& layers() noexcept { return layers_; }
    const std::vector<std::unique_ptr<Layer<T>>>& layers() const noexcept { return layers_; }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad;  // d loss / d input
};

/// Row-wise softmax of an N x K tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> p = logits;
    const int n = logits.dim(0), k = logits.dim(1);
    for (int i = 0; i < n; ++i) {
        T* row = p.data.data() + std::size_t(i) * k;
        const T mx = *std::max_element(row, row + k);
        double sum = 0.0;
        for (int c = 0; c < k; ++c) sum += std::exp(double(row[c] - mx));
        for (int c = 0; c < k; ++c) row[c] = static_cast<T>(std::exp(double(row[c] - mx)) / sum);
    }
    return p;
}

/// Mean cross-entropy over the batch; gradient w.r.t. logits.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != n) throw ShapeMismatch("label count differs from batch size");
    LossResult<T> r{0.0, softmax(logits)};
    for (int i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= k) throw ShapeMismatch("label out of range");
        T* row = r.grad.data.data() + std::size_t(i) * k;
        r.loss -= std::log(std::max(double(row[y]), 1e-300));
        row[y] -= T(1);
        for (int c = 0; c < k; ++c) row[c] /= static_cast<T>(n);
    }
    r.loss /= n;
    return r;
}

template <typename T>
T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// Weighted binary cross-entropy on logits:
/// sum_i weight_i * BCE(sigmoid(z_i), target_i) / sum_i 1.
template <typename T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets,
                              const std::vector<T>& weights = {}) {
    const std::size_t n = logits.size();
    if (targets.size() != n || (!weights.empty() && weights.size() != n))
        throw ShapeMismatch("bce target/weight count differs from logits");
    LossResult<T> r{0.0, Tensor<T>(logits.shape)};
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits.data[i];
        const double t = targets[i];
        const double w = weights.empty() ? 1.0 : double(weights[i]);
        // log(1 + e^z) - t z, computed stably.
        const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        r.loss += w * (softplus - t * z);
        r.grad.data[i] = static_cast<T>(w * (double(sigmoid<T>(static_cast<T>(z))) - t) / double(n));
    }
    r.loss /= double(n);
    return r;
}

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

/// Adam with decoupled weight decay (p <- p (1 - lr wd) before the moment step).
template <typename T>
class AdamW {
public:
    AdamW(std::vector<Param<T>*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        for (auto* p : params_) {
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = *params_[k];
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                double w = double(p.value[i]) * (1.0 - cfg_.lr * cfg_.weight_decay);
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                w -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
                p.value[i] = static_cast<T>(w);
            }
        }
    }

    long steps() const noexcept { return t_; }

private:
    std::vector<Param<T>*> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

/// Sum of squared parameter values (the L2 term of the closed-set objective).
template <typename T>
double squared_norm(const std::vector<const Param<T>*>& params) {
    double s = 0.0;
    for (const auto* p : params)
        for (T v : p->value) s += double(v) * double(v);
    return s;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename T>
int argmax(const T* row, int k) {
    int best = 0;
    for (int c = 1; c < k; ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

}  // namespace pufauth::nn
