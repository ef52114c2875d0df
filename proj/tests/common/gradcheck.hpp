#pragma once

// Central finite-difference checks for nn layers (double precision).

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pufauth/nn.hpp"

namespace testutil {

struct GradCheckResult {
    std::string what;
    int probes = 0;
    double max_rel_error = 0.0;
};

inline double rel_error(double a, double n) { return std::abs(a - n) / std::max({1e-6, std::abs(a), std::abs(n)}); }

inline pufauth::nn::Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
    pufauth::nn::Tensor<double> t(std::move(shape));
    std::normal_distribution<double> nd(0.0, scale);
    for (auto& v : t.data) v = nd(rng);
    return t;
}

/// Checks d(sum(r * f(x)))/dx and d/dparams for a layer with a fixed random
/// projection r. Probes `probes` random input entries and `probes` random
/// entries of every parameter.
inline std::vector<GradCheckResult> check_layer(pufauth::nn::Layer<double>& layer, pufauth::nn::Tensor<double> x,
                                                std::mt19937_64& rng, int probes = 20, double h = 1e-5) {
    using pufauth::nn::Tensor;
    const Tensor<double> y0 = layer.forward(x);
    const Tensor<double> r = random_tensor(y0.shape, rng);
    auto objective = [&](const Tensor<double>& in) {
        const auto y = layer.infer(in);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * r.data[i];
        return s;
    };
    layer.forward(x);
    const Tensor<double> dx = layer.backward(r);

    std::vector<GradCheckResult> out;
    GradCheckResult in_res{layer.kind() + " input", 0, 0.0};
    std::uniform_int_distribution<std::size_t> pick_x(0, x.size() - 1);
    for (int p = 0; p < probes; ++p) {
        const std::size_t i = pick_x(rng);
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = objective(x);
        x.data[i] = keep - h;
        const double down = objective(x);
        x.data[i] = keep;
        in_res.max_rel_error = std::max(in_res.max_rel_error, rel_error(dx.data[i], (up - down) / (2 * h)));
        ++in_res.probes;
    }
    out.push_back(in_res);

    for (auto* param : layer.params()) {
        GradCheckResult pr{layer.kind() + " " + param->name, 0, 0.0};
        const std::vector<double> analytic = param->grad;
        std::uniform_int_distribution<std::size_t> pick(0, param->value.size() - 1);
        for (int p = 0; p < probes; ++p) {
            const std::size_t i = pick(rng);
            const double keep = param->value[i];
            param->value[i] = keep + h;
            const double up = objective(x);
            param->value[i] = keep - h;
            const double down = objective(x);
            param->value[i] = keep;
            pr.max_rel_error = std::max(pr.max_rel_error, rel_error(analytic[i], (up - down) / (2 * h)));
            ++pr.probes;
        }
        out.push_back(pr);
    }
    return out;
}

/// Finite-difference check of a scalar loss with respect to its logits.
inline GradCheckResult check_loss(const std::string& what,
                                  const std::function<pufauth::nn::LossResult<double>(const pufauth::nn::Tensor<double>&)>& loss,
                                  pufauth::nn::Tensor<double> z, std::mt19937_64& rng, int probes = 20,
                                  double h = 1e-5) {
    const auto grad = loss(z).grad;
    GradCheckResult res{what, 0, 0.0};
    std::uniform_int_distribution<std::size_t> pick(0, z.size() - 1);
    for (int p = 0; p < probes; ++p) {
        const std::size_t i = pick(rng);
        const double keep = z.data[i];
        z.data[i] = keep + h;
        const double up = loss(z).loss;
        z.data[i] = keep - h;
        const double down = loss(z).loss;
        z.data[i] = keep;
        res.max_rel_error = std::max(res.max_rel_error, rel_error(grad.data[i], (up - down) / (2 * h)));
        ++res.probes;
    }
    return res;
}

}  // namespace testutil
