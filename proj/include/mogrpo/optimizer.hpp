#pragma once

#include "mogrpo/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace mogrpo {

struct AdamWHyper {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamWHyper hyper;
    GradientBundle first_moment;
    GradientBundle second_moment;
    std::uint64_t step = 0;

    static OptimizerState fresh(const MlpArch& arch, AdamWHyper hyper) {
        return {hyper, GradientBundle::zeros(arch), GradientBundle::zeros(arch), 0};
    }
};

/// One AdamW update (decoupled weight decay) minimizing the loss whose gradient is `grads`.
inline void optimizer_step(MlpParams& params, const GradientBundle& grads, OptimizerState& state) {
    if (grads.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size())
        throw InvalidInput("optimizer_step: parameter/gradient/state layer mismatch");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (!grads.layers[l].weight.same_shape(params.layers[l].weight) ||
            !grads.layers[l].bias.same_shape(params.layers[l].bias))
            throw InvalidInput("optimizer_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    if (!grads.all_finite())
        throw NumericError("optimizer_step: non-finite gradient (step " + std::to_string(state.step) + ")");

    const auto& h = state.hyper;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);

    auto update = [&](Tensor& p, const Tensor& g, Tensor& m, Tensor& v) {
        auto pd = p.data();
        auto gd = g.data();
        auto md = m.data();
        auto vd = v.data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            md[i] = h.beta1 * md[i] + (1.0 - h.beta1) * gd[i];
            vd[i] = h.beta2 * vd[i] + (1.0 - h.beta2) * gd[i] * gd[i];
            const double m_hat = md[i] / bc1;
            const double v_hat = vd[i] / bc2;
            pd[i] -= h.lr * h.weight_decay * pd[i];
            pd[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
        }
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weight, grads.layers[l].weight, state.first_moment.layers[l].weight,
               state.second_moment.layers[l].weight);
        update(params.layers[l].bias, grads.layers[l].bias, state.first_moment.layers[l].bias,
               state.second_moment.layers[l].bias);
    }
}

} // namespace mogrpo
