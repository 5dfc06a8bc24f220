#pragma once

#include "mogrpo/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace mogrpo {

/// How the raw network output f maps to a velocity.
///   velocity:       v = f(z, c, t)
///   preconditioned: clean estimate D = c_skip(t) z + c_out(t) f, then v = (z - D) / t, with the
///                   skip/output scalings chosen for data of per-pixel scale `data_scale`. The linear
///                   skip path carries the noise the narrow hidden layers cannot, and c_out -> 0 as
///                   t -> 0 keeps late steps from rewriting the whole sample.
enum class OutputKind { velocity, preconditioned };

inline const char* to_string(OutputKind k) { return k == OutputKind::preconditioned ? "preconditioned" : "velocity"; }

/// Shape of the velocity network: [latent, cond, t] -> hidden (tanh)... -> latent (linear).
struct MlpArch {
    std::size_t latent_dim = 0;
    std::size_t cond_dim = 0;
    std::vector<std::size_t> hidden;
    OutputKind output = OutputKind::velocity;
    double data_scale = 0.5; // used by the preconditioned output only
    std::size_t time_features = 0; // sin/cos(k pi t) pairs, k = 1..time_features, appended after t

    std::size_t input_dim() const noexcept { return latent_dim + cond_dim + 1 + 2 * time_features; }
    std::size_t output_dim() const noexcept { return latent_dim; }

    /// Layer widths including input and output.
    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim()};
        w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(output_dim());
        return w;
    }

    std::size_t parameter_count() const {
        auto w = widths();
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * w[l] + w[l + 1];
        return n;
    }

    bool operator==(const MlpArch&) const = default;
};

struct DenseLayer {
    Tensor weight; // (out, in)
    Tensor bias;   // (out)

    std::size_t in_dim() const { return weight.shape()[1]; }
    std::size_t out_dim() const { return weight.shape()[0]; }
    bool operator==(const DenseLayer&) const = default;
};

namespace detail {

template <typename Layers>
std::size_t flat_size(const Layers& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

inline std::vector<DenseLayer> zero_layers(const MlpArch& arch) {
    auto w = arch.widths();
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
        layers.push_back({Tensor({w[l + 1], w[l]}), Tensor({w[l + 1]})});
    return layers;
}

} // namespace detail

/// One tensor per parameter tensor of an MlpParams, identical shapes.
struct GradientBundle {
    std::vector<DenseLayer> layers;

    static GradientBundle zeros(const MlpArch& arch) { return {detail::zero_layers(arch)}; }

    std::size_t size() const { return detail::flat_size(layers); }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(size());
        for (const auto& l : layers) {
            out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
            out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
        }
        return out;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& l : layers) s += l.weight.squared_norm() + l.bias.squared_norm();
        return s;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
        return true;
    }

    GradientBundle& operator+=(const GradientBundle& o) {
        if (o.layers.size() != layers.size()) throw InvalidInput("gradient bundle: layer count mismatch");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].weight += o.layers[i].weight;
            layers[i].bias += o.layers[i].bias;
        }
        return *this;
    }

    GradientBundle& operator*=(double s) {
        for (auto& l : layers) {
            l.weight *= s;
            l.bias *= s;
        }
        return *this;
    }

    bool operator==(const GradientBundle&) const = default;
};

struct MlpParams {
    MlpArch arch;
    std::vector<DenseLayer> layers;

    static MlpParams zeros(const MlpArch& arch) { return {arch, detail::zero_layers(arch)}; }

    /// He-style uniform init scaled by fan-in; biases start at zero.
    static MlpParams init(const MlpArch& arch, std::uint64_t seed, double output_gain = 1.0) {
        auto p = zeros(arch);
        std::mt19937_64 rng(seed);
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            auto& layer = p.layers[l];
            double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
            if (l + 1 == p.layers.size()) limit *= output_gain;
            std::uniform_real_distribution<double> u(-limit, limit);
            for (auto& w : layer.weight.data()) w = u(rng);
        }
        return p;
    }

    std::size_t size() const { return detail::flat_size(layers); }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(size());
        for (const auto& l : layers) {
            out.insert(out.end(), l.weight.values().begin(), l.weight.values().end());
            out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
        }
        return out;
    }

    void assign_flat(std::span<const double> flat) {
        if (flat.size() != size()) throw InvalidInput("mlp params: flat size mismatch");
        std::size_t k = 0;
        for (auto& l : layers) {
            for (auto& w : l.weight.data()) w = flat[k++];
            for (auto& b : l.bias.data()) b = flat[k++];
        }
    }

    /// Visit every scalar parameter as a mutable reference, in declaration order.
    template <typename F>
    void for_each_scalar(F&& f) {
        for (auto& l : layers) {
            for (auto& w : l.weight.data()) f(w);
            for (auto& b : l.bias.data()) f(b);
        }
    }

    bool operator==(const MlpParams&) const = default;
};

/// Activations retained by a forward pass for the matching backward pass.
struct ForwardContext {
    std::vector<std::vector<double>> activations; // [0] = input, [l] = output of layer l-1 (post tanh)
    bool empty() const noexcept { return activations.empty(); }
};

namespace detail {

inline void check_inputs(const MlpArch& arch, const Tensor& latent, const Tensor& cond, double t) {
    if (latent.size() != arch.latent_dim)
        throw InvalidInput("mlp_forward: latent has " + std::to_string(latent.size()) +
                           " values, architecture expects " + std::to_string(arch.latent_dim));
    if (cond.size() != arch.cond_dim)
        throw InvalidInput("mlp_forward: cond has " + std::to_string(cond.size()) +
                           " values, architecture expects " + std::to_string(arch.cond_dim));
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("mlp_forward: t outside [0,1]");
}

// y = W x + b
inline void affine(const DenseLayer& layer, std::span<const double> x, std::span<double> y) {
    const std::size_t in = layer.in_dim();
    const auto w = layer.weight.data();
    const auto b = layer.bias.data();
    for (std::size_t r = 0; r < y.size(); ++r) {
        const double* row = w.data() + r * in;
        double acc = b[r];
        for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

} // namespace detail

/// Forward pass that also fills `ctx` for a later mlp_backward.
inline Tensor mlp_forward(const MlpParams& params, const Tensor& latent, const Tensor& cond, double t,
                          ForwardContext* ctx) {
    detail::check_inputs(params.arch, latent, cond, t);
    std::vector<double> x;
    x.reserve(params.arch.input_dim());
    x.insert(x.end(), latent.values().begin(), latent.values().end());
    x.insert(x.end(), cond.values().begin(), cond.values().end());
    x.push_back(t);
    for (std::size_t k = 1; k <= params.arch.time_features; ++k) {
        x.push_back(std::sin(static_cast<double>(k) * std::numbers::pi * t));
        x.push_back(std::cos(static_cast<double>(k) * std::numbers::pi * t));
    }

    if (ctx) {
        ctx->activations.clear();
        ctx->activations.push_back(x);
    }
    const std::size_t n_layers = params.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::vector<double> y(params.layers[l].out_dim());
        detail::affine(params.layers[l], x, y);
        if (l + 1 < n_layers)
            for (auto& v : y) v = std::tanh(v);
        x = std::move(y);
        if (ctx && l + 1 < n_layers) ctx->activations.push_back(x);
    }
    return Tensor(latent.shape(), std::move(x));
}

inline Tensor mlp_forward(const MlpParams& params, const Tensor& latent, const Tensor& cond, double t) {
    return mlp_forward(params, latent, cond, t, nullptr);
}

/// Adds d(upstream . output)/d(params) into `grads`. Returns the gradient w.r.t. the network input.
inline std::vector<double> mlp_backward_accumulate(const MlpParams& params, const ForwardContext& ctx,
                                                   std::span<const double> upstream, GradientBundle& grads) {
    if (ctx.empty()) throw StateError("mlp_backward: no forward context recorded");
    const std::size_t n_layers = params.layers.size();
    if (ctx.activations.size() != n_layers)
        throw StateError("mlp_backward: forward context does not match the network depth");
    if (upstream.size() != params.arch.output_dim())
        throw InvalidInput("mlp_backward: upstream gradient has wrong size");
    if (grads.layers.size() != n_layers) throw InvalidInput("mlp_backward: gradient bundle mismatch");

    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& layer = params.layers[l];
        const auto& a = ctx.activations[l];
        const std::size_t in = layer.in_dim();
        auto gw = grads.layers[l].weight.data();
        auto gb = grads.layers[l].bias.data();
        for (std::size_t r = 0; r < delta.size(); ++r) {
            const double d = delta[r];
            gb[r] += d;
            if (d == 0.0) continue;
            double* row = gw.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) row[c] += d * a[c];
        }
        std::vector<double> prev(in, 0.0);
        const auto w = layer.weight.data();
        for (std::size_t r = 0; r < delta.size(); ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            const double* row = w.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) prev[c] += d * row[c];
        }
        if (l > 0)
            for (std::size_t c = 0; c < in; ++c) prev[c] *= 1.0 - a[c] * a[c];
        delta = std::move(prev);
    }
    return delta;
}

inline GradientBundle mlp_backward(const MlpParams& params, const ForwardContext& ctx, const Tensor& upstream) {
    auto grads = GradientBundle::zeros(params.arch);
    mlp_backward_accumulate(params, ctx, upstream.data(), grads);
    return grads;
}

/// Velocity = skip * z + gain * f, with (skip, gain) fixed by the output kind.
struct VelocityMap {
    double skip;
    double gain;
};

inline VelocityMap velocity_map(const MlpArch& arch, double t) {
    if (arch.output == OutputKind::velocity) return {0.0, 1.0};
    if (!(t > 0.0)) throw InvalidInput("velocity_map: preconditioned output needs t > 0");
    const double s2 = arch.data_scale * arch.data_scale;
    const double denom = (1.0 - t) * (1.0 - t) * s2 + t * t;
    // (1 - c_skip) / t and -c_out / t, simplified so nothing divides by t.
    return {(t - (1.0 - t) * s2) / denom, -arch.data_scale / std::sqrt(denom)};
}

/// Velocity prediction; `ctx` (optional) receives the activations for a backward pass through f.
inline Tensor velocity_forward(const MlpParams& params, const Tensor& latent, const Tensor& cond, double t,
                               ForwardContext* ctx = nullptr) {
    Tensor raw = mlp_forward(params, latent, cond, t, ctx);
    if (params.arch.output == OutputKind::velocity) return raw;
    const auto m = velocity_map(params.arch, t);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = m.skip * latent[i] + m.gain * raw[i];
    return raw;
}

/// Central-difference gradient of a scalar function of the parameters.
template <typename LossFn>
GradientBundle finite_diff_gradient(LossFn&& loss_fn, const MlpParams& params, double h) {
    if (!(h > 0.0)) throw InvalidInput("finite_diff_gradient: h must be positive");
    MlpParams work = params;
    auto flat = work.flatten();
    std::vector<double> grad(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double orig = flat[i];
        flat[i] = orig + h;
        work.assign_flat(flat);
        const double up = loss_fn(static_cast<const MlpParams&>(work));
        flat[i] = orig - h;
        work.assign_flat(flat);
        const double down = loss_fn(static_cast<const MlpParams&>(work));
        flat[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    auto out = GradientBundle::zeros(params.arch);
    std::size_t k = 0;
    for (auto& l : out.layers) {
        for (auto& w : l.weight.data()) w = grad[k++];
        for (auto& b : l.bias.data()) b = grad[k++];
    }
    return out;
}

} // namespace mogrpo
