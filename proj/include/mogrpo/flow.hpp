#pragma once

// Rectified-flow forward process, flow-matching regression, and the ODE/SDE samplers.
//
// Time convention (artifact-wide): tau = 1 is pure noise, tau = 0 is data.
//   z_tau = (1 - tau) x0 + tau x1,   x0 ~ data, x1 ~ N(0, I),   velocity = x1 - x0.
// Sampling integrates from tau = 1 down to tau_min over a uniform grid
// tau_i = 1 - i/T, the last target clamped to tau_min.

#include "mogrpo/mlp.hpp"
#include "mogrpo/tensor.hpp"

#include <cmath>
#include <concepts>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace mogrpo {

inline Tensor gaussian_like(const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor out(shape);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& v : out.data()) v = n01(rng);
    return out;
}

/// (1 - t) x0 + t x1
inline Tensor interpolate_forward(const Tensor& x0, const Tensor& x1, double t) {
    if (!x0.same_shape(x1)) throw InvalidInput("interpolate_forward: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("interpolate_forward: t outside [0,1]");
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
    return out;
}

/// Marginal score implied by a velocity prediction: -(z + (1 - t) v) / t.
inline Tensor velocity_to_score(const Tensor& v, const Tensor& z, double t, double tau_min) {
    if (!v.same_shape(z)) throw InvalidInput("velocity_to_score: shape mismatch");
    if (!(t >= tau_min) || t > 1.0)
        throw InvalidInput("velocity_to_score: t=" + std::to_string(t) + " below tau_min");
    Tensor out(z.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(z[i] + (1.0 - t) * v[i]) / t;
    return out;
}

/// Diffusion scale eps(tau) = scale * sqrt(tau), switched off below 2 * tau_min.
struct NoiseSchedule {
    double scale = 0.7;
    double tau_min = 1e-3;

    double at(double tau) const noexcept {
        if (scale == 0.0 || tau < 2.0 * tau_min) return 0.0;
        return scale * std::sqrt(tau);
    }
    static NoiseSchedule none(double tau_min = 1e-3) { return {0.0, tau_min}; }
};

enum class SamplerMode { deterministic, stochastic };

struct SamplerConfig {
    int steps = 25;
    SamplerMode mode = SamplerMode::stochastic;
    NoiseSchedule schedule{};
    double tau_min = 1e-3;

    void validate() const {
        if (steps < 2) throw InvalidInput("sampler: steps must be >= 2");
        if (!(tau_min > 0.0) || tau_min > 1.0 / steps) throw InvalidInput("sampler: tau_min must lie in (0, 1/T]");
        if (schedule.scale < 0.0) throw InvalidInput("sampler: negative noise scale");
    }

    double tau(int i) const noexcept { return std::max(1.0 - static_cast<double>(i) / steps, tau_min); }
    NoiseSchedule effective_schedule() const {
        return mode == SamplerMode::deterministic ? NoiseSchedule::none(tau_min) : NoiseSchedule{schedule.scale, tau_min};
    }
};

struct TrajectoryStep {
    int index = 0;
    double tau = 1.0;
    double dtau = 0.0;
    double eps = 0.0;     // diffusion scale used for this step
    Tensor latent;        // z before the step
    Tensor action;        // z after the step
    Tensor mean;          // transition mean
    double stddev = 0.0;  // isotropic transition std (0 for deterministic steps)
    double logp = 0.0;    // log N(action; mean, stddev^2 I); 0 for deterministic steps
};

struct Trajectory {
    Tensor cond;
    std::vector<TrajectoryStep> steps;
    Tensor final_sample;
};

/// Exact isotropic Gaussian log-density.
inline double transition_logprob(const Tensor& mean, double stddev, const Tensor& action) {
    if (!(stddev > 0.0)) throw InvalidInput("transition_logprob: stddev must be positive");
    if (!mean.same_shape(action)) throw InvalidInput("transition_logprob: shape mismatch");
    double sq = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double d = action[i] - mean[i];
        sq += d * d;
    }
    const double d = static_cast<double>(mean.size());
    return -0.5 * sq / (stddev * stddev) - 0.5 * d * std::log(2.0 * std::numbers::pi * stddev * stddev);
}

/// d(mean)/d(velocity) for the Euler-Maruyama mean; the map velocity -> mean is affine.
inline double mean_velocity_gain(double tau, double dtau, double eps) noexcept {
    return -dtau * (1.0 + 0.5 * eps * eps * (1.0 - tau) / tau);
}

/// mean = z - dtau * (v - 0.5 eps^2 score(v, z, tau)).
inline Tensor transition_mean(const Tensor& z, const Tensor& v, double tau, double dtau, double eps, double tau_min) {
    Tensor mean(z.shape());
    if (eps == 0.0) {
        for (std::size_t i = 0; i < z.size(); ++i) mean[i] = z[i] - dtau * v[i];
        return mean;
    }
    const Tensor score = velocity_to_score(v, z, tau, tau_min);
    const double half_eps2 = 0.5 * eps * eps;
    for (std::size_t i = 0; i < z.size(); ++i) mean[i] = z[i] - dtau * (v[i] - half_eps2 * score[i]);
    return mean;
}

template <typename F>
concept VelocityField = requires(const F& f, const Tensor& z, double t) {
    { f(z, t) } -> std::convertible_to<Tensor>;
};

/// The MLP policy bound to one condition.
struct PolicyField {
    const MlpParams* params;
    const Tensor* cond;
    Tensor operator()(const Tensor& z, double t) const { return velocity_forward(*params, z, *cond, t); }
};

/// One Euler-Maruyama step from tau toward tau - dtau.
template <VelocityField Field>
TrajectoryStep sde_step(const Field& field, const Tensor& z, double tau, double dtau, const NoiseSchedule& schedule,
                        Rng& rng) {
    if (!(dtau > 0.0)) throw InvalidInput("sde_step: dtau must be positive");
    if (tau - dtau < -1e-12) throw InvalidInput("sde_step: step crosses tau = 0");
    TrajectoryStep step;
    step.tau = tau;
    step.dtau = dtau;
    step.eps = schedule.at(tau);
    step.latent = z;
    const Tensor v = field(z, tau);
    step.mean = transition_mean(z, v, tau, dtau, step.eps, schedule.tau_min);
    if (!step.mean.all_finite())
        throw NumericError("sde_step: non-finite drift at tau=" + std::to_string(tau));
    step.stddev = step.eps * std::sqrt(dtau);
    if (step.stddev > 0.0) {
        step.action = step.mean;
        std::normal_distribution<double> n01(0.0, 1.0);
        for (auto& a : step.action.data()) a += step.stddev * n01(rng);
        step.logp = transition_logprob(step.mean, step.stddev, step.action);
    } else {
        step.action = step.mean;
        step.logp = 0.0;
    }
    return step;
}

/// Deterministic Euler step of the probability-flow ODE.
template <VelocityField Field>
TrajectoryStep ode_step(const Field& field, const Tensor& z, double tau, double dtau, double tau_min = 1e-3) {
    Rng unused(0);
    return sde_step(field, z, tau, dtau, NoiseSchedule::none(tau_min), unused);
}

/// Runs the full sampler from a given start latent at tau = 1.
template <VelocityField Field>
Trajectory sample_trajectory_from(const Field& field, Tensor start, const Tensor& cond, const SamplerConfig& config,
                                  Rng& rng) {
    config.validate();
    const NoiseSchedule schedule = config.effective_schedule();
    Trajectory traj;
    traj.cond = cond;
    traj.steps.reserve(static_cast<std::size_t>(config.steps));
    Tensor z = std::move(start);
    for (int i = 0; i < config.steps; ++i) {
        const double tau = config.tau(i);
        const double next = (i + 1 == config.steps) ? config.tau_min : config.tau(i + 1);
        auto step = sde_step(field, z, tau, tau - next, schedule, rng);
        step.index = i;
        z = step.action;
        traj.steps.push_back(std::move(step));
    }
    traj.final_sample = std::move(z);
    return traj;
}

/// Starts from z ~ N(0, I) with the given latent shape.
template <VelocityField Field>
Trajectory sample_trajectory(const Field& field, const std::vector<std::size_t>& latent_shape, const Tensor& cond,
                             const SamplerConfig& config, Rng& rng) {
    Tensor start = gaussian_like(latent_shape, rng);
    return sample_trajectory_from(field, std::move(start), cond, config, rng);
}

// ---------------------------------------------------------------------------
// Flow-matching regression

struct FlowSample {
    Tensor z;
    double t = 0.0;
    Tensor target; // x1 - x0
    std::size_t item = 0;
};

/// Draws t ~ U(tau_min, 1) and x1 ~ N(0, I) for every data item.
inline std::vector<FlowSample> draw_flow_samples(std::span<const Tensor> data, Rng& rng, double tau_min) {
    std::uniform_real_distribution<double> ut(tau_min, 1.0);
    std::vector<FlowSample> out;
    out.reserve(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        const double t = ut(rng);
        Tensor x1 = gaussian_like(data[k].shape(), rng);
        out.push_back({interpolate_forward(data[k], x1, t), t, x1 - data[k], k});
    }
    return out;
}

/// Mean over samples of ||target - predict(sample)||^2.
template <typename Predictor>
double velocity_regression_loss(std::span<const FlowSample> samples, Predictor&& predict) {
    if (samples.empty()) throw InvalidInput("flow matching: empty batch");
    double total = 0.0;
    for (const auto& s : samples) {
        const Tensor v = predict(s);
        total += (s.target - v).squared_norm();
    }
    return total / static_cast<double>(samples.size());
}

struct LossAndGrad {
    double loss = 0.0;
    GradientBundle grads;
};

/// Flow-matching loss and its parameter gradient on pre-drawn samples.
inline LossAndGrad flow_matching_loss(const MlpParams& params, std::span<const FlowSample> samples,
                                      std::span<const Tensor> conds) {
    if (samples.empty()) throw InvalidInput("flow matching: empty batch");
    LossAndGrad out{0.0, GradientBundle::zeros(params.arch)};
    ForwardContext ctx;
    std::vector<double> upstream(params.arch.output_dim());
    for (const auto& s : samples) {
        const double scale = 1.0 / static_cast<double>(samples.size());
        const Tensor v = velocity_forward(params, s.z, conds[s.item], s.t, &ctx);
        const double gain = velocity_map(params.arch, s.t).gain;
        for (std::size_t i = 0; i < upstream.size(); ++i) {
            const double r = s.target[i] - v[i];
            out.loss += r * r * scale;
            upstream[i] = -2.0 * r * scale * gain;
        }
        mlp_backward_accumulate(params, ctx, upstream, out.grads);
    }
    return out;
}

/// Draws fresh (t, x1) for a batch of (x0, cond) and evaluates the loss and gradient.
inline LossAndGrad flow_matching_loss(const MlpParams& params, std::span<const Tensor> data,
                                      std::span<const Tensor> conds, Rng& rng, double tau_min) {
    if (data.empty()) throw InvalidInput("flow matching: empty batch");
    if (data.size() != conds.size()) throw InvalidInput("flow matching: data/cond count mismatch");
    const auto samples = draw_flow_samples(data, rng, tau_min);
    return flow_matching_loss(params, samples, conds);
}

} // namespace mogrpo
