#pragma once

// Group-relative policy optimization for the flow policy with two reward
// channels, plus the flow-matching pretraining and supervised fine-tuning
// baselines that share its starting checkpoint.

#include "mogrpo/checkpoint.hpp"
#include "mogrpo/env.hpp"
#include "mogrpo/flow.hpp"
#include "mogrpo/mlp.hpp"
#include "mogrpo/optimizer.hpp"
#include "mogrpo/shaping.hpp"
#include "mogrpo/tdw.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace mogrpo {

/// splitmix64 finalizer; derives independent stream seeds from structured keys.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t base, Keys... keys) {
    std::uint64_t s = mix_seed(base);
    ((s = mix_seed(s ^ static_cast<std::uint64_t>(keys))), ...);
    return s;
}

enum class TrainMode { customized, naive, sft };

inline std::string_view to_string(TrainMode m) {
    switch (m) {
    case TrainMode::customized: return "customized";
    case TrainMode::naive: return "naive";
    case TrainMode::sft: return "sft";
    }
    return "customized";
}

inline std::optional<TrainMode> parse_mode(std::string_view s) {
    for (auto m : {TrainMode::customized, TrainMode::naive, TrainMode::sft})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

/// Relative weight of each sampler step in the surrogate mean.
///   uniform:          every (member, step) term counts equally.
///   noise_normalized: step k is weighted by s_k / |d mean / d f|_k, rescaled to average 1 over the
///                     selected steps. This equalizes the log-density gradient scale across steps,
///                     which otherwise grows roughly 30x from the first to the last step as the
///                     transition std shrinks.
enum class StepWeighting { uniform, noise_normalized };

inline std::string_view to_string(StepWeighting w) {
    return w == StepWeighting::noise_normalized ? "noise_normalized" : "uniform";
}

inline std::optional<StepWeighting> parse_step_weighting(std::string_view s) {
    if (s == "uniform") return StepWeighting::uniform;
    if (s == "noise_normalized") return StepWeighting::noise_normalized;
    return std::nullopt;
}

struct PretrainConfig {
    std::size_t dataset_size = 4000;
    std::size_t batch_size = 32;
    std::size_t max_steps = 2000;
    AdamWHyper optimizer{1e-3, 0.0, 0.9, 0.999, 1e-8};
    std::uint64_t seed = 7;
};

struct TrainConfig {
    TrainMode mode = TrainMode::customized;
    std::size_t group_size = 12;
    std::size_t conditions_per_iter = 8;
    std::size_t iterations = 300;
    std::size_t timestep_subsample = 6;
    double clip_eps = 0.2;
    ShapingConfig shaping{};
    bool use_tdw = true;
    TdwConfig tdw{};
    SamplerConfig sampler{};
    AdamWHyper optimizer{3e-4, 1e-4, 0.9, 0.999, 1e-8};
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 0; // 0 = final only
    std::size_t threads = 1;
    std::size_t groups_per_update = 8;
    StepWeighting step_weighting = StepWeighting::noise_normalized;
    // sft only
    double sft_top_fraction = 0.25;
    std::size_t sft_steps = 480;
    std::size_t sft_batch_size = 32;

    void validate() const {
        if (group_size < 2) throw InvalidInput("train: group_size must be >= 2");
        if (conditions_per_iter < 1) throw InvalidInput("train: conditions_per_iter must be >= 1");
        sampler.validate();
        if (timestep_subsample < 1 || timestep_subsample > static_cast<std::size_t>(sampler.steps))
            throw InvalidInput("train: timestep_subsample must lie in [1, T]");
        if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw InvalidInput("train: clip_eps must lie in (0, 1)");
        shaping.validate();
        if (use_tdw) {
            tdw.validate();
            if (tdw.total_steps != sampler.steps) throw InvalidInput("train: tdw total_steps must equal sampler steps");
        }
        if (!(sft_top_fraction > 0.0 && sft_top_fraction <= 1.0)) throw InvalidInput("train: sft_top_fraction outside (0, 1]");
    }
};

// ---------------------------------------------------------------------------
// Advantage shaping per sampler step

/// Everything needed to turn an advantage pair into the scalar used at one sampler step.
class AdvantageShaper {
public:
    AdvantageShaper(TrainMode mode, const ShapingConfig& shaping, std::optional<TdwSchedule> schedule)
        : mode_(mode), shaping_(shaping), schedule_(std::move(schedule)) {
        shaping_.validate();
    }

    static AdvantageShaper from(const TrainConfig& c) {
        std::optional<TdwSchedule> sched;
        if (c.mode == TrainMode::customized && c.use_tdw) sched.emplace(c.tdw);
        return AdvantageShaper(c.mode, c.shaping, std::move(sched));
    }

    WeightPair weights(int step) const {
        if (schedule_) return (*schedule_)[step];
        return {shaping_.w_id, shaping_.w_prompt};
    }

    /// Final advantage of one member at one step, clipped to +-advantage_clip.
    double at(const AdvantagePair& pair, int step) const {
        const auto w = weights(step);
        if (mode_ == TrainMode::naive)
            return std::clamp(naive_aggregate(pair, w.w_id, w.w_prompt), -shaping_.advantage_clip,
                              shaping_.advantage_clip);
        return sars_aggregate(pair, w.w_id, w.w_prompt, shaping_);
    }

    const ShapingConfig& shaping() const noexcept { return shaping_; }

private:
    TrainMode mode_;
    ShapingConfig shaping_;
    std::optional<TdwSchedule> schedule_;
};

inline double shaped_advantage_at(const AdvantagePair& pair, int step, const AdvantageShaper& shaper) {
    return shaper.at(pair, step);
}

// ---------------------------------------------------------------------------
// Rollouts

struct RolloutGroup {
    std::uint64_t group_id = 0;
    std::uint64_t policy_version = 0;
    Condition condition;
    Tensor cond_encoding;
    std::vector<Trajectory> trajectories;
    std::vector<RewardBreakdown> rewards;
    std::vector<AdvantagePair> advantages;

    std::size_t size() const noexcept { return trajectories.size(); }
};

namespace detail {

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) f(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

/// G independent stochastic trajectories under the frozen old policy, scored and normalized per channel.
inline RolloutGroup rollout_group(const MlpParams& policy_old, const Condition& cond, const EnvConfig& env,
                                  std::size_t group_size, const SamplerConfig& sampler, std::uint64_t seed,
                                  double eps_std, std::size_t threads = 1) {
    if (group_size < 2) throw InvalidInput("rollout_group: group size must be >= 2");
    RolloutGroup g;
    g.condition = cond;
    g.cond_encoding = encode_condition(cond, env);
    g.trajectories.resize(group_size);
    g.rewards.resize(group_size);
    const PolicyField field{&policy_old, &g.cond_encoding};
    detail::parallel_for(group_size, threads, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        g.trajectories[i] = sample_trajectory(field, {env.height, env.width}, g.cond_encoding, sampler, rng);
        g.rewards[i] = score_sample(to_image(g.trajectories[i].final_sample, env), cond, env);
    });
    std::vector<RewardVector> rv;
    for (const auto& r : g.rewards) rv.push_back({r.r_id, r.r_prompt});
    g.advantages = group_advantages(rv, eps_std);
    return g;
}

// ---------------------------------------------------------------------------
// Clipped surrogate

/// Per-step weights for the given step indices of a recorded trajectory; deterministic steps get 0.
inline std::vector<double> step_weights(const MlpArch& arch, const Trajectory& traj, std::span<const int> steps,
                                        StepWeighting weighting) {
    std::vector<double> w(steps.size(), 1.0);
    if (weighting == StepWeighting::uniform) return w;
    double total = 0.0;
    std::size_t active = 0;
    for (std::size_t j = 0; j < steps.size(); ++j) {
        const auto& st = traj.steps.at(static_cast<std::size_t>(steps[j]));
        if (!(st.stddev > 0.0)) {
            w[j] = 0.0;
            continue;
        }
        const double gain = std::abs(mean_velocity_gain(st.tau, st.dtau, st.eps) * velocity_map(arch, st.tau).gain);
        w[j] = st.stddev / gain;
        total += w[j];
        ++active;
    }
    if (active > 0)
        for (auto& x : w) x *= static_cast<double>(active) / total;
    return w;
}

struct ObjectiveResult {
    double value = 0.0;
    GradientBundle grads; // d(value)/d(params), for ascent
    std::size_t terms = 0;
    std::size_t clipped_terms = 0;
    double mean_ratio = 0.0;
};

/// Per-term clipped surrogate min(rho A, clip(rho, 1-eps, 1+eps) A) and whether its gradient passes.
struct SurrogateTerm {
    double value;
    bool gradient_flows;
};

inline SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip_eps) {
    const double unclipped = ratio * advantage;
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    if (unclipped <= clipped) return {unclipped, true};
    return {clipped, false};
}

/// Mean clipped surrogate over the group's members and the given step indices, with its gradient.
/// Gradients flow through the transition mean (the velocity network); the transition std is fixed.
inline ObjectiveResult grpo_objective(const MlpParams& policy, const RolloutGroup& group, std::span<const int> steps,
                                      const AdvantageShaper& shaper, double clip_eps, double tau_min,
                                      std::optional<std::uint64_t> expected_policy_version = std::nullopt,
                                      StepWeighting weighting = StepWeighting::uniform) {
    if (expected_policy_version && *expected_policy_version != group.policy_version)
        throw StateError("grpo_objective: rollout group was sampled under policy version " +
                         std::to_string(group.policy_version) + ", expected " +
                         std::to_string(*expected_policy_version));
    ObjectiveResult out{0.0, GradientBundle::zeros(policy.arch), 0, 0, 0.0};
    std::size_t count = 0;
    for (const auto& traj : group.trajectories)
        for (int k : steps) {
            if (k < 0 || static_cast<std::size_t>(k) >= traj.steps.size())
                throw InvalidInput("grpo_objective: step index not recorded in trajectory");
            if (traj.steps[static_cast<std::size_t>(k)].stddev > 0.0) ++count;
        }
    if (count == 0) return out;
    const double scale = 1.0 / static_cast<double>(count);
    const auto weights = step_weights(policy.arch, group.trajectories.front(), steps, weighting);

    ForwardContext ctx;
    std::vector<double> upstream(policy.arch.output_dim());
    for (std::size_t i = 0; i < group.size(); ++i) {
        const auto& traj = group.trajectories[i];
        for (std::size_t k_pos = 0; k_pos < steps.size(); ++k_pos) {
            const auto& st = traj.steps[static_cast<std::size_t>(steps[k_pos])];
            if (!(st.stddev > 0.0)) continue;
            const double stored = transition_logprob(st.mean, st.stddev, st.action);
            if (std::abs(stored - st.logp) > 1e-9 * std::max(1.0, std::abs(st.logp)))
                throw StateError("grpo_objective: stored log-density does not match stored transition");
            const double adv = shaper.at(group.advantages[i], st.index);
            const Tensor v = velocity_forward(policy, st.latent, group.cond_encoding, st.tau, &ctx);
            const Tensor mean = transition_mean(st.latent, v, st.tau, st.dtau, st.eps, tau_min);
            const double logp = transition_logprob(mean, st.stddev, st.action);
            const double ratio = std::exp(logp - st.logp);
            const auto term = clipped_surrogate(ratio, adv, clip_eps);
            out.value += scale * weights[k_pos] * term.value;
            out.mean_ratio += scale * ratio;
            ++out.terms;
            if (!term.gradient_flows) {
                ++out.clipped_terms;
                continue;
            }
            if (adv == 0.0) continue;
            const double gain = mean_velocity_gain(st.tau, st.dtau, st.eps) * velocity_map(policy.arch, st.tau).gain;
            const double coeff = scale * weights[k_pos] * adv * ratio * gain / (st.stddev * st.stddev);
            for (std::size_t d = 0; d < upstream.size(); ++d) upstream[d] = coeff * (st.action[d] - mean[d]);
            mlp_backward_accumulate(policy, ctx, upstream, out.grads);
        }
    }
    return out;
}

/// Uniform draw of `count` distinct step indices from [0, T), sorted.
inline std::vector<int> subsample_steps(int total, std::size_t count, Rng& rng) {
    std::vector<int> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min<std::size_t>(count, all.size()));
    std::sort(all.begin(), all.end());
    return all;
}

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRecord {
    std::size_t iteration = 0;
    std::string mode;
    double mean_r_id = 0.0;
    double mean_r_prompt = 0.0;
    double conflict_frac = 0.0;
    double objective = 0.0;
    double grad_norm = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    MlpParams params;
    std::vector<MetricsRecord> metrics;
    OptimizerState optimizer;
};

using CheckpointHook = std::function<void(std::size_t iteration, const MlpParams&)>;

/// The customized / naive GRPO loop. Each iteration freezes the old policy and rolls out one group per
/// condition. Group gradients over a random subset of sampler steps are averaged in blocks of
/// `groups_per_update` groups, and each block yields one optimizer step.
inline TrainResult train_grpo(const TrainConfig& config, const EnvConfig& env, const MlpParams& initial,
                              const CheckpointHook& on_checkpoint = {}) {
    config.validate();
    if (config.mode == TrainMode::sft) throw InvalidInput("train_grpo: use sft_finetune for sft mode");
    TrainConfig effective = config;
    if (config.mode == TrainMode::naive) {
        effective.shaping.alpha = 0.0;
        effective.shaping.synergy = SynergyFn::none;
        effective.use_tdw = false;
    }
    const AdvantageShaper shaper = AdvantageShaper::from(effective);
    TrainResult result{initial, {}, OptimizerState::fresh(initial.arch, config.optimizer)};
    MlpParams& params = result.params;
    Rng cond_rng(derive_seed(config.seed, 0xC0DEu));
    Rng step_rng(derive_seed(config.seed, 0x57E9u));

    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto start = std::chrono::steady_clock::now();
        const MlpParams policy_old = params;
        const std::uint64_t version = it;

        std::vector<RolloutGroup> groups;
        groups.reserve(config.conditions_per_iter);
        for (std::size_t j = 0; j < config.conditions_per_iter; ++j) {
            const Condition cond = sample_condition(env, cond_rng);
            groups.push_back(rollout_group(policy_old, cond, env, config.group_size, config.sampler,
                                           derive_seed(config.seed, it, j), config.shaping.eps_std, config.threads));
            groups.back().group_id = it * config.conditions_per_iter + j;
            groups.back().policy_version = version;
        }

        MetricsRecord rec;
        rec.iteration = it;
        rec.mode = std::string(to_string(config.mode));
        std::vector<AdvantagePair> all_pairs;
        for (const auto& g : groups) {
            for (const auto& r : g.rewards) {
                rec.mean_r_id += r.r_id;
                rec.mean_r_prompt += r.r_prompt;
            }
            all_pairs.insert(all_pairs.end(), g.advantages.begin(), g.advantages.end());
        }
        rec.mean_r_id /= static_cast<double>(all_pairs.size());
        rec.mean_r_prompt /= static_cast<double>(all_pairs.size());
        rec.conflict_frac = conflict_stats(all_pairs).fraction_conflict();

        GradientBundle pending = GradientBundle::zeros(params.arch);
        std::size_t accumulated = 0;
        for (const auto& g : groups) {
            const auto steps = subsample_steps(config.sampler.steps, config.timestep_subsample, step_rng);
            auto obj = grpo_objective(params, g, steps, shaper, config.clip_eps, config.sampler.tau_min, version,
                                      config.step_weighting);
            if (!std::isfinite(obj.value) || !obj.grads.all_finite())
                throw NumericError("train: non-finite objective at iteration " + std::to_string(it));
            rec.objective += obj.value / static_cast<double>(groups.size());
            rec.grad_norm += std::sqrt(obj.grads.squared_norm()) / static_cast<double>(groups.size());
            pending += obj.grads;
            if (++accumulated == config.groups_per_update || &g == &groups.back()) {
                pending *= -1.0 / static_cast<double>(accumulated); // ascent
                optimizer_step(params, pending, result.optimizer);
                pending = GradientBundle::zeros(params.arch);
                accumulated = 0;
            }
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.metrics.push_back(rec);
        if (on_checkpoint && config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0)
            on_checkpoint(it + 1, params);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Flow-matching pretraining and SFT

struct PretrainResult {
    MlpParams params;
    std::vector<double> losses;
};

/// Minibatch flow matching on (image, condition) pairs.
inline PretrainResult flow_matching_fit(const MlpParams& initial, const std::vector<DatasetItem>& data,
                                        const EnvConfig& env, std::size_t steps, std::size_t batch_size,
                                        const AdamWHyper& hyper, double tau_min, std::uint64_t seed) {
    if (data.empty()) throw InvalidInput("pretrain: dataset is empty");
    if (batch_size == 0) throw InvalidInput("pretrain: batch size must be >= 1");
    PretrainResult out{initial, {}};
    auto opt = OptimizerState::fresh(initial.arch, hyper);
    std::vector<Tensor> conds;
    conds.reserve(data.size());
    for (const auto& item : data) conds.push_back(encode_condition(item.cond, env));

    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick_item(0, data.size() - 1);
    std::vector<Tensor> xs(batch_size), cs(batch_size);
    for (std::size_t s = 0; s < steps; ++s) {
        for (std::size_t b = 0; b < batch_size; ++b) {
            const auto k = pick_item(rng);
            xs[b] = data[k].image;
            cs[b] = conds[k];
        }
        auto lg = flow_matching_loss(out.params, xs, cs, rng, tau_min);
        if (!std::isfinite(lg.loss)) throw NumericError("pretrain: loss diverged at step " + std::to_string(s));
        out.losses.push_back(lg.loss);
        optimizer_step(out.params, lg.grads, opt);
    }
    return out;
}

inline MlpArch policy_arch(const EnvConfig& env, std::vector<std::size_t> hidden,
                          OutputKind output = OutputKind::preconditioned, double data_scale = 0.2,
                          std::size_t time_features = 0) {
    return {env.pixels(), env.cond_dim(), std::move(hidden), output, data_scale, time_features};
}

inline PretrainResult pretrain(const MlpArch& arch, const std::vector<DatasetItem>& data, const EnvConfig& env,
                               const PretrainConfig& config, double tau_min) {
    if (data.empty()) throw InvalidInput("pretrain: dataset is empty");
    auto init = MlpParams::init(arch, derive_seed(config.seed, 0x1A17u), 0.1);
    auto out = flow_matching_fit(init, data, env, config.max_steps, config.batch_size, config.optimizer, tau_min,
                                 derive_seed(config.seed, 0xF17u));
    narrow_to_f32(out.params);
    return out;
}

/// Top-q fraction of oracle renderings ranked by their oracle reward sum (ties keep dataset order).
inline std::vector<DatasetItem> curate_top_fraction(const std::vector<DatasetItem>& data, const EnvConfig& env,
                                                    double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("curate: fraction outside (0, 1]");
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = score_sample(data[i].image, data[i].cond, env);
        scored.push_back({r.r_id + r.r_prompt, i});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * data.size())));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < keep; ++i) idx.push_back(scored[i].second);
    std::sort(idx.begin(), idx.end());
    std::vector<DatasetItem> out;
    for (auto i : idx) out.push_back(data[i]);
    return out;
}

/// Continued flow matching on the curated set, starting from the pretrained policy.
inline PretrainResult sft_finetune(const TrainConfig& config, const MlpParams& pretrained,
                                   const std::vector<DatasetItem>& dataset, const EnvConfig& env) {
    const auto curated = curate_top_fraction(dataset, env, config.sft_top_fraction);
    return flow_matching_fit(pretrained, curated, env, config.sft_steps, config.sft_batch_size, config.optimizer,
                             config.sampler.tau_min, derive_seed(config.seed, 0x5F7u));
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalPoint {
    double r_id;
    double r_prompt;
};

struct EvalSummary {
    double mean_r_id = 0.0;
    double std_r_id = 0.0;
    double mean_r_prompt = 0.0;
    double std_r_prompt = 0.0;
    std::vector<EvalPoint> points;
};

inline EvalSummary summarize(std::vector<EvalPoint> points) {
    EvalSummary s;
    const double n = static_cast<double>(points.size());
    for (const auto& p : points) {
        s.mean_r_id += p.r_id / n;
        s.mean_r_prompt += p.r_prompt / n;
    }
    for (const auto& p : points) {
        s.std_r_id += (p.r_id - s.mean_r_id) * (p.r_id - s.mean_r_id) / n;
        s.std_r_prompt += (p.r_prompt - s.mean_r_prompt) * (p.r_prompt - s.mean_r_prompt) / n;
    }
    s.std_r_id = std::sqrt(s.std_r_id);
    s.std_r_prompt = std::sqrt(s.std_r_prompt);
    s.points = std::move(points);
    return s;
}

/// Held-out conditions drawn from their own seed stream.
inline std::vector<Condition> heldout_conditions(const EnvConfig& env, std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xE7A1u));
    std::vector<Condition> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_condition(env, rng));
    return out;
}

/// Scores any generator mapping (condition, start noise) to an image.
template <typename Generator>
EvalSummary eval_generator(Generator&& generate, const std::vector<Condition>& conds, const EnvConfig& env,
                           std::uint64_t seed) {
    std::vector<EvalPoint> pts;
    for (std::size_t i = 0; i < conds.size(); ++i) {
        Rng rng(derive_seed(seed, i));
        const Tensor start = gaussian_like({env.height, env.width}, rng);
        const Tensor img = generate(conds[i], start, rng);
        const auto r = score_sample(to_image(img, env), conds[i], env);
        pts.push_back({r.r_id, r.r_prompt});
    }
    return summarize(std::move(pts));
}

/// Evaluation of a policy over held-out conditions with the sampler as configured. Each condition gets
/// its own seeded stream, so two policies evaluated with the same seed see identical start noise.
inline EvalSummary eval_policy(const MlpParams& params, const EnvConfig& env, const SamplerConfig& sampler,
                               std::size_t n_conditions, std::uint64_t seed) {
    if (params.arch.latent_dim != env.pixels() || params.arch.cond_dim != env.cond_dim())
        throw InvalidInput("eval_policy: checkpoint architecture does not match the environment");
    const auto conds = heldout_conditions(env, n_conditions, seed);
    return eval_generator(
        [&](const Condition& c, const Tensor& start, Rng& rng) {
            const Tensor enc = encode_condition(c, env);
            return sample_trajectory_from(PolicyField{&params, &enc}, start, enc, sampler, rng).final_sample;
        },
        conds, env, seed);
}

inline SamplerConfig deterministic(SamplerConfig s) {
    s.mode = SamplerMode::deterministic;
    return s;
}

} // namespace mogrpo
