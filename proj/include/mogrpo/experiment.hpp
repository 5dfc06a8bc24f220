#pragma once

// Experiment building blocks shared by the command-line tool and the acceptance suite:
// corpus generation, pretraining, evaluation, trajectory collection and the ablation variants.

#include "mogrpo/config.hpp"
#include "mogrpo/fft.hpp"
#include "mogrpo/grpo.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mogrpo {

/// The pretraining corpus of a run, reproducible from the pretrain seed.
inline std::vector<DatasetItem> pretraining_dataset(const RunConfig& cfg) {
    Rng rng(derive_seed(cfg.pretrain.seed, 0xDA7Au));
    return make_dataset(cfg.pretrain.dataset_size, cfg.env, rng);
}

inline PretrainResult pretrain_policy(const RunConfig& cfg, const std::vector<DatasetItem>& data) {
    return pretrain(cfg.arch(), data, cfg.env, cfg.pretrain, cfg.train.sampler.tau_min);
}

/// Held-out evaluation; deterministic sampling unless `stochastic` is set.
inline EvalSummary evaluate(const MlpParams& params, const RunConfig& cfg, bool stochastic = false) {
    const SamplerConfig s = stochastic ? cfg.train.sampler : deterministic(cfg.train.sampler);
    return eval_policy(params, cfg.env, s, cfg.eval_conditions, cfg.eval_seed);
}

/// `count` trajectories over held-out conditions, one per condition, for spectral analysis.
inline std::vector<Trajectory> analysis_trajectories(const MlpParams& params, const RunConfig& cfg, std::size_t count,
                                                     bool stochastic = false) {
    const SamplerConfig s = stochastic ? cfg.train.sampler : deterministic(cfg.train.sampler);
    const auto conds = heldout_conditions(cfg.env, count, cfg.eval_seed);
    std::vector<Trajectory> out;
    out.reserve(count);
    for (std::size_t i = 0; i < conds.size(); ++i) {
        Rng rng(derive_seed(cfg.eval_seed, 0xFF7u, i));
        const Tensor enc = encode_condition(conds[i], cfg.env);
        out.push_back(sample_trajectory(PolicyField{&params, &enc}, {cfg.env.height, cfg.env.width}, enc, s, rng));
    }
    return out;
}

/// Advantage pairs of `groups` rollout groups drawn from `params` with the trainer's sampler.
inline std::vector<AdvantagePair> rollout_advantages(const MlpParams& params, const RunConfig& cfg, std::size_t groups,
                                                     std::uint64_t seed) {
    Rng cond_rng(derive_seed(seed, 0xC0Fu));
    std::vector<AdvantagePair> pairs;
    for (std::size_t j = 0; j < groups; ++j) {
        const auto cond = sample_condition(cfg.env, cond_rng);
        const auto g = rollout_group(params, cond, cfg.env, cfg.train.group_size, cfg.train.sampler,
                                     derive_seed(seed, 0xC0Eu, j), cfg.train.shaping.eps_std, cfg.threads);
        pairs.insert(pairs.end(), g.advantages.begin(), g.advantages.end());
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Ablation variants

enum class Variant { customized, naive, naive_prompt_biased, no_synergy, no_tdw, max_synergy, inverted_tdw };

inline std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::customized: return "customized";
    case Variant::naive: return "naive";
    case Variant::naive_prompt_biased: return "naive_prompt_biased";
    case Variant::no_synergy: return "no_synergy";
    case Variant::no_tdw: return "no_tdw";
    case Variant::max_synergy: return "max_synergy";
    case Variant::inverted_tdw: return "inverted_tdw";
    }
    return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
    for (auto v : {Variant::customized, Variant::naive, Variant::naive_prompt_biased, Variant::no_synergy,
                   Variant::no_tdw, Variant::max_synergy, Variant::inverted_tdw})
        if (s == to_string(v)) return v;
    return std::nullopt;
}

/// `base` modified into one of the compared trainer variants. The naive variants sum both channels with
/// weights 1:1 or 1:1.5 (prompt-biased); removing TDW leaves a static 0.5/0.5 split.
inline TrainConfig variant_config(TrainConfig base, Variant v) {
    switch (v) {
    case Variant::customized: base.mode = TrainMode::customized; break;
    case Variant::naive:
        base.mode = TrainMode::naive;
        base.shaping.w_id = 1.0;
        base.shaping.w_prompt = 1.0;
        break;
    case Variant::naive_prompt_biased:
        base.mode = TrainMode::naive;
        base.shaping.w_id = 1.0;
        base.shaping.w_prompt = 1.5;
        break;
    case Variant::no_synergy:
        base.mode = TrainMode::customized;
        base.shaping.alpha = 0.0;
        break;
    case Variant::no_tdw:
        base.mode = TrainMode::customized;
        base.use_tdw = false;
        base.shaping.w_id = 0.5;
        base.shaping.w_prompt = 0.5;
        break;
    case Variant::max_synergy:
        base.mode = TrainMode::customized;
        base.shaping.synergy = SynergyFn::max_fn;
        break;
    case Variant::inverted_tdw:
        base.mode = TrainMode::customized;
        base.tdw.inverted = true;
        break;
    }
    return base;
}

} // namespace mogrpo
