#pragma once

// Advantage mathematics for two reward channels (identity, prompt):
// per-channel group normalization, linear aggregation, and the
// polarity-dependent synergy shaping.

#include "mogrpo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mogrpo {

struct RewardVector {
    double r_id = 0.0;
    double r_prompt = 0.0;
};

struct AdvantagePair {
    double a_id = 0.0;
    double a_prompt = 0.0;
    bool operator==(const AdvantagePair&) const = default;
};

enum class SynergyFn { tanh_product, min_fn, max_fn, harmonic_mean, none };

inline std::string_view to_string(SynergyFn fn) {
    switch (fn) {
    case SynergyFn::tanh_product: return "tanh_product";
    case SynergyFn::min_fn: return "min";
    case SynergyFn::max_fn: return "max";
    case SynergyFn::harmonic_mean: return "harmonic_mean";
    case SynergyFn::none: return "none";
    }
    return "none";
}

inline std::optional<SynergyFn> parse_synergy(std::string_view s) {
    for (auto fn : {SynergyFn::tanh_product, SynergyFn::min_fn, SynergyFn::max_fn, SynergyFn::harmonic_mean,
                    SynergyFn::none})
        if (s == to_string(fn)) return fn;
    if (s == "tanh") return SynergyFn::tanh_product;
    if (s == "min_fn") return SynergyFn::min_fn;
    if (s == "max_fn") return SynergyFn::max_fn;
    return std::nullopt;
}

struct ShapingConfig {
    double w_id = 0.5;
    double w_prompt = 0.5;
    double alpha = 0.5;
    SynergyFn synergy = SynergyFn::tanh_product;
    double eps_std = 1e-8;
    double advantage_clip = 5.0;

    void validate() const {
        if (!(w_id >= 0.0) || !(w_prompt >= 0.0)) throw InvalidInput("shaping: weights must be >= 0");
        if (!(alpha >= 0.0)) throw InvalidInput("shaping: alpha must be >= 0");
        if (!(eps_std > 0.0)) throw InvalidInput("shaping: eps_std must be > 0");
        if (!(advantage_clip > 0.0)) throw InvalidInput("shaping: advantage_clip must be > 0");
    }
};

/// (r - mean) / (population std + eps_std).
inline std::vector<double> normalize_group(std::span<const double> rewards, double eps_std) {
    if (rewards.size() < 2) throw InvalidInput("normalize_group: need at least two rewards");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double denom = std::sqrt(var / n) + eps_std;
    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) out.push_back((r - mean) / denom);
    return out;
}

/// Normalizes both channels of a group independently.
inline std::vector<AdvantagePair> group_advantages(std::span<const RewardVector> rewards, double eps_std) {
    std::vector<double> id, prompt;
    for (const auto& r : rewards) {
        id.push_back(r.r_id);
        prompt.push_back(r.r_prompt);
    }
    const auto a_id = normalize_group(id, eps_std);
    const auto a_prompt = normalize_group(prompt, eps_std);
    std::vector<AdvantagePair> out(rewards.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {a_id[i], a_prompt[i]};
    return out;
}

inline double naive_aggregate(const AdvantagePair& pair, double w_id, double w_prompt) {
    if (w_id < 0.0 || w_prompt < 0.0) throw InvalidInput("naive_aggregate: weights must be >= 0");
    return w_id * pair.a_id + w_prompt * pair.a_prompt;
}

inline double synergy_term(const AdvantagePair& p, SynergyFn fn) {
    switch (fn) {
    case SynergyFn::tanh_product: return std::tanh(p.a_id * p.a_prompt);
    case SynergyFn::min_fn: return std::min(p.a_id, p.a_prompt);
    case SynergyFn::max_fn: return std::max(p.a_id, p.a_prompt);
    case SynergyFn::harmonic_mean: {
        // undefined for a + b -> 0 with mixed signs
        const double s = p.a_id + p.a_prompt;
        if (std::abs(s) < 1e-9) return 0.0;
        return 2.0 * p.a_id * p.a_prompt / s;
    }
    case SynergyFn::none: return 0.0;
    }
    return 0.0;
}

/// True for the branch that adds the synergy term (either advantage strictly positive).
inline bool synergy_branch_positive(const AdvantagePair& p) noexcept { return p.a_id > 0.0 || p.a_prompt > 0.0; }

/// Linear part with explicit weights, +alpha*S if either channel is positive, -alpha*S if both are <= 0,
/// clamped to [-clip, clip].
inline double sars_aggregate(const AdvantagePair& pair, double w_id, double w_prompt, const ShapingConfig& config) {
    const double linear = naive_aggregate(pair, w_id, w_prompt);
    const double s = config.alpha * synergy_term(pair, config.synergy);
    const double shaped = synergy_branch_positive(pair) ? linear + s : linear - s;
    return std::clamp(shaped, -config.advantage_clip, config.advantage_clip);
}

inline double sars_aggregate(const AdvantagePair& pair, const ShapingConfig& config) {
    return sars_aggregate(pair, config.w_id, config.w_prompt, config);
}

struct ConflictStats {
    std::size_t both_positive = 0;
    std::size_t conflict = 0;
    std::size_t both_nonpositive = 0;

    std::size_t total() const noexcept { return both_positive + conflict + both_nonpositive; }
    double fraction_both_positive() const { return static_cast<double>(both_positive) / total(); }
    double fraction_conflict() const { return static_cast<double>(conflict) / total(); }
    double fraction_both_nonpositive() const { return static_cast<double>(both_nonpositive) / total(); }
};

/// Conflict = strictly opposite signs. A positive channel next to an exact zero counts as both_positive,
/// mirroring the synergy branch test.
inline ConflictStats conflict_stats(std::span<const AdvantagePair> pairs) {
    if (pairs.empty()) throw InvalidInput("conflict_stats: empty input");
    ConflictStats st;
    for (const auto& p : pairs) {
        if ((p.a_id > 0.0 && p.a_prompt < 0.0) || (p.a_id < 0.0 && p.a_prompt > 0.0))
            ++st.conflict;
        else if (p.a_id > 0.0 || p.a_prompt > 0.0)
            ++st.both_positive;
        else
            ++st.both_nonpositive;
    }
    return st;
}

struct CrossSectionRow {
    double a_id;
    double naive;
    double sars;
};

/// Final advantage as a function of a_id with a_prompt held fixed.
inline std::vector<CrossSectionRow> sars_cross_section(double a_prompt, double lo, double hi, std::size_t points,
                                                       const ShapingConfig& config) {
    if (points < 2 || !(hi > lo)) throw InvalidInput("sars_cross_section: bad grid");
    std::vector<CrossSectionRow> rows;
    rows.reserve(points);
    for (std::size_t k = 0; k < points; ++k) {
        const double a = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
        const AdvantagePair p{a, a_prompt};
        rows.push_back({a, naive_aggregate(p, config.w_id, config.w_prompt), sars_aggregate(p, config)});
    }
    return rows;
}

} // namespace mogrpo
