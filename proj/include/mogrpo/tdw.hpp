#pragma once

// Timestep-aware weight schedule over sampler step indices.
// Step 0 is the noisiest step; prompt weight is high early and decays to
// w_min through a sigmoid bridge, identity weight is the complement.

#include "mogrpo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mogrpo {

struct WeightPair {
    double w_id = 0.5;
    double w_prompt = 0.5;
};

struct TdwConfig {
    double w_max = 0.7;
    double w_min = 0.3;
    int total_steps = 25;
    int prompt_phase_end = 6;  // steps [0, prompt_phase_end) use w_max
    int id_phase_start = 22;   // steps [id_phase_start, T) use w_min
    double steepness = 0.6;
    double midpoint = 14.0;    // defaults to (prompt_phase_end + id_phase_start) / 2
    bool inverted = false;

    void validate() const {
        if (!(0.0 < w_min && w_min < w_max && w_max < 1.0))
            throw InvalidInput("tdw: need 0 < w_min < w_max < 1");
        if (!(0 <= prompt_phase_end && prompt_phase_end < id_phase_start && id_phase_start <= total_steps))
            throw InvalidInput("tdw: need 0 <= prompt_phase_end < id_phase_start <= T");
        if (!(steepness > 0.0)) throw InvalidInput("tdw: steepness must be > 0");
    }

    static double default_midpoint(int prompt_phase_end, int id_phase_start) {
        return 0.5 * (prompt_phase_end + id_phase_start);
    }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double prompt_weight(int step, const TdwConfig& c) {
    if (step < c.prompt_phase_end) return c.w_max;
    if (step >= c.id_phase_start) return c.w_min;
    return c.w_min + (c.w_max - c.w_min) * (1.0 - sigmoid(c.steepness * (step - c.midpoint)));
}

} // namespace detail

/// Weight pair at a sampler step; w_id = 1 - w_prompt.
inline WeightPair weights_at(int step, const TdwConfig& config) {
    if (step < 0 || step >= config.total_steps)
        throw InvalidInput("weights_at: step " + std::to_string(step) + " outside [0, " +
                           std::to_string(config.total_steps) + ")");
    const double wp = detail::prompt_weight(step, config);
    const WeightPair pair{1.0 - wp, wp};
    return config.inverted ? WeightPair{pair.w_prompt, pair.w_id} : pair;
}

/// Precomputed table of length T.
class TdwSchedule {
public:
    explicit TdwSchedule(TdwConfig config) : config_(config) {
        config_.validate();
        table_.reserve(static_cast<std::size_t>(config_.total_steps));
        for (int i = 0; i < config_.total_steps; ++i) table_.push_back(weights_at(i, config_));
    }

    const WeightPair& operator[](int step) const {
        if (step < 0 || step >= static_cast<int>(table_.size())) throw InvalidInput("tdw: step out of range");
        return table_[static_cast<std::size_t>(step)];
    }
    std::size_t size() const noexcept { return table_.size(); }
    const TdwConfig& config() const noexcept { return config_; }
    const std::vector<WeightPair>& table() const noexcept { return table_; }

private:
    TdwConfig config_;
    std::vector<WeightPair> table_;
};

struct ScheduleDiagnostics {
    double max_adjacent_jump = 0.0;
    double gap_at_prompt_end = 0.0; // |w_prompt(prompt_phase_end) - w_max|
    double gap_at_id_start = 0.0;   // |w_prompt(id_phase_start - 1) - w_min|
    int monotonicity_violations = 0;
    std::vector<std::string> messages;
};

/// Reports continuity and monotonicity of w_prompt over the step grid.
inline ScheduleDiagnostics validate_schedule(const TdwConfig& config) {
    ScheduleDiagnostics d;
    try {
        config.validate();
    } catch (const InvalidInput& e) {
        d.messages.emplace_back(e.what());
        return d;
    }
    std::vector<double> wp;
    for (int i = 0; i < config.total_steps; ++i) wp.push_back(weights_at(i, config).w_prompt);
    for (std::size_t i = 1; i < wp.size(); ++i) {
        d.max_adjacent_jump = std::max(d.max_adjacent_jump, std::abs(wp[i] - wp[i - 1]));
        const bool violation = config.inverted ? wp[i] < wp[i - 1] : wp[i] > wp[i - 1];
        if (violation) ++d.monotonicity_violations;
    }
    const double high = config.inverted ? config.w_min : config.w_max;
    const double low = config.inverted ? config.w_max : config.w_min;
    if (config.prompt_phase_end < config.total_steps)
        d.gap_at_prompt_end = std::abs(wp[static_cast<std::size_t>(config.prompt_phase_end)] - high);
    if (config.id_phase_start >= 1)
        d.gap_at_id_start = std::abs(wp[static_cast<std::size_t>(config.id_phase_start - 1)] - low);
    if (d.monotonicity_violations > 0)
        d.messages.push_back(std::to_string(d.monotonicity_violations) + " monotonicity violation(s)");
    d.messages.push_back("max adjacent jump " + std::to_string(d.max_adjacent_jump));
    return d;
}

} // namespace mogrpo
