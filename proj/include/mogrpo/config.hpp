#pragma once

// Sectioned key = value run configuration.
//
//   # comment
//   [trainer]
//   mode = customized
//   iterations = 60
//
// Every key belongs to exactly one section; unknown sections or keys, malformed
// values and duplicates are rejected with the offending line number. A resolved
// configuration can be written back in the same format and parses to an
// identical RunConfig.

#include "mogrpo/env.hpp"
#include "mogrpo/grpo.hpp"

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mogrpo {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct ModelConfig {
    std::vector<std::size_t> hidden{64, 64};
    OutputKind output = OutputKind::preconditioned;
    double data_scale = 0.2;
    std::size_t time_features = 4;
};

struct RunConfig {
    std::string name = "default";
    std::string out_dir = "runs/default";
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::size_t eval_conditions = 256;
    std::uint64_t eval_seed = 99;
    double fft_cutoff = 0.5;
    std::size_t fft_trajectories = 32;
    std::string pretrained; // checkpoint consumed by train / sft / eval; empty = <out_dir>/pretrained.ckpt

    ModelConfig model;
    PretrainConfig pretrain;
    TrainConfig train;
    EnvConfig env;

    /// Cross-section consistency checks and derived fields.
    void resolve() {
        train.seed = seed;
        train.threads = threads;
        train.tdw.total_steps = train.sampler.steps;
        train.sampler.schedule.tau_min = train.sampler.tau_min;
        if (model.hidden.empty()) throw InvalidInput("model: hidden must list at least one width");
        for (auto w : model.hidden)
            if (w == 0) throw InvalidInput("model: hidden widths must be positive");
        if (!(model.data_scale > 0.0)) throw InvalidInput("model: data_scale must be > 0");
        if (eval_conditions == 0) throw InvalidInput("run: eval_conditions must be >= 1");
        env.validate();
        if (train.mode != TrainMode::sft) train.validate();
    }

    MlpArch arch() const { return policy_arch(env, model.hidden, model.output, model.data_scale, model.time_features); }
};

namespace detail::cfg {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || !std::isfinite(out)) throw InvalidInput("expected a real number, got '" + v + "'");
    return out;
}

template <typename Int>
Int parse_int(const std::string& v) {
    Int out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw InvalidInput("expected a non-negative integer, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidInput("expected true/false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& v, F&& one) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw InvalidInput("empty list element in '" + v + "'");
        out.push_back(one(item));
    }
    if (out.empty()) throw InvalidInput("expected a comma-separated list");
    return out;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_floating_point_v<T>)
            out += fmt(v[i]);
        else
            out += std::to_string(v[i]);
    }
    return out;
}

struct Key {
    std::string section;
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define MOGRPO_REAL(SEC, NAME, FIELD)                                                                  \
    Key { SEC, NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(v); },             \
          [](const RunConfig& c) { return fmt(c.FIELD); } }
#define MOGRPO_UINT(SEC, NAME, FIELD, TYPE)                                                            \
    Key { SEC, NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_int<TYPE>(v); },         \
          [](const RunConfig& c) { return std::to_string(c.FIELD); } }
#define MOGRPO_BOOL(SEC, NAME, FIELD)                                                                  \
    Key { SEC, NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(v); },               \
          [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); } }
#define MOGRPO_REALS(SEC, NAME, FIELD)                                                                 \
    Key { SEC, NAME,                                                                                   \
          [](RunConfig& c, const std::string& v) { c.FIELD = parse_list<double>(v, parse_double); },  \
          [](const RunConfig& c) { return fmt_list(c.FIELD); } }

inline const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        Key{"run", "name", [](RunConfig& c, const std::string& v) { c.name = v; },
            [](const RunConfig& c) { return c.name; }},
        Key{"run", "out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; }},
        MOGRPO_UINT("run", "seed", seed, std::uint64_t),
        MOGRPO_UINT("run", "threads", threads, std::size_t),
        MOGRPO_UINT("run", "eval_conditions", eval_conditions, std::size_t),
        MOGRPO_UINT("run", "eval_seed", eval_seed, std::uint64_t),
        MOGRPO_REAL("run", "fft_cutoff", fft_cutoff),
        MOGRPO_UINT("run", "fft_trajectories", fft_trajectories, std::size_t),
        Key{"run", "pretrained", [](RunConfig& c, const std::string& v) { c.pretrained = v; },
            [](const RunConfig& c) { return c.pretrained; }},

        Key{"model", "hidden",
            [](RunConfig& c, const std::string& v) {
                c.model.hidden = parse_list<std::size_t>(v, parse_int<std::size_t>);
            },
            [](const RunConfig& c) { return fmt_list(c.model.hidden); }},
        Key{"model", "output",
            [](RunConfig& c, const std::string& v) {
                if (v == "velocity") c.model.output = OutputKind::velocity;
                else if (v == "preconditioned") c.model.output = OutputKind::preconditioned;
                else throw InvalidInput("expected velocity or preconditioned, got '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.output)); }},
        MOGRPO_REAL("model", "data_scale", model.data_scale),
        MOGRPO_UINT("model", "time_features", model.time_features, std::size_t),
        MOGRPO_UINT("model", "dataset_size", pretrain.dataset_size, std::size_t),
        MOGRPO_UINT("model", "pretrain_steps", pretrain.max_steps, std::size_t),
        MOGRPO_UINT("model", "pretrain_batch", pretrain.batch_size, std::size_t),
        MOGRPO_REAL("model", "pretrain_lr", pretrain.optimizer.lr),
        MOGRPO_UINT("model", "pretrain_seed", pretrain.seed, std::uint64_t),

        Key{"trainer", "mode",
            [](RunConfig& c, const std::string& v) {
                auto m = parse_mode(v);
                if (!m) throw InvalidInput("expected customized, naive or sft, got '" + v + "'");
                c.train.mode = *m;
            },
            [](const RunConfig& c) { return std::string(to_string(c.train.mode)); }},
        MOGRPO_UINT("trainer", "group_size", train.group_size, std::size_t),
        MOGRPO_UINT("trainer", "conditions_per_iter", train.conditions_per_iter, std::size_t),
        MOGRPO_UINT("trainer", "groups_per_update", train.groups_per_update, std::size_t),
        MOGRPO_UINT("trainer", "iterations", train.iterations, std::size_t),
        MOGRPO_UINT("trainer", "timestep_subsample", train.timestep_subsample, std::size_t),
        MOGRPO_REAL("trainer", "clip_eps", train.clip_eps),
        Key{"trainer", "step_weighting",
            [](RunConfig& c, const std::string& v) {
                auto w = parse_step_weighting(v);
                if (!w) throw InvalidInput("expected uniform or noise_normalized, got '" + v + "'");
                c.train.step_weighting = *w;
            },
            [](const RunConfig& c) { return std::string(to_string(c.train.step_weighting)); }},
        MOGRPO_REAL("trainer", "lr", train.optimizer.lr),
        MOGRPO_REAL("trainer", "weight_decay", train.optimizer.weight_decay),
        MOGRPO_REAL("trainer", "beta1", train.optimizer.beta1),
        MOGRPO_REAL("trainer", "beta2", train.optimizer.beta2),
        MOGRPO_REAL("trainer", "adam_eps", train.optimizer.eps),
        MOGRPO_UINT("trainer", "checkpoint_every", train.checkpoint_every, std::size_t),
        MOGRPO_REAL("trainer", "sft_top_fraction", train.sft_top_fraction),
        MOGRPO_UINT("trainer", "sft_steps", train.sft_steps, std::size_t),
        MOGRPO_UINT("trainer", "sft_batch_size", train.sft_batch_size, std::size_t),

        MOGRPO_BOOL("tdw", "enabled", train.use_tdw),
        MOGRPO_REAL("tdw", "w_max", train.tdw.w_max),
        MOGRPO_REAL("tdw", "w_min", train.tdw.w_min),
        Key{"tdw", "prompt_phase_end",
            [](RunConfig& c, const std::string& v) { c.train.tdw.prompt_phase_end = parse_int<int>(v); },
            [](const RunConfig& c) { return std::to_string(c.train.tdw.prompt_phase_end); }},
        Key{"tdw", "id_phase_start",
            [](RunConfig& c, const std::string& v) { c.train.tdw.id_phase_start = parse_int<int>(v); },
            [](const RunConfig& c) { return std::to_string(c.train.tdw.id_phase_start); }},
        MOGRPO_REAL("tdw", "steepness", train.tdw.steepness),
        MOGRPO_REAL("tdw", "midpoint", train.tdw.midpoint),
        MOGRPO_BOOL("tdw", "inverted", train.tdw.inverted),

        MOGRPO_REAL("shaping", "w_id", train.shaping.w_id),
        MOGRPO_REAL("shaping", "w_prompt", train.shaping.w_prompt),
        MOGRPO_REAL("shaping", "alpha", train.shaping.alpha),
        Key{"shaping", "synergy",
            [](RunConfig& c, const std::string& v) {
                auto fn = parse_synergy(v);
                if (!fn) throw InvalidInput("unknown synergy function '" + v + "'");
                c.train.shaping.synergy = *fn;
            },
            [](const RunConfig& c) { return std::string(to_string(c.train.shaping.synergy)); }},
        MOGRPO_REAL("shaping", "eps_std", train.shaping.eps_std),
        MOGRPO_REAL("shaping", "advantage_clip", train.shaping.advantage_clip),

        MOGRPO_UINT("env", "height", env.height, std::size_t),
        MOGRPO_UINT("env", "width", env.width, std::size_t),
        MOGRPO_REAL("env", "reward_sharpness", env.reward_sharpness),
        Key{"env", "crop_radius",
            [](RunConfig& c, const std::string& v) { c.env.crop_radius = parse_int<int>(v); },
            [](const RunConfig& c) { return std::to_string(c.env.crop_radius); }},
        MOGRPO_REAL("env", "id_mask_fraction", env.id_mask_fraction),
        MOGRPO_REAL("env", "position_margin", env.position_margin),
        MOGRPO_REALS("env", "sigma_x", env.sigma_x),
        MOGRPO_REALS("env", "sigma_y", env.sigma_y),
        MOGRPO_REALS("env", "amplitude", env.amplitude),
        MOGRPO_REALS("env", "angle", env.angle),
        MOGRPO_REALS("env", "ring_depth", env.ring_depth),
        MOGRPO_REAL("env", "copy_paste_fraction", env.copy_paste_fraction),
        MOGRPO_REAL("env", "shape_jitter", env.shape_jitter),
        MOGRPO_REAL("env", "position_jitter", env.position_jitter),

        Key{"sampler", "steps",
            [](RunConfig& c, const std::string& v) { c.train.sampler.steps = parse_int<int>(v); },
            [](const RunConfig& c) { return std::to_string(c.train.sampler.steps); }},
        MOGRPO_REAL("sampler", "noise_scale", train.sampler.schedule.scale),
        MOGRPO_REAL("sampler", "tau_min", train.sampler.tau_min),
        Key{"sampler", "mode",
            [](RunConfig& c, const std::string& v) {
                if (v == "stochastic") c.train.sampler.mode = SamplerMode::stochastic;
                else if (v == "deterministic") c.train.sampler.mode = SamplerMode::deterministic;
                else throw InvalidInput("expected stochastic or deterministic, got '" + v + "'");
            },
            [](const RunConfig& c) {
                return std::string(c.train.sampler.mode == SamplerMode::stochastic ? "stochastic" : "deterministic");
            }},
    };
    return table;
}

#undef MOGRPO_REAL
#undef MOGRPO_UINT
#undef MOGRPO_BOOL
#undef MOGRPO_REALS

inline const std::vector<std::string>& sections() {
    static const std::vector<std::string> s{"run", "model", "trainer", "tdw", "shaping", "env", "sampler"};
    return s;
}

} // namespace detail::cfg

/// The built-in configuration, available under the name "default".
inline RunConfig default_config() {
    RunConfig c;
    c.resolve();
    return c;
}

/// Parses config text on top of `base`. `source` names the input in diagnostics.
inline RunConfig parse_config(std::string_view text, const std::string& source = "<config>",
                              RunConfig base = RunConfig{}) {
    using namespace detail::cfg;
    std::map<std::string, const Key*> index;
    for (const auto& k : keys()) index[k.section + "." + k.name] = &k;
    const auto& known = sections();

    std::string section;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find_first_of("#;");
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(source, lineno, "malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (std::find(known.begin(), known.end(), section) == known.end())
                throw ConfigError(source, lineno, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source, lineno, "expected key = value, got '" + line + "'");
        if (section.empty()) throw ConfigError(source, lineno, "key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section + "." + key;
        const auto it = index.find(full);
        if (it == index.end()) throw ConfigError(source, lineno, "unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(full).second) throw ConfigError(source, lineno, "duplicate key '" + key + "'");
        try {
            it->second->set(base, value);
        } catch (const std::exception& e) {
            throw ConfigError(source, lineno, key + ": " + e.what());
        }
    }
    try {
        base.resolve();
    } catch (const std::exception& e) {
        throw ConfigError(source, 0, e.what());
    }
    return base;
}

/// Loads a config file; the name "default" selects the built-in configuration.
inline RunConfig load_config(const std::string& path_or_name) {
    if (path_or_name == "default") return default_config();
    std::ifstream is(path_or_name);
    if (!is) throw ConfigError(path_or_name, 0, "cannot open config file");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path_or_name);
}

/// Every key with its resolved value, grouped by section.
inline std::string format_config(const RunConfig& c) {
    using namespace detail::cfg;
    std::ostringstream os;
    for (const auto& sec : sections()) {
        os << "[" << sec << "]\n";
        for (const auto& k : keys())
            if (k.section == sec) os << k.name << " = " << k.get(c) << "\n";
        os << "\n";
    }
    return os.str();
}

/// Output directory after the MOGRPO_OUT environment override.
inline std::filesystem::path output_dir(const RunConfig& c) {
    if (const char* env = std::getenv("MOGRPO_OUT"); env && *env) return env;
    return c.out_dir;
}

} // namespace mogrpo
