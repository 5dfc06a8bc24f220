#pragma once

// CSV / JSON outputs of the experiment tools. Each table kind has a fixed
// header and a schema id recorded in the run manifest.

#include "mogrpo/checkpoint.hpp"
#include "mogrpo/config.hpp"
#include "mogrpo/fft.hpp"
#include "mogrpo/flow.hpp"
#include "mogrpo/grpo.hpp"
#include "mogrpo/shaping.hpp"
#include "mogrpo/tdw.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace mogrpo {

struct CsvSchema {
    std::string id;
    std::vector<std::string> columns;
};

namespace schema {
inline const CsvSchema metrics{"metrics/v1",
                               {"iter", "mode", "mean_r_id", "mean_r_prompt", "conflict_frac", "objective", "grad_norm",
                                "seconds"}};
inline const CsvSchema sars_surface{"sars_surface/v1", {"a_id", "a_final_naive", "a_final_sars"}};
inline const CsvSchema conflict{"conflict/v1", {"class", "fraction"}};
inline const CsvSchema tdw{"tdw/v1", {"step", "w_prompt", "w_id"}};
inline const CsvSchema fft{"fft/v1", {"step", "tau", "dc", "low", "high", "low_fraction", "high_fraction"}};
inline const CsvSchema pareto{"pareto/v1", {"index", "r_id", "r_prompt"}};
inline const CsvSchema losses{"losses/v1", {"step", "loss"}};
} // namespace schema

/// Row-oriented CSV writer; doubles are written in their shortest round-trip form.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const CsvSchema& schema) : os_(path), columns_(schema.columns.size()) {
        if (!os_) throw InvalidInput("cannot open " + path.string() + " for writing");
        for (std::size_t i = 0; i < schema.columns.size(); ++i) os_ << (i ? "," : "") << schema.columns[i];
        os_ << '\n';
    }

    template <typename... Cells>
    void row(const Cells&... cells) {
        if (sizeof...(cells) != columns_) throw InvalidInput("CsvWriter: row width does not match the header");
        std::size_t i = 0;
        ((os_ << (i++ ? "," : ""), put(cells)), ...);
        os_ << '\n';
    }

private:
    void put(double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v); // shortest round-trip form
        os_.write(buf, res.ptr - buf);
    }
    void put(const std::string& s) { os_ << s; }
    void put(std::string_view s) { os_ << s; }
    void put(const char* s) { os_ << s; }
    template <typename T>
        requires std::is_integral_v<T>
    void put(T v) {
        os_ << v;
    }

    std::ofstream os_;
    std::size_t columns_;
};

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
    CsvWriter w(path, schema::metrics);
    for (const auto& r : records)
        w.row(r.iteration, r.mode, r.mean_r_id, r.mean_r_prompt, r.conflict_frac, r.objective, r.grad_norm, r.seconds);
}

inline void write_sars_surface_csv(const std::filesystem::path& path, const std::vector<CrossSectionRow>& rows) {
    CsvWriter w(path, schema::sars_surface);
    for (const auto& r : rows) w.row(r.a_id, r.naive, r.sars);
}

inline void write_conflict_csv(const std::filesystem::path& path, const ConflictStats& s) {
    CsvWriter w(path, schema::conflict);
    w.row("both_positive", s.fraction_both_positive());
    w.row("conflict", s.fraction_conflict());
    w.row("both_nonpositive", s.fraction_both_nonpositive());
}

inline void write_tdw_csv(const std::filesystem::path& path, const TdwConfig& cfg) {
    CsvWriter w(path, schema::tdw);
    for (int k = 0; k < cfg.total_steps; ++k) {
        const auto p = weights_at(k, cfg);
        w.row(k, p.w_prompt, p.w_id);
    }
}

inline void write_fft_csv(const std::filesystem::path& path, const FftBandCurve& curve, const SamplerConfig& sampler) {
    CsvWriter w(path, schema::fft);
    for (std::size_t k = 0; k < curve.steps(); ++k) {
        const auto& e = curve.energy[k];
        w.row(k, sampler.tau(static_cast<int>(k)), e.dc, e.low, e.high, curve.low_fraction[k], curve.high_fraction[k]);
    }
}

inline void write_pareto_csv(const std::filesystem::path& path, const EvalSummary& s) {
    CsvWriter w(path, schema::pareto);
    for (std::size_t i = 0; i < s.points.size(); ++i) w.row(i, s.points[i].r_id, s.points[i].r_prompt);
}

inline void write_losses_csv(const std::filesystem::path& path, const std::vector<double>& losses) {
    CsvWriter w(path, schema::losses);
    for (std::size_t i = 0; i < losses.size(); ++i) w.row(i, losses[i]);
}

inline nlohmann::json eval_summary_json(const EvalSummary& s) {
    return {{"mean_r_id", s.mean_r_id},
            {"std_r_id", s.std_r_id},
            {"mean_r_prompt", s.mean_r_prompt},
            {"std_r_prompt", s.std_r_prompt},
            {"count", s.points.size()}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Trajectory dumps

/// FNV-1a over the little-endian f32 encoding of the values, as 16 hex digits.
inline std::string tensor_digest(const Tensor& t) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : t.data()) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xFFu;
            h *= 0x100000001b3ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// One JSON object per step: {traj, i, tau, z_digest, mu_digest, s, logp}.
inline void write_trajectory_jsonl(const std::filesystem::path& path, const std::vector<Trajectory>& trajs) {
    std::ofstream os(path);
    if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
    for (std::size_t t = 0; t < trajs.size(); ++t)
        for (const auto& st : trajs[t].steps) {
            nlohmann::json j = {{"traj", t},          {"i", st.index},
                                {"tau", st.tau},      {"z_digest", tensor_digest(st.latent)},
                                {"mu_digest", tensor_digest(st.mean)}, {"s", st.stddev},
                                {"logp", st.logp}};
            os << j.dump() << '\n';
        }
}

inline constexpr std::array<char, 8> kLatentMagic{'M', 'O', 'G', 'L', 'A', 'T', '0', '1'};

/// Header JSON, then for every trajectory its T step latents and the final sample as f32 blocks.
inline void write_latent_dump(const std::filesystem::path& path, const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) throw InvalidInput("write_latent_dump: no trajectories");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
    os.write(kLatentMagic.data(), kLatentMagic.size());
    const auto& shape = trajs.front().final_sample.shape();
    io::put_header(os, {{"count", trajs.size()},
                        {"steps", trajs.front().steps.size()},
                        {"shape", shape},
                        {"blocks_per_trajectory", trajs.front().steps.size() + 1},
                        {"dtype", "f32"}});
    for (const auto& t : trajs) {
        for (const auto& st : t.steps)
            for (double v : st.latent.data()) io::put_f32(os, v);
        for (double v : t.final_sample.data()) io::put_f32(os, v);
    }
}

/// Per-trajectory image sequences of a latent dump (T step latents followed by the final sample).
inline std::vector<std::vector<Tensor>> read_latent_dump(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kLatentMagic) throw InvalidInput("latent dump: bad magic");
    const auto header = io::get_header(is);
    const auto count = header.at("count").get<std::size_t>();
    const auto blocks = header.at("blocks_per_trajectory").get<std::size_t>();
    const auto shape = header.at("shape").get<std::vector<std::size_t>>();
    std::vector<std::vector<Tensor>> out(count);
    for (auto& seq : out)
        for (std::size_t b = 0; b < blocks; ++b) {
            Tensor t(shape);
            for (auto& v : t.data()) v = io::get_f32(is);
            seq.push_back(std::move(t));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Run manifest

struct Manifest {
    explicit Manifest(std::string cmd) : command(std::move(cmd)) {}

    std::string command;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, const CsvSchema*> tables; // file name -> schema
    std::vector<std::string> files;                 // other outputs (checkpoints, dumps, json)
    nlohmann::json extra = nlohmann::json::object();
};

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m, const RunConfig& cfg) {
    nlohmann::json tables = nlohmann::json::object();
    for (const auto& [file, sch] : m.tables) tables[file] = {{"schema", sch->id}, {"columns", sch->columns}};
    nlohmann::json j = {{"manifest_version", 1},
                        {"command", m.command},
                        {"name", cfg.name},
                        {"seeds", m.seeds},
                        {"tables", tables},
                        {"files", m.files},
                        {"config_file", "config.resolved.ini"},
                        {"config", format_config(cfg)},
                        {"results", m.extra}};
    write_json(dir / "manifest.json", j);
}

inline void write_resolved_config(const std::filesystem::path& dir, const RunConfig& cfg) {
    std::ofstream os(dir / "config.resolved.ini");
    if (!os) throw InvalidInput("cannot write resolved config into " + dir.string());
    os << format_config(cfg);
}

} // namespace mogrpo
