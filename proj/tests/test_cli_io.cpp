#include "mogrpo/cli.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mogrpo;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream is(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(is, line);) out.push_back(line);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("mogrpo_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "mogrpo");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

/// A configuration small enough to run every subcommand in seconds.
const char* kTinyConfig = R"(
[run]
eval_conditions = 4
fft_trajectories = 3
[model]
hidden = 4
dataset_size = 16
pretrain_steps = 5
pretrain_batch = 4
[trainer]
iterations = 2
group_size = 3
conditions_per_iter = 2
groups_per_update = 2
timestep_subsample = 2
sft_steps = 3
sft_batch_size = 4
)";

fs::path tiny_config(const fs::path& dir) {
    const auto p = dir / "tiny.ini";
    std::ofstream(p) << kTinyConfig;
    return p;
}

} // namespace

// ---------------------------------------------------------------------------
// Spectral analysis

TEST(BandEnergy, ConstantImageIsAllDc) {
    const auto e = band_energy(Tensor({16, 16}, 0.7));
    EXPECT_NEAR(e.dc, 0.49 * 256, 1e-9);
    EXPECT_NEAR(e.low, 0.0, 1e-12);
    EXPECT_NEAR(e.high, 0.0, 1e-12);
}

TEST(BandEnergy, NyquistCheckerboardIsAllHigh) {
    Tensor img({16, 16});
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) img.at(r, c) = (r + c) % 2 ? 1.0 : -1.0;
    const auto e = band_energy(img);
    EXPECT_NEAR(e.dc, 0.0, 1e-9);
    EXPECT_NEAR(e.low, 0.0, 1e-9);
    EXPECT_NEAR(e.high, 256.0, 1e-9);
}

TEST(BandEnergy, ParsevalOnRandomImages) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const auto img = mogrpo::testing::random_tensor({16, 16}, rng);
        EXPECT_NEAR(band_energy(img, 0.3 + 0.05 * t).total(), img.squared_norm(), 1e-9 * img.squared_norm());
    }
}

TEST(BandEnergy, LowFrequencyCosineIsLowBand) {
    Tensor img({16, 16});
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) img.at(r, c) = std::cos(2.0 * std::numbers::pi * c / 16.0);
    const auto e = band_energy(img);
    EXPECT_NEAR(e.low, img.squared_norm(), 1e-9);
    EXPECT_NEAR(e.high, 0.0, 1e-9);
}

TEST(BandEnergy, RejectsNonImage) { EXPECT_THROW(band_energy(Tensor({16})), InvalidInput); }

TEST(AnalyzeFft, FractionsEndAtOne) {
    std::mt19937_64 rng(2);
    std::vector<std::vector<Tensor>> seqs(3);
    for (auto& s : seqs)
        for (int k = 0; k < 6; ++k) s.push_back(mogrpo::testing::random_tensor({8, 8}, rng, 0.5 + k));
    const auto c = analyze_fft(seqs);
    ASSERT_EQ(c.steps(), 6u);
    EXPECT_DOUBLE_EQ(c.low_fraction.back(), 1.0);
    EXPECT_DOUBLE_EQ(c.high_fraction.back(), 1.0);
    EXPECT_EQ(c.trajectories, 3u);
}

TEST(AnalyzeFft, RejectsRaggedInput) {
    std::vector<std::vector<Tensor>> seqs{{Tensor({4, 4}), Tensor({4, 4})}, {Tensor({4, 4})}};
    EXPECT_THROW(analyze_fft(seqs), InvalidInput);
    EXPECT_THROW(analyze_fft(std::vector<std::vector<Tensor>>{}), InvalidInput);
}

TEST(SettleIndex, FirstStepThatStaysAbove) {
    EXPECT_EQ(settle_index({0.1, 0.95, 0.5, 0.92, 1.0}), 3u);
    EXPECT_EQ(settle_index({0.95, 0.97, 1.0}), 0u);
    EXPECT_EQ(settle_index({0.1, 0.2, 0.5}), 3u);
}

TEST(SettleIndex, MeanOverTrajectoriesUsesEachOwnCurve) {
    // Low band: one cosine cycle across the columns; high band: the Nyquist checkerboard.
    // Band energy scales with amplitude squared, so amplitude sqrt(f) gives fraction-of-final f.
    const auto sequence = [](const std::vector<double>& low, const std::vector<double>& high) {
        std::vector<Tensor> seq;
        for (std::size_t k = 0; k < low.size(); ++k) {
            Tensor img({16, 16});
            for (std::size_t r = 0; r < 16; ++r)
                for (std::size_t c = 0; c < 16; ++c)
                    img.at(r, c) = std::sqrt(low[k]) * std::cos(2.0 * std::numbers::pi * c / 16.0) +
                                   std::sqrt(high[k]) * ((r + c) % 2 ? -1.0 : 1.0);
            seq.push_back(img);
        }
        return seq;
    };
    const std::vector<std::vector<Tensor>> seqs{
        sequence({0.1, 0.5, 0.95, 1.0, 1.0, 1.0}, {0.0, 0.0, 0.2, 0.5, 0.95, 1.0}),
        sequence({0.1, 0.5, 0.6, 0.95, 1.0, 1.0}, {0.0, 0.1, 0.2, 0.5, 0.6, 1.0})};
    const auto s = mean_settle_steps(seqs);
    EXPECT_EQ(s.trajectories, 2u);
    EXPECT_NEAR(s.low, 2.5, 1e-12);
    EXPECT_NEAR(s.high, 4.5, 1e-12);
    EXPECT_THROW(mean_settle_steps(std::vector<std::vector<Tensor>>{}), InvalidInput);
}

TEST(CleanEstimates, RecoverDataUnderConstantVelocity) {
    // For the constant field v = x1 - x0 started at x1, the clean estimate at every step is x0.
    const Tensor x0({2, 2}, {0.2, -0.4, 0.9, 0.1});
    const Tensor x1({2, 2}, {1.0, 0.5, -0.3, 0.7});
    auto field = [&](const Tensor&, double) { return x1 - x0; };
    SamplerConfig cfg;
    cfg.mode = SamplerMode::deterministic;
    Rng rng(1);
    const auto tr = sample_trajectory_from(field, x1, Tensor(), cfg, rng);
    for (const auto& e : clean_estimates(tr))
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(e[i], x0[i], 1e-12);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsRoundTripThroughText) {
    const auto def = default_config();
    const auto again = parse_config(format_config(def));
    EXPECT_EQ(format_config(again), format_config(def));
}

TEST(Config, OverridesApply) {
    const auto c = parse_config("[shaping]\nalpha = 0.8\nsynergy = max\n[model]\nhidden = 8, 4\n[run]\nseed = 5\n");
    EXPECT_EQ(c.train.shaping.alpha, 0.8);
    EXPECT_EQ(c.train.shaping.synergy, SynergyFn::max_fn);
    EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{8, 4}));
    EXPECT_EQ(c.train.seed, 5u);
}

TEST(Config, CommentsAndBlankLinesIgnored) {
    EXPECT_NO_THROW(parse_config("# leading comment\n\n[tdw]  ; trailing\nsteepness = 0.9 # note\n"));
}

struct BadConfig {
    std::string name;
    std::string text;
    std::size_t line;
    std::string fragment;
};

void PrintTo(const BadConfig& c, std::ostream* os) { *os << c.name; }

class ConfigErrors : public ::testing::TestWithParam<BadConfig> {};

TEST_P(ConfigErrors, ReportLineAndReason) {
    const auto& p = GetParam();
    try {
        parse_config(p.text, "bad.ini");
        FAIL() << "accepted: " << p.text;
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), p.line) << e.what();
        EXPECT_NE(std::string(e.what()).find(p.fragment), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("bad.ini"), std::string::npos) << e.what();
    }
}

INSTANTIATE_TEST_SUITE_P(
    Cases, ConfigErrors,
    ::testing::Values(BadConfig{"UnknownSection", "[nope]\n", 1, "unknown section"},
                      BadConfig{"UnknownKey", "[run]\nseed = 1\nbogus = 2\n", 3, "unknown key"},
                      BadConfig{"BadNumber", "[run]\nseed = abc\n", 2, "seed"},
                      BadConfig{"KeyOutsideSection", "seed = 1\n", 1, "outside any section"},
                      BadConfig{"MissingEquals", "[run]\nseed\n", 2, "key = value"},
                      BadConfig{"DuplicateKey", "[run]\nseed = 1\nseed = 2\n", 3, "duplicate"},
                      BadConfig{"MalformedHeader", "[shaping\n", 1, "malformed"},
                      BadConfig{"UnknownSynergy", "[shaping]\nsynergy = cubic\n", 2, "synergy"},
                      BadConfig{"InvalidWeights", "[tdw]\nw_min = 0.9\n", 0, "w_min"}),
    [](const auto& info) { return info.param.name; });

TEST(Config, OutputDirectoryOverride) {
    RunConfig c;
    c.out_dir = "runs/x";
    ::unsetenv("MOGRPO_OUT");
    EXPECT_EQ(output_dir(c), fs::path("runs/x"));
    ::setenv("MOGRPO_OUT", "/tmp/elsewhere", 1);
    EXPECT_EQ(output_dir(c), fs::path("/tmp/elsewhere"));
    ::unsetenv("MOGRPO_OUT");
}

TEST(Config, MissingFileIsConfigError) { EXPECT_THROW(load_config("/nonexistent/cfg.ini"), ConfigError); }

// ---------------------------------------------------------------------------
// Output files

TEST(Csv, HeaderAndShortestDoubles) {
    const auto d = fresh_dir("csv");
    {
        CsvWriter w(d / "t.csv", schema::tdw);
        w.row(0, 0.7, 0.3);
        EXPECT_THROW(w.row(1, 0.5), InvalidInput);
    }
    const auto lines = read_lines(d / "t.csv");
    ASSERT_GE(lines.size(), 2u);
    EXPECT_EQ(lines[0], "step,w_prompt,w_id");
    EXPECT_EQ(lines[1], "0,0.7,0.3");
}

TEST(Csv, TableWritersUseSchemaHeaders) {
    const auto d = fresh_dir("tables");
    write_tdw_csv(d / "tdw.csv", TdwConfig{});
    write_sars_surface_csv(d / "s.csv", sars_cross_section(1.0, -3.0, 3.0, 7, ShapingConfig{}));
    const std::vector<AdvantagePair> pairs{{1, 1}, {1, -1}};
    write_conflict_csv(d / "c.csv", conflict_stats(pairs));
    const auto tdw = read_lines(d / "tdw.csv");
    EXPECT_EQ(tdw.size(), 26u);
    EXPECT_EQ(read_lines(d / "s.csv").front(), "a_id,a_final_naive,a_final_sars");
    const auto c = read_lines(d / "c.csv");
    ASSERT_EQ(c.size(), 4u);
    EXPECT_EQ(c[1], "both_positive,0.5");
    EXPECT_EQ(c[2], "conflict,0.5");
}

TEST(Digest, StableAndSensitive) {
    const Tensor a = Tensor::vector({1.0, 2.0, 3.0});
    Tensor b = a;
    EXPECT_EQ(tensor_digest(a), tensor_digest(b));
    EXPECT_EQ(tensor_digest(a).size(), 16u);
    b[1] = std::nextafter(2.0f, 3.0f);
    EXPECT_NE(tensor_digest(a), tensor_digest(b));
    // Differences below f32 resolution collapse to the same digest.
    Tensor c = a;
    c[0] += 1e-12;
    EXPECT_EQ(tensor_digest(a), tensor_digest(c));
    // FNV-1a 64 of the empty input is the offset basis.
    EXPECT_EQ(tensor_digest(Tensor()), "cbf29ce484222325");
}

TEST(LatentDump, RoundTrip) {
    const auto d = fresh_dir("latents");
    SamplerConfig cfg;
    std::vector<Trajectory> trajs;
    Rng rng(4);
    auto field = [](const Tensor& z, double) { return z; };
    for (int i = 0; i < 2; ++i) trajs.push_back(sample_trajectory(field, {4, 4}, Tensor(), cfg, rng));
    write_latent_dump(d / "l.bin", trajs);
    const auto back = read_latent_dump(d / "l.bin");
    ASSERT_EQ(back.size(), 2u);
    ASSERT_EQ(back[0].size(), 26u);
    for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t k = 0; k < 25; ++k)
            for (std::size_t i = 0; i < 16; ++i)
                EXPECT_EQ(back[t][k][i], static_cast<double>(static_cast<float>(trajs[t].steps[k].latent[i])));
        EXPECT_EQ(back[t][25][0], static_cast<double>(static_cast<float>(trajs[t].final_sample[0])));
    }
    EXPECT_THROW(write_latent_dump(d / "x.bin", {}), InvalidInput);
}

TEST(TrajectoryJsonl, OneLinePerStep) {
    const auto d = fresh_dir("jsonl");
    SamplerConfig cfg;
    Rng rng(1);
    auto field = [](const Tensor& z, double) { return z; };
    std::vector<Trajectory> trajs{sample_trajectory(field, {2}, Tensor(), cfg, rng)};
    write_trajectory_jsonl(d / "t.jsonl", trajs);
    const auto lines = read_lines(d / "t.jsonl");
    ASSERT_EQ(lines.size(), 25u);
    const auto j = nlohmann::json::parse(lines[3]);
    EXPECT_EQ(j.at("i").get<int>(), 3);
    EXPECT_EQ(j.at("z_digest").get<std::string>(), tensor_digest(trajs[0].steps[3].latent));
    EXPECT_DOUBLE_EQ(j.at("logp").get<double>(), trajs[0].steps[3].logp);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, NoArgumentsIsUsageError) {
    const auto r = run_cli({});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE((r.out + r.err).find("pretrain"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
    const auto r = run_cli({"frobnicate"});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("frobnicate"), std::string::npos);
}

TEST(Cli, HelpExitsCleanly) { EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk); }

TEST(Cli, BadConfigExitsOneWithLine) {
    const auto d = fresh_dir("badcfg");
    std::ofstream(d / "bad.ini") << "[run]\nseed = 1\nwat = 3\n";
    const auto r = run_cli({"emit-tdw", "--config", (d / "bad.ini").string(), "--out", d.string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
    EXPECT_NE(r.err.find("bad.ini:3"), std::string::npos) << r.err;
}

TEST(Cli, EmitTdwWritesTwentyFiveRows) {
    const auto d = fresh_dir("emit_tdw");
    ASSERT_EQ(run_cli({"emit-tdw", "--config", "default", "--out", d.string()}).code, cli::kExitOk);
    const auto lines = read_lines(d / "tdw.csv");
    EXPECT_EQ(lines.size(), 26u);
    EXPECT_EQ(lines.front(), "step,w_prompt,w_id");
    EXPECT_TRUE(fs::exists(d / "manifest.json"));
    EXPECT_TRUE(fs::exists(d / "config.resolved.ini"));
    const auto m = nlohmann::json::parse(std::ifstream(d / "manifest.json"));
    EXPECT_EQ(m.at("tables").at("tdw.csv").at("schema"), "tdw/v1");
}

TEST(Cli, OutputDirectoryFromEnvironment) {
    const auto d = fresh_dir("env_out");
    ::setenv("MOGRPO_OUT", d.string().c_str(), 1);
    const auto r = run_cli({"emit-tdw"});
    ::unsetenv("MOGRPO_OUT");
    EXPECT_EQ(r.code, cli::kExitOk);
    EXPECT_TRUE(fs::exists(d / "tdw.csv"));
}

TEST(Cli, EmitSarsSurface) {
    const auto d = fresh_dir("sars");
    ASSERT_EQ(run_cli({"emit-sars-surface", "--points", "13", "--out", d.string()}).code, cli::kExitOk);
    const auto lines = read_lines(d / "sars_surface.csv");
    ASSERT_EQ(lines.size(), 14u);
    EXPECT_EQ(lines[7].substr(0, 2), "0,");
}

TEST(Cli, SeedOverrideIsRecorded) {
    const auto d = fresh_dir("seed");
    ASSERT_EQ(run_cli({"emit-tdw", "--seed", "77", "--out", d.string()}).code, cli::kExitOk);
    const auto cfg = load_config((d / "config.resolved.ini").string());
    EXPECT_EQ(cfg.seed, 77u);
}

TEST(Cli, EndToEndOnTinyConfig) {
    const auto d = fresh_dir("e2e");
    const auto cfg = tiny_config(d).string();
    const auto out = (d / "run").string();
    ASSERT_EQ(run_cli({"pretrain", "--config", cfg, "--out", out}).code, cli::kExitOk);
    EXPECT_TRUE(fs::exists(d / "run" / "pretrained.ckpt"));
    EXPECT_TRUE(fs::exists(d / "run" / "losses.csv"));

    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", out}).code, cli::kExitOk);
    const auto metrics = read_lines(d / "run" / "metrics.csv");
    EXPECT_EQ(metrics.size(), 3u);
    EXPECT_EQ(metrics.front(), "iter,mode,mean_r_id,mean_r_prompt,conflict_frac,objective,grad_norm,seconds");

    const auto final_ckpt = (d / "run" / "final.ckpt").string();
    ASSERT_EQ(run_cli({"eval", "--config", cfg, "--out", out, "--checkpoint", final_ckpt}).code, cli::kExitOk);
    const auto eval = nlohmann::json::parse(std::ifstream(d / "run" / "eval.json"));
    EXPECT_EQ(eval.at("count").get<int>(), 4);

    ASSERT_EQ(run_cli({"conflict-stats", "--config", cfg, "--out", out, "--groups", "2"}).code, cli::kExitOk);
    EXPECT_EQ(read_lines(d / "run" / "conflict.csv").size(), 4u);

    ASSERT_EQ(run_cli({"analyze-fft", "--config", cfg, "--out", out, "--checkpoint", final_ckpt, "--dump-latents"}).code,
              cli::kExitOk);
    EXPECT_EQ(read_lines(d / "run" / "fft.csv").size(), 26u);
    EXPECT_EQ(read_lines(d / "run" / "trajectories.jsonl").size(), 3u * 25u);
    const auto again = (d / "again").string();
    ASSERT_EQ(run_cli({"analyze-fft", "--config", cfg, "--out", again, "--latents",
                       (d / "run" / "latents.bin").string()})
                  .code,
              cli::kExitOk);
    EXPECT_EQ(read_lines(d / "again" / "fft.csv").size(), 26u);
    // The dump holds f32 latents; both paths must report the same band curve up to that rounding.
    const auto fresh = read_lines(d / "run" / "fft.csv"), dumped = read_lines(d / "again" / "fft.csv");
    for (std::size_t i = 1; i < fresh.size(); ++i) {
        const auto a = split_csv(fresh[i]), b = split_csv(dumped[i]);
        for (std::size_t c = 2; c < a.size(); ++c)
            EXPECT_NEAR(std::stod(a[c]), std::stod(b[c]), 1e-3 * std::max(1.0, std::abs(std::stod(a[c]))))
                << "row " << i << " column " << c;
    }

    ASSERT_EQ(run_cli({"sft", "--config", cfg, "--out", out}).code, cli::kExitOk);
}

TEST(Cli, SweepAlphaWritesFiveMetricsFiles) {
    const auto d = fresh_dir("sweep");
    const auto cfg = tiny_config(d).string();
    ASSERT_EQ(run_cli({"sweep-alpha", "--config", cfg, "--out", (d / "run").string()}).code, cli::kExitOk);
    for (const char* a : {"0.00", "0.20", "0.50", "0.80", "1.00"})
        EXPECT_TRUE(fs::exists(d / "run" / ("metrics_alpha_" + std::string(a) + ".csv"))) << a;
}

TEST(Cli, MissingCheckpointFails) {
    const auto d = fresh_dir("missing");
    const auto r = run_cli({"eval", "--config", tiny_config(d).string(), "--out", d.string(), "--checkpoint",
                            (d / "nope.ckpt").string()});
    EXPECT_EQ(r.code, cli::kExitFailure);
}
