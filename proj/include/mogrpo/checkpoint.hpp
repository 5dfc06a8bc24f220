#pragma once

#include "mogrpo/mlp.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mogrpo {

inline constexpr std::array<char, 8> kCheckpointMagic{'M', 'O', 'G', 'R', 'P', 'O', '0', '1'};

struct Checkpoint {
    MlpParams params;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
};

namespace io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFFu));
}
inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        int c = is.get();
        if (c == EOF) throw InvalidInput("unexpected end of file");
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        int c = is.get();
        if (c == EOF) throw InvalidInput("unexpected end of file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}
inline void put_f32(std::ostream& os, double v) { put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline double get_f32(std::istream& is) { return static_cast<double>(std::bit_cast<float>(get_u32(is))); }

inline void put_header(std::ostream& os, const nlohmann::json& header) {
    const std::string text = header.dump();
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
}
inline nlohmann::json get_header(std::istream& is) {
    const auto len = get_u64(is);
    if (len > (1u << 24)) throw InvalidInput("header length implausible");
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw InvalidInput("truncated header");
    return nlohmann::json::parse(text);
}

} // namespace io

/// Rounds every parameter through f32, matching what a checkpoint round trip stores.
inline void narrow_to_f32(MlpParams& params) {
    params.for_each_scalar([](double& v) { v = static_cast<double>(static_cast<float>(v)); });
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    const auto& a = ck.params.arch;
    nlohmann::json header = {{"latent_dim", a.latent_dim},
                             {"cond_dim", a.cond_dim},
                             {"hidden", a.hidden},
                             {"output", to_string(a.output)},
                             {"data_scale", a.data_scale},
                             {"time_features", a.time_features},
                             {"step", ck.step},
                             {"seed", ck.seed},
                             {"dtype", "f32"},
                             {"parameter_count", a.parameter_count()}};
    io::put_header(os, header);
    for (const auto& l : ck.params.layers) {
        for (double w : l.weight.data()) io::put_f32(os, w);
        for (double b : l.bias.data()) io::put_f32(os, b);
    }
}

inline Checkpoint read_checkpoint(std::istream& is) {
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
        throw InvalidInput("checkpoint: bad magic");
    const auto header = io::get_header(is);
    MlpArch arch;
    arch.latent_dim = header.at("latent_dim").get<std::size_t>();
    arch.cond_dim = header.at("cond_dim").get<std::size_t>();
    arch.hidden = header.at("hidden").get<std::vector<std::size_t>>();
    const auto output = header.value("output", std::string("velocity"));
    if (output != "velocity" && output != "preconditioned")
        throw InvalidInput("checkpoint: unknown output kind " + output);
    arch.output = output == "preconditioned" ? OutputKind::preconditioned : OutputKind::velocity;
    arch.data_scale = header.value("data_scale", 0.5);
    arch.time_features = header.value("time_features", std::size_t{0});
    if (header.value("dtype", "f32") != "f32") throw InvalidInput("checkpoint: unsupported dtype");
    if (header.contains("parameter_count") && header["parameter_count"].get<std::size_t>() != arch.parameter_count())
        throw InvalidInput("checkpoint: parameter count does not match architecture");
    Checkpoint ck{MlpParams::zeros(arch), header.value("step", std::uint64_t{0}), header.value("seed", std::uint64_t{0})};
    ck.params.for_each_scalar([&](double& v) { v = io::get_f32(is); });
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("cannot open " + path.string() + " for writing");
    write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open checkpoint " + path.string());
    return read_checkpoint(is);
}

} // namespace mogrpo
