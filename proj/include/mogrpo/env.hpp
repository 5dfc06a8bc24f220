#pragma once

// Synthetic subject-placement task. A subject is an anisotropic Gaussian glyph
// with optional ring modulation; a condition asks for that subject at a target
// position. The identity reward compares the generated glyph with a freshly
// rendered reference around the detected centroid (position-invariant); the
// prompt reward scores the distance between the detected centroid and the
// target (shape-invariant).

#include "mogrpo/checkpoint.hpp"
#include "mogrpo/tensor.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace mogrpo {

struct SubjectSpec {
    double sigma_x = 1.5;
    double sigma_y = 1.5;
    double amplitude = 1.0;
    double angle = 0.0;      // radians
    double ring_depth = 0.0; // halo strength in [0, 1]

    double max_sigma() const noexcept { return std::max(sigma_x, sigma_y); }
    bool operator==(const SubjectSpec&) const = default;
};

struct Point {
    double x = 0.0; // column
    double y = 0.0; // row
    bool operator==(const Point&) const = default;
};

struct Condition {
    Point target;
    SubjectSpec subject;
    bool operator==(const Condition&) const = default;
};

/// Sampling grid for conditions and reward settings.
struct EnvConfig {
    std::size_t height = 16;
    std::size_t width = 16;
    double reward_sharpness = 2.0; // rho in exp(-d^2 / (2 rho^2))
    int crop_radius = 4;           // 9x9 window
    double id_mask_fraction = 0.25; // background mask for the identity comparison
    double position_margin = 4.0;  // targets lie in [margin, W-1-margin]
    std::vector<double> sigma_x{1.0, 1.5, 2.0};
    std::vector<double> sigma_y{1.0, 1.5, 2.0};
    std::vector<double> amplitude{0.8, 1.0};
    std::vector<double> angle{0.0, std::numbers::pi / 4.0};
    std::vector<double> ring_depth{0.0, 0.6};
    // Imperfections of the pretraining corpus. A `copy_paste_fraction` of items show the reference
    // pasted at the canonical position instead of at the target; the rest are rendered with glyph
    // widths scaled by exp(N(0, shape_jitter^2)) and the position offset by N(0, position_jitter^2).
    double copy_paste_fraction = 0.3;
    double shape_jitter = 0.3;
    double position_jitter = 0.0;

    Point canonical_position() const { return {static_cast<double>(width / 2), static_cast<double>(height / 2)}; }
    std::size_t pixels() const noexcept { return height * width; }
    /// Reference image pixels followed by the normalized target position.
    std::size_t cond_dim() const noexcept { return pixels() + 2; }

    double position_lo() const noexcept { return position_margin; }
    double position_hi_x() const noexcept { return static_cast<double>(width) - 1.0 - position_margin; }
    double position_hi_y() const noexcept { return static_cast<double>(height) - 1.0 - position_margin; }

    void validate() const {
        if (height < 8 || width < 8) throw InvalidInput("env: image must be at least 8x8");
        if (!(reward_sharpness > 0.0)) throw InvalidInput("env: reward_sharpness must be > 0");
        if (crop_radius < 1) throw InvalidInput("env: crop_radius must be >= 1");
        if (!(id_mask_fraction >= 0.0 && id_mask_fraction < 1.0)) throw InvalidInput("env: id_mask_fraction outside [0, 1)");
        if (2.0 * (sigma_x.empty() ? 0.0 : *std::max_element(sigma_x.begin(), sigma_x.end())) > position_margin ||
            2.0 * (sigma_y.empty() ? 0.0 : *std::max_element(sigma_y.begin(), sigma_y.end())) > position_margin)
            throw InvalidInput("env: position margin must be at least 2 sigma");
        if (position_hi_x() < position_lo() || position_hi_y() < position_lo())
            throw InvalidInput("env: position margin leaves no admissible region");
        for (const auto* grid : {&sigma_x, &sigma_y, &amplitude, &angle, &ring_depth})
            if (grid->empty()) throw InvalidInput("env: empty subject grid");
        const double limit = std::min(width, height) / 4.0;
        for (double s : sigma_x)
            if (s < 0.5 || s > limit) throw InvalidInput("env: sigma_x outside [0.5, W/4]");
        for (double s : sigma_y)
            if (s < 0.5 || s > limit) throw InvalidInput("env: sigma_y outside [0.5, W/4]");
        for (double a : amplitude)
            if (!(a > 0.0 && a <= 1.0)) throw InvalidInput("env: amplitude outside (0, 1]");
        for (double m : ring_depth)
            if (m < 0.0 || m > 1.0) throw InvalidInput("env: ring depth outside [0, 1]");
        if (!(copy_paste_fraction >= 0.0 && copy_paste_fraction <= 1.0))
            throw InvalidInput("env: copy_paste_fraction outside [0, 1]");
        if (shape_jitter < 0.0 || position_jitter < 0.0) throw InvalidInput("env: negative jitter");
    }
};

// Halo ring at 2 sigma; its peak stays below half the core so it never enters the centroid mask.
inline constexpr double kHaloRadius = 2.0;
inline constexpr double kHaloWidth = 0.35;
inline constexpr double kHaloHeight = 0.35;

/// Deterministic analytic raster of the glyph centered at `pos`, values in [0, 1].
inline Tensor render_subject(const SubjectSpec& spec, Point pos, std::size_t height, std::size_t width) {
    const double margin = 2.0 * spec.max_sigma();
    if (pos.x < margin || pos.y < margin || pos.x > static_cast<double>(width) - 1.0 - margin ||
        pos.y > static_cast<double>(height) - 1.0 - margin)
        throw InvalidInput("render_subject: position closer than 2 sigma to the border");
    Tensor img({height, width});
    const double c = std::cos(spec.angle), s = std::sin(spec.angle);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t col = 0; col < width; ++col) {
            const double dx = static_cast<double>(col) - pos.x;
            const double dy = static_cast<double>(r) - pos.y;
            const double u = (c * dx + s * dy) / spec.sigma_x;
            const double w = (-s * dx + c * dy) / spec.sigma_y;
            const double q = u * u + w * w;
            const double halo = (std::sqrt(q) - kHaloRadius) / kHaloWidth;
            const double core = std::exp(-0.5 * q);
            const double ring = kHaloHeight * spec.ring_depth * std::exp(-0.5 * halo * halo);
            img.at(r, col) = spec.amplitude * std::min(1.0, core + ring); // ring tail overlaps the core peak slightly
        }
    }
    return img;
}

inline Tensor render_reference(const SubjectSpec& spec, const EnvConfig& env) {
    return render_subject(spec, env.canonical_position(), env.height, env.width);
}

/// Network-facing encoding: canonical-position reference raster, then target (x, y) scaled to [-1, 1].
inline Tensor encode_condition(const Condition& cond, const EnvConfig& env) {
    const Tensor ref = render_reference(cond.subject, env);
    std::vector<double> v(ref.values().begin(), ref.values().end());
    v.push_back(2.0 * cond.target.x / (static_cast<double>(env.width) - 1.0) - 1.0);
    v.push_back(2.0 * cond.target.y / (static_cast<double>(env.height) - 1.0) - 1.0);
    return Tensor::vector(std::move(v));
}

/// Clamps a latent into a valid image sample.
inline Tensor to_image(const Tensor& latent, const EnvConfig& env) {
    Tensor img({env.height, env.width});
    if (latent.size() != img.size()) throw InvalidInput("to_image: latent size does not match image");
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::isfinite(latent[i]) ? std::clamp(latent[i], 0.0, 1.0) : 0.0;
    return img;
}

/// Centroid weighted by intensity above half the maximum (pixels below it get zero weight).
inline Point detect_centroid(const Tensor& img) {
    if (img.rank() != 2) throw InvalidInput("detect_centroid: expected a 2-D image");
    const double peak = *std::max_element(img.values().begin(), img.values().end());
    if (!(peak > 0.0)) throw InvalidInput("detect_centroid: image has no positive intensity");
    const double thr = 0.5 * peak;
    const std::size_t h = img.shape()[0], w = img.shape()[1];
    double mass = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double v = img.at(r, c);
            if (v < thr) continue;
            const double wgt = v - thr;
            mass += wgt;
            sx += wgt * static_cast<double>(c);
            sy += wgt * static_cast<double>(r);
        }
    if (!(mass > 0.0)) // flat image: every pixel sits exactly at the threshold
        return {0.5 * (static_cast<double>(w) - 1.0), 0.5 * (static_cast<double>(h) - 1.0)};
    return {sx / mass, sy / mass};
}

namespace detail {

/// (2r+1)^2 window centered on an integer pixel; outside pixels read as zero.
inline std::vector<double> crop(const Tensor& img, long cx, long cy, int radius) {
    const auto h = static_cast<long>(img.shape()[0]);
    const auto w = static_cast<long>(img.shape()[1]);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)));
    for (long dy = -radius; dy <= radius; ++dy)
        for (long dx = -radius; dx <= radius; ++dx) {
            const long r = cy + dy, c = cx + dx;
            out.push_back(r < 0 || c < 0 || r >= h || c >= w
                              ? 0.0
                              : img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
        }
    return out;
}

/// Cosine similarity over pixels where either patch reaches `mask_fraction` of its own maximum.
inline double masked_ncc(const std::vector<double>& a, const std::vector<double>& b, double mask_fraction) {
    const double ma = *std::max_element(a.begin(), a.end());
    const double mb = *std::max_element(b.begin(), b.end());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < mask_fraction * ma && b[i] < mask_fraction * mb) continue;
        sab += a[i] * b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace detail

struct RewardBreakdown {
    double r_id = 0.0;
    double r_prompt = 0.0;
    Point centroid;
    bool detected = false;
};

/// Identity reward: max(0, masked NCC) between the window around the sample's centroid and the same window
/// of a reference rendered at the canonical position with the sample's sub-pixel phase.
inline double reward_id(const Tensor& sample, const Condition& cond, const EnvConfig& env,
                        std::optional<Point> centroid = std::nullopt) {
    Point c;
    try {
        c = centroid ? *centroid : detect_centroid(sample);
    } catch (const InvalidInput&) {
        return 0.0;
    }
    const long ix = std::lround(c.x), iy = std::lround(c.y);
    const Point anchor = env.canonical_position();
    const Tensor ref = render_subject(cond.subject, {anchor.x + (c.x - ix), anchor.y + (c.y - iy)}, env.height, env.width);
    const auto a = detail::crop(sample, ix, iy, env.crop_radius);
    const auto b = detail::crop(ref, std::lround(anchor.x), std::lround(anchor.y), env.crop_radius);
    return std::max(0.0, detail::masked_ncc(a, b, env.id_mask_fraction));
}

/// Prompt reward: exp(-d^2 / (2 rho^2)) with d the centroid-to-target distance.
inline double reward_prompt(const Tensor& sample, const Condition& cond, const EnvConfig& env,
                            std::optional<Point> centroid = std::nullopt) {
    Point c;
    try {
        c = centroid ? *centroid : detect_centroid(sample);
    } catch (const InvalidInput&) {
        return 0.0;
    }
    const double dx = c.x - cond.target.x, dy = c.y - cond.target.y;
    const double rho = env.reward_sharpness;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * rho * rho));
}

inline RewardBreakdown score_sample(const Tensor& image, const Condition& cond, const EnvConfig& env) {
    RewardBreakdown out;
    try {
        out.centroid = detect_centroid(image);
    } catch (const InvalidInput&) {
        return out;
    }
    out.detected = true;
    out.r_id = reward_id(image, cond, env, out.centroid);
    out.r_prompt = reward_prompt(image, cond, env, out.centroid);
    return out;
}

// ---------------------------------------------------------------------------
// Dataset

struct DatasetItem {
    Condition cond;
    Tensor image;
};

template <typename T>
const T& pick(const std::vector<T>& grid, Rng& rng) {
    std::uniform_int_distribution<std::size_t> u(0, grid.size() - 1);
    return grid[u(rng)];
}

inline Condition sample_condition(const EnvConfig& env, Rng& rng) {
    Condition c;
    c.subject.sigma_x = pick(env.sigma_x, rng);
    c.subject.sigma_y = pick(env.sigma_y, rng);
    c.subject.amplitude = pick(env.amplitude, rng);
    c.subject.angle = pick(env.angle, rng);
    c.subject.ring_depth = pick(env.ring_depth, rng);
    std::uniform_real_distribution<double> ux(env.position_lo(), env.position_hi_x());
    std::uniform_real_distribution<double> uy(env.position_lo(), env.position_hi_y());
    c.target.x = ux(rng);
    c.target.y = uy(rng);
    return c;
}

/// The image a pretraining item shows for condition `c`: a pasted reference or a jittered rendering.
inline Tensor render_training_image(const Condition& c, const EnvConfig& env, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    if (u01(rng) < env.copy_paste_fraction) return render_reference(c.subject, env);
    SubjectSpec s = c.subject;
    const double limit = env.position_margin / 2.0;
    s.sigma_x = std::clamp(s.sigma_x * std::exp(env.shape_jitter * n01(rng)), 0.5, limit);
    s.sigma_y = std::clamp(s.sigma_y * std::exp(env.shape_jitter * n01(rng)), 0.5, limit);
    const double mx = 2.0 * s.max_sigma();
    const double w = static_cast<double>(env.width), h = static_cast<double>(env.height);
    Point p{c.target.x + env.position_jitter * n01(rng), c.target.y + env.position_jitter * n01(rng)};
    p.x = std::clamp(p.x, mx, w - 1.0 - mx);
    p.y = std::clamp(p.y, mx, h - 1.0 - mx);
    return render_subject(s, p, env.height, env.width);
}

/// n conditions drawn uniformly over the grid, each paired with a corpus image.
inline std::vector<DatasetItem> make_dataset(std::size_t n, const EnvConfig& env, Rng& rng) {
    if (n < 1) throw InvalidInput("make_dataset: n must be >= 1");
    env.validate();
    std::vector<DatasetItem> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = sample_condition(env, rng);
        Tensor img = render_training_image(c, env, rng);
        out.push_back({c, std::move(img)});
    }
    return out;
}

inline constexpr std::array<char, 8> kDatasetMagic{'M', 'O', 'G', 'D', 'A', 'T', '0', '1'};

/// Header JSON, then per item: 7 little-endian f64 condition parameters and H*W f32 pixels.
inline void save_dataset(const std::filesystem::path& path, const std::vector<DatasetItem>& items,
                         const EnvConfig& env, std::uint64_t seed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("cannot open " + path.string());
    os.write(kDatasetMagic.data(), kDatasetMagic.size());
    nlohmann::json header = {{"height", env.height},
                             {"width", env.width},
                             {"count", items.size()},
                             {"seed", seed},
                             {"position_range", {env.position_lo(), env.position_hi_x(), env.position_hi_y()}},
                             {"sigma_x", env.sigma_x},
                             {"sigma_y", env.sigma_y},
                             {"amplitude", env.amplitude},
                             {"angle", env.angle},
                             {"ring_depth", env.ring_depth},
                             {"copy_paste_fraction", env.copy_paste_fraction},
                             {"shape_jitter", env.shape_jitter},
                             {"position_jitter", env.position_jitter},
                             {"condition_fields", {"cx", "cy", "sigma_x", "sigma_y", "amplitude", "angle", "ring_depth"}}};
    io::put_header(os, header);
    for (const auto& it : items) {
        const auto& s = it.cond.subject;
        for (double v : {it.cond.target.x, it.cond.target.y, s.sigma_x, s.sigma_y, s.amplitude, s.angle, s.ring_depth})
            io::put_u64(os, std::bit_cast<std::uint64_t>(v));
        for (double p : it.image.data()) io::put_f32(os, p);
    }
}

inline std::vector<DatasetItem> load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kDatasetMagic) throw InvalidInput("dataset: bad magic");
    const auto header = io::get_header(is);
    const auto h = header.at("height").get<std::size_t>();
    const auto w = header.at("width").get<std::size_t>();
    const auto n = header.at("count").get<std::size_t>();
    std::vector<DatasetItem> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::array<double, 7> f{};
        for (auto& v : f) v = std::bit_cast<double>(io::get_u64(is));
        DatasetItem it{{{f[0], f[1]}, {f[2], f[3], f[4], f[5], f[6]}}, Tensor({h, w})};
        for (auto& p : it.image.data()) p = io::get_f32(is);
        items.push_back(std::move(it));
    }
    return items;
}

} // namespace mogrpo
