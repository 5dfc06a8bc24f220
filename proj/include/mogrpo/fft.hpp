#pragma once

// Frequency-band energy of sampler trajectories. Each step image is split by
// radial frequency into DC, a low band (0 < |k| <= k_c) and a high band, with
// energies normalized so that DC + low + high equals the pixel-domain sum of
// squares.

#include "mogrpo/flow.hpp"
#include "mogrpo/tensor.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace mogrpo {

struct BandEnergy {
    double dc = 0.0;
    double low = 0.0;
    double high = 0.0;
    double total() const noexcept { return dc + low + high; }
};

struct FftBandCurve {
    double cutoff_fraction = 0.5;
    std::size_t trajectories = 0;
    std::vector<BandEnergy> energy;  // per step, averaged over trajectories
    std::vector<double> low_fraction;  // energy[k].low / energy.back().low
    std::vector<double> high_fraction; // energy[k].high / energy.back().high

    std::size_t steps() const noexcept { return energy.size(); }
};

namespace detail {

// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwPlanDeleter {
    void operator()(fftw_plan_s* p) const {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(p);
    }
};

} // namespace detail

/// Reusable forward 2-D DFT of an h x w real image.
class Dft2d {
public:
    Dft2d(std::size_t h, std::size_t w) : h_(h), w_(w), in_(h * w), out_(h * w) {
        if (h == 0 || w == 0) throw InvalidInput("Dft2d: empty image");
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan_.reset(fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w),
                                     reinterpret_cast<fftw_complex*>(in_.data()),
                                     reinterpret_cast<fftw_complex*>(out_.data()), FFTW_FORWARD, FFTW_ESTIMATE));
        if (!plan_) throw NumericError("Dft2d: FFTW could not create a plan");
    }

    const std::vector<std::complex<double>>& operator()(const Tensor& img) {
        if (img.shape().size() != 2 || img.shape()[0] != h_ || img.shape()[1] != w_)
            throw InvalidInput("Dft2d: expected a " + std::to_string(h_) + "x" + std::to_string(w_) + " image, got " +
                               img.shape_string());
        for (std::size_t i = 0; i < img.size(); ++i) in_[i] = {img[i], 0.0};
        fftw_execute(plan_.get());
        return out_;
    }

private:
    std::size_t h_, w_;
    std::vector<std::complex<double>> in_, out_;
    std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan_;
};

/// Signed frequency index of DFT bin i for length n.
inline double signed_frequency(std::size_t i, std::size_t n) {
    return i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
}

/// Band split of one image; k_c = cutoff_fraction * H/2 in cycles per image.
inline BandEnergy band_energy(const Tensor& img, double cutoff_fraction, Dft2d& dft) {
    const auto& spec = dft(img);
    const std::size_t h = img.shape()[0], w = img.shape()[1];
    const double kc = cutoff_fraction * static_cast<double>(h) / 2.0;
    const double n = static_cast<double>(h * w);
    BandEnergy e;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const double p = std::norm(spec[r * w + c]) / n;
            if (r == 0 && c == 0) {
                e.dc += p;
                continue;
            }
            const double ky = signed_frequency(r, h), kx = signed_frequency(c, w);
            (std::hypot(kx, ky) <= kc ? e.low : e.high) += p;
        }
    return e;
}

inline BandEnergy band_energy(const Tensor& img, double cutoff_fraction = 0.5) {
    if (img.shape().size() != 2) throw InvalidInput("band_energy: expected an image, got " + img.shape_string());
    Dft2d dft(img.shape()[0], img.shape()[1]);
    return band_energy(img, cutoff_fraction, dft);
}

/// Clean-sample estimate at each step of a trajectory, x0_hat = z - tau * v, with v recovered from the
/// deterministic transition (z_i - mean_i) / dtau. Uses the recorded means, so stochastic trajectories
/// give the drift-implied estimate.
inline std::vector<Tensor> clean_estimates(const Trajectory& traj) {
    std::vector<Tensor> out;
    out.reserve(traj.steps.size());
    for (const auto& st : traj.steps) {
        Tensor x0(st.latent.shape());
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const double v = (st.latent[i] - st.mean[i]) / st.dtau;
            x0[i] = st.latent[i] - st.tau * v;
        }
        out.push_back(std::move(x0));
    }
    return out;
}

/// Clean estimates from a stored latent sequence z_0..z_T on the sampler grid. For deterministic
/// trajectories z_{i+1} is the transition mean, so this matches clean_estimates on the same run.
inline std::vector<Tensor> clean_estimates_from_latents(const std::vector<Tensor>& latents, const SamplerConfig& sampler) {
    if (latents.size() != static_cast<std::size_t>(sampler.steps) + 1)
        throw InvalidInput("clean_estimates_from_latents: expected T + 1 latents, got " + std::to_string(latents.size()));
    std::vector<Tensor> out;
    out.reserve(latents.size() - 1);
    for (int i = 0; i < sampler.steps; ++i) {
        const auto& z = latents[static_cast<std::size_t>(i)];
        const auto& next = latents[static_cast<std::size_t>(i) + 1];
        const double tau = sampler.tau(i), dtau = tau - sampler.tau(i + 1);
        Tensor x0(z.shape());
        for (std::size_t k = 0; k < x0.size(); ++k) x0[k] = z[k] - tau * (z[k] - next[k]) / dtau;
        out.push_back(std::move(x0));
    }
    return out;
}

/// Averages band energies over trajectories given as per-step image sequences of equal length.
inline FftBandCurve analyze_fft(const std::vector<std::vector<Tensor>>& sequences, double cutoff_fraction = 0.5) {
    if (sequences.empty() || sequences.front().empty()) throw InvalidInput("analyze_fft: no trajectories");
    if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.5)) throw InvalidInput("analyze_fft: cutoff_fraction outside (0, 1.5]");
    const auto& first = sequences.front().front();
    if (first.shape().size() != 2) throw InvalidInput("analyze_fft: latents are not images: " + first.shape_string());
    const std::size_t steps = sequences.front().size();
    Dft2d dft(first.shape()[0], first.shape()[1]);

    FftBandCurve curve;
    curve.cutoff_fraction = cutoff_fraction;
    curve.trajectories = sequences.size();
    curve.energy.assign(steps, {});
    const double inv = 1.0 / static_cast<double>(sequences.size());
    for (const auto& seq : sequences) {
        if (seq.size() != steps) throw InvalidInput("analyze_fft: trajectories differ in length");
        for (std::size_t k = 0; k < steps; ++k) {
            const auto e = band_energy(seq[k], cutoff_fraction, dft);
            curve.energy[k].dc += inv * e.dc;
            curve.energy[k].low += inv * e.low;
            curve.energy[k].high += inv * e.high;
        }
    }
    const auto& last = curve.energy.back();
    for (const auto& e : curve.energy) {
        curve.low_fraction.push_back(last.low > 0.0 ? e.low / last.low : 0.0);
        curve.high_fraction.push_back(last.high > 0.0 ? e.high / last.high : 0.0);
    }
    return curve;
}

/// Clean-estimate band curves of sampler trajectories.
inline FftBandCurve analyze_fft(const std::vector<Trajectory>& trajectories, double cutoff_fraction = 0.5) {
    std::vector<std::vector<Tensor>> seqs;
    seqs.reserve(trajectories.size());
    for (const auto& t : trajectories) seqs.push_back(clean_estimates(t));
    return analyze_fft(seqs, cutoff_fraction);
}

/// First step index from which the fraction stays at or above `level` through the end.
inline std::size_t settle_index(const std::vector<double>& fraction, double level = 0.9) {
    std::size_t k = fraction.size();
    while (k > 0 && fraction[k - 1] >= level) --k;
    return k;
}

struct SettleSummary {
    double low = 0.0;  // mean settle step of the low band
    double high = 0.0; // mean settle step of the high band
    std::size_t trajectories = 0;
};

/// Settle steps of every trajectory's own band curves, averaged over trajectories.
inline SettleSummary mean_settle_steps(const std::vector<std::vector<Tensor>>& sequences, double cutoff_fraction = 0.5,
                                       double level = 0.9) {
    if (sequences.empty()) throw InvalidInput("mean_settle_steps: no trajectories");
    SettleSummary out;
    for (const auto& seq : sequences) {
        const auto curve = analyze_fft(std::vector<std::vector<Tensor>>{seq}, cutoff_fraction);
        out.low += static_cast<double>(settle_index(curve.low_fraction, level));
        out.high += static_cast<double>(settle_index(curve.high_fraction, level));
    }
    out.trajectories = sequences.size();
    out.low /= static_cast<double>(out.trajectories);
    out.high /= static_cast<double>(out.trajectories);
    return out;
}

inline SettleSummary mean_settle_steps(const std::vector<Trajectory>& trajectories, double cutoff_fraction = 0.5,
                                       double level = 0.9) {
    std::vector<std::vector<Tensor>> seqs;
    seqs.reserve(trajectories.size());
    for (const auto& t : trajectories) seqs.push_back(clean_estimates(t));
    return mean_settle_steps(seqs, cutoff_fraction, level);
}

} // namespace mogrpo
