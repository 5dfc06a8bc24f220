#pragma once

#include "mogrpo/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace mogrpo::testing {

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (auto& v : t.data()) v = n(rng);
    return t;
}

/// Parameters with every entry (biases included) drawn from N(0, scale^2).
inline MlpParams random_params(const MlpArch& arch, std::mt19937_64& rng, double scale = 0.5) {
    auto p = MlpParams::zeros(arch);
    std::normal_distribution<double> n(0.0, scale);
    p.for_each_scalar([&](double& v) { v = n(rng); });
    return p;
}

} // namespace mogrpo::testing
