#include "vocaldiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vocaldiff/ops.hpp"

namespace vocaldiff {

void Schedule::check_timestep(int t) const {
    if (t < 0 || t > T) {
        throw ContractError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) +
                            "]");
    }
}

Schedule build_cosine_schedule(int T) {
    if (T < 2) {
        throw ConfigError("cosine schedule needs T >= 2, got " + std::to_string(T));
    }
    auto f = [T](int t) {
        const double u = (static_cast<double>(t) / T + kCosineOffset) / (1.0 + kCosineOffset);
        const double c = std::cos(u * std::numbers::pi / 2.0);
        return c * c;
    };
    Schedule s;
    s.T = T;
    const auto n = static_cast<std::size_t>(T) + 1;
    s.alpha_bar.resize(n);
    const double f0 = f(0);
    for (int t = 0; t <= T; ++t) {
        s.alpha_bar[static_cast<std::size_t>(t)] = f(t) / f0;
    }
    s.alpha_bar[0] = 1.0;
    // cos(pi/2) is exactly zero; the double evaluation leaves ~1e-33.
    s.alpha_bar[static_cast<std::size_t>(T)] = 0.0;

    s.sqrt_alpha_bar.resize(n);
    s.sqrt_one_minus_alpha_bar.resize(n);
    s.snr_weight.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double a = s.alpha_bar[t];
        s.sqrt_alpha_bar[t] = std::sqrt(a);
        s.sqrt_one_minus_alpha_bar[t] = std::sqrt(1.0 - a);
        s.snr_weight[t] = a >= 1.0 ? kSnrWeightMax : std::min(a / (1.0 - a), kSnrWeightMax);
    }
    s.beta.resize(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        const double b = 1.0 - s.alpha_bar[static_cast<std::size_t>(t)] /
                                   s.alpha_bar[static_cast<std::size_t>(t - 1)];
        s.beta[static_cast<std::size_t>(t - 1)] = std::min(b, kMaxBeta);
    }
    return s;
}

Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const Schedule& s) {
    if (x0.shape() != eps.shape()) {
        throw DimensionError("forward_diffuse: x0 " + shape_str(x0.shape()) + " vs eps " +
                             shape_str(eps.shape()));
    }
    s.check_timestep(t);
    const auto i = static_cast<std::size_t>(t);
    return add(scale(x0, static_cast<float>(s.sqrt_alpha_bar[i])),
               scale(eps, static_cast<float>(s.sqrt_one_minus_alpha_bar[i])));
}

double snr_weight(int t, const Schedule& s) {
    s.check_timestep(t);
    return s.snr_weight[static_cast<std::size_t>(t)];
}

MixWeights mix_weight(int t, const Schedule& s) {
    s.check_timestep(t);
    const double g = s.sqrt_alpha_bar[static_cast<std::size_t>(t)];
    return {g, 1.0 - g};
}

} // namespace vocaldiff
