#pragma once

#include <vector>

#include "vocaldiff/tensor.hpp"

namespace vocaldiff {

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMaxBeta = 0.999;
inline constexpr double kSnrWeightMax = 1e4;

// Per-timestep diffusion quantities. Index 0 is the clean anchor (alpha_bar = 1);
// timesteps 1..T are noised. beta[t-1] holds beta_t.
struct Schedule {
    int T = 0;
    std::vector<double> alpha_bar;
    std::vector<double> sqrt_alpha_bar;
    std::vector<double> sqrt_one_minus_alpha_bar;
    std::vector<double> beta;
    std::vector<double> snr_weight;

    double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }
    void check_timestep(int t) const;
};

// Cosine schedule alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2).
Schedule build_cosine_schedule(int T);

// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
Tensor forward_diffuse(const Tensor& x0, const Tensor& eps, int t, const Schedule& s);

// min(alpha_bar / (1 - alpha_bar), w_max)
double snr_weight(int t, const Schedule& s);

struct MixWeights {
    double global;
    double local;
};

// Soft-alignment blend: global = sqrt(alpha_bar_t), local = 1 - global.
MixWeights mix_weight(int t, const Schedule& s);

} // namespace vocaldiff
