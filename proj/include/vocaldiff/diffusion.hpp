#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vocaldiff/backbone.hpp"
#include "vocaldiff/ops.hpp"
#include "vocaldiff/optim.hpp"
#include "vocaldiff/schedule.hpp"
#include "vocaldiff/synthdata.hpp"

namespace vocaldiff {

inline constexpr double kX0Clamp = 5.0;

struct TrainConfig {
    double lr = 3.5e-4;
    std::size_t batch = 16;
    int T = 800;
    double cond_dropout = 0.1;
    double guidance_scale = 3.0;
    std::uint64_t seed = 0;
    long long steps = 0;
    double validation_fraction = 0.1;
    double weight_decay = 0.01;
    long long eval_every = 200;
    int patience = 5;
    // Cosine annealing ends at lr * lr_floor_ratio.
    double lr_floor_ratio = 0.01;

    void validate() const;
};

struct SamplerRecord {
    int t;
    double mean_v;
    double std_v;
};

// One record per executed reverse step, in execution order (t = T first).
struct SamplerTrace {
    std::vector<SamplerRecord> records;
};

// sqrt(ab) * eps - sqrt(1 - ab) * x0
Tensor v_target(const Tensor& x0, const Tensor& eps, int t, const Schedule& s);
// sqrt(ab) * x_t - sqrt(1 - ab) * v
Tensor recover_x0(const Tensor& x_t, const Tensor& v, int t, const Schedule& s);
// sqrt(1 - ab) * x_t + sqrt(ab) * v
Tensor recover_eps(const Tensor& x_t, const Tensor& v, int t, const Schedule& s);

// Unweighted mean squared error between predicted and target v.
template <typename T>
BasicTensor<T> loss_plain(const BasicTensor<T>& v_pred, const BasicTensor<T>& v_true) {
    return mse(v_pred, v_true);
}

// snr_weight(t) * MSE.
template <typename T>
BasicTensor<T> loss_snr(const BasicTensor<T>& v_pred, const BasicTensor<T>& v_true, int t,
                        const Schedule& s) {
    return scale(mse(v_pred, v_true), static_cast<T>(snr_weight(t, s)));
}

// v_uncond + g * (v_cond - v_uncond); g = 0 and g = 1 return the endpoints exactly.
Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, double g);

// Elementwise mean and population standard deviation.
struct Moments {
    double mean;
    double std;
};
Moments moments(const Tensor& x);

// Predicts v for x_t at timestep t, with or without the vocal conditioning.
using Denoiser = std::function<Tensor(const Tensor& x_t, int t, bool conditional)>;

struct SampleResult {
    Tensor sample;
    SamplerTrace trace;
};

// Full T-step ancestral DDPM sampler over v-predictions. Each step evaluates
// both branches and combines them with cfg_combine(g = guidance).
SampleResult ddpm_sample(const Denoiser& denoiser, const Shape& shape, double guidance,
                         const Schedule& s, std::uint64_t seed);

// Same chain driven by the unconditional branch alone.
SampleResult ddpm_sample_unconditional(const Denoiser& denoiser, const Shape& shape,
                                       const Schedule& s, std::uint64_t seed);

// Denoiser backed by the U-Net; z_v is encoded once up front.
Denoiser model_denoiser(const Tensor& z_v, const ModelParams& params, const UNetConfig& cfg,
                        const Schedule& s);

// Generates an accompaniment latent for z_v[64,L].
SampleResult ddpm_sample(const Tensor& z_v, const ModelParams& params, const UNetConfig& cfg,
                         const Schedule& s, double guidance, std::uint64_t seed);

struct ItemDraw {
    int t;
    Tensor eps;
    bool dropped;
};

// Per-item randomness for training step `step`, item `index`.
ItemDraw draw_training_item(std::uint64_t seed, long long step, std::size_t index,
                            const Shape& shape, const Schedule& s, double cond_dropout);

struct BatchGradients {
    double loss = 0;                // mean SNR-weighted loss over the batch
    std::vector<double> item_losses;
    std::vector<ItemDraw> draws;
    NamedGrads grads;               // mean over the batch
};

// Forward and backward for every item on a private tape; gradients are
// reduced in item order so the result does not depend on scheduling.
BatchGradients batch_gradients(std::span<const LatentPair> batch, const ModelParams& params,
                               const TrainConfig& cfg, const UNetConfig& ucfg, const Schedule& s,
                               long long step);

struct TrainStepResult {
    double loss;
    std::vector<double> item_losses;
    std::vector<ItemDraw> draws;
};

// One optimizer step. `step` is 0-based; AdamW bias correction uses step + 1.
TrainStepResult train_step(std::span<const LatentPair> batch, ModelParams& params,
                           AdamWState& opt, const TrainConfig& cfg, const UNetConfig& ucfg,
                           const Schedule& s, long long step, double lr);

// Deterministic conditional validation loss: `draws` fixed (t, eps) per pair.
double validation_loss(std::span<const LatentPair> pairs, const ModelParams& params,
                       const UNetConfig& ucfg, const Schedule& s, std::uint64_t seed,
                       std::size_t draws = 4);

} // namespace vocaldiff
