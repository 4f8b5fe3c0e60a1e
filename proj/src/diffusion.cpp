#include "vocaldiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "vocaldiff/rng.hpp"

namespace vocaldiff {

void TrainConfig::validate() const {
    if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) {
        throw ConfigError("cond_dropout must lie in [0, 1]");
    }
    if (guidance_scale < 0.0) {
        throw ConfigError("guidance scale must be >= 0");
    }
    if (batch < 1) {
        throw ConfigError("batch size must be >= 1");
    }
    if (T < 2) {
        throw ConfigError("need at least 2 timesteps");
    }
    if (lr <= 0.0) {
        throw ConfigError("learning rate must be positive");
    }
    if (steps < 0) {
        throw ConfigError("step count must be >= 0");
    }
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("validation fraction must lie in [0, 1)");
    }
    if (eval_every < 1 || patience < 1) {
        throw ConfigError("eval_every and patience must be positive");
    }
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

Tensor lincomb(const Tensor& a, double ca, const Tensor& b, double cb) {
    return add(scale(a, static_cast<float>(ca)), scale(b, static_cast<float>(cb)));
}

} // namespace

Tensor v_target(const Tensor& x0, const Tensor& eps, int t, const Schedule& s) {
    require_same(x0, eps, "v_target");
    s.check_timestep(t);
    const auto i = static_cast<std::size_t>(t);
    return lincomb(eps, s.sqrt_alpha_bar[i], x0, -s.sqrt_one_minus_alpha_bar[i]);
}

Tensor recover_x0(const Tensor& x_t, const Tensor& v, int t, const Schedule& s) {
    require_same(x_t, v, "recover_x0");
    s.check_timestep(t);
    const auto i = static_cast<std::size_t>(t);
    return lincomb(x_t, s.sqrt_alpha_bar[i], v, -s.sqrt_one_minus_alpha_bar[i]);
}

Tensor recover_eps(const Tensor& x_t, const Tensor& v, int t, const Schedule& s) {
    require_same(x_t, v, "recover_eps");
    s.check_timestep(t);
    const auto i = static_cast<std::size_t>(t);
    return lincomb(x_t, s.sqrt_one_minus_alpha_bar[i], v, s.sqrt_alpha_bar[i]);
}

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, double g) {
    require_same(v_cond, v_uncond, "cfg_combine");
    if (g == 0.0) {
        return v_uncond.detach();
    }
    if (g == 1.0) {
        return v_cond.detach();
    }
    std::vector<float> out(v_cond.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(v_uncond[i] + g * (static_cast<double>(v_cond[i]) - v_uncond[i]));
    }
    return Tensor(v_cond.shape(), std::move(out));
}

Moments moments(const Tensor& x) {
    double m = 0;
    for (float v : x.data()) {
        m += v;
    }
    m /= static_cast<double>(x.size());
    double var = 0;
    for (float v : x.data()) {
        var += (v - m) * (v - m);
    }
    return {m, std::sqrt(var / static_cast<double>(x.size()))};
}

namespace {

SampleResult run_sampler(const std::function<Tensor(const Tensor&, int)>& predict,
                         const Shape& shape, const Schedule& s, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "sample");
    Tensor x = rng.normal_tensor(shape);
    SamplerTrace trace;
    trace.records.reserve(static_cast<std::size_t>(s.T));
    for (int t = s.T; t >= 1; --t) {
        Tensor v = predict(x, t);
        auto mom = moments(v);
        trace.records.push_back({t, mom.mean, mom.std});

        Tensor x0 = recover_x0(x, v, t, s);
        const auto ti = static_cast<std::size_t>(t);
        const double ab = s.alpha_bar[ti];
        const double ab_prev = s.alpha_bar[ti - 1];
        const double beta = s.beta_at(t);
        const double coef_x0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
        const double coef_xt = (1.0 - ab_prev) * std::sqrt(1.0 - beta) / (1.0 - ab);
        const double sigma = t > 1 ? std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab)) : 0.0;
        std::vector<float> next(x.size());
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double x0c = std::clamp(static_cast<double>(x0[i]), -kX0Clamp, kX0Clamp);
            double m = coef_x0 * x0c + coef_xt * x[i];
            if (t > 1) {
                m += sigma * rng.normal();
            }
            next[i] = static_cast<float>(m);
        }
        x = Tensor(shape, std::move(next));
    }
    return {x, std::move(trace)};
}

} // namespace

SampleResult ddpm_sample(const Denoiser& denoiser, const Shape& shape, double guidance,
                         const Schedule& s, std::uint64_t seed) {
    if (guidance < 0.0) {
        throw ConfigError("guidance scale must be >= 0");
    }
    return run_sampler(
        [&](const Tensor& x, int t) {
            return cfg_combine(denoiser(x, t, true), denoiser(x, t, false), guidance);
        },
        shape, s, seed);
}

SampleResult ddpm_sample_unconditional(const Denoiser& denoiser, const Shape& shape,
                                       const Schedule& s, std::uint64_t seed) {
    return run_sampler([&](const Tensor& x, int t) { return denoiser(x, t, false); }, shape, s,
                       seed);
}

Denoiser model_denoiser(const Tensor& z_v, const ModelParams& params, const UNetConfig& cfg,
                        const Schedule& s) {
    auto enc = std::make_shared<VocalEncoding<float>>(encode_vocal(z_v, params, cfg));
    return [enc, &params, &cfg, &s](const Tensor& x_t, int t, bool conditional) {
        std::optional<VocalEncoding<float>> cond;
        if (conditional) {
            cond = *enc;
        }
        return unet_forward(x_t, t, cond, params, cfg, s);
    };
}

SampleResult ddpm_sample(const Tensor& z_v, const ModelParams& params, const UNetConfig& cfg,
                         const Schedule& s, double guidance, std::uint64_t seed) {
    cfg.validate();
    if (z_v.rank() != 2 || z_v.dim(0) != cfg.in_channels || z_v.dim(1) % 8 != 0) {
        throw ConfigError("sampler needs a [" + std::to_string(cfg.in_channels) +
                          ", L] vocal latent with L divisible by 8, got " +
                          shape_str(z_v.shape()));
    }
    return ddpm_sample(model_denoiser(z_v, params, cfg, s), z_v.shape(), guidance, s, seed);
}

ItemDraw draw_training_item(std::uint64_t seed, long long step, std::size_t index,
                            const Shape& shape, const Schedule& s, double cond_dropout) {
    Rng rng = Rng::stream(seed, "train", static_cast<std::uint64_t>(step), index);
    ItemDraw d;
    d.t = static_cast<int>(rng.uniform_int(1, s.T));
    d.dropped = rng.bernoulli(cond_dropout);
    d.eps = rng.normal_tensor(shape);
    return d;
}

namespace {

struct ItemResult {
    double loss = 0;
    NamedGrads grads;
};

ItemResult item_gradients(const LatentPair& pair, const ItemDraw& draw, const ModelParams& params,
                          const UNetConfig& ucfg, const Schedule& s) {
    Tape tape;
    TapeScope<float> scope(tape);
    ModelParams watched;
    std::map<std::string, NodeId> ids;
    for (const auto& [name, p] : params) {
        auto w = tape.watch(p);
        ids.emplace(name, *w.node_id());
        watched.emplace(name, std::move(w));
    }
    Tensor x_t = forward_diffuse(pair.z_a, draw.eps, draw.t, s);
    Tensor v_true = v_target(pair.z_a, draw.eps, draw.t, s);
    std::optional<VocalEncoding<float>> cond;
    if (!draw.dropped) {
        cond = encode_vocal(pair.z_v, watched, ucfg);
    }
    Tensor v_pred = unet_forward(x_t, draw.t, cond, watched, ucfg, s);
    Tensor loss = loss_snr(v_pred, v_true, draw.t, s);
    auto grads = tape.backward(loss);
    ItemResult out;
    out.loss = loss.item();
    for (const auto& [name, id] : ids) {
        out.grads.emplace(name, grads.at(id));
    }
    return out;
}

std::size_t worker_count(std::size_t items) {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    return std::min(items, hw);
}

} // namespace

BatchGradients batch_gradients(std::span<const LatentPair> batch, const ModelParams& params,
                               const TrainConfig& cfg, const UNetConfig& ucfg, const Schedule& s,
                               long long step) {
    if (batch.empty()) {
        throw ContractError("train_step: empty batch");
    }
    BatchGradients out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.draws.push_back(
            draw_training_item(cfg.seed, step, i, batch[i].z_a.shape(), s, cfg.cond_dropout));
    }
    std::vector<ItemResult> results(batch.size());
    const std::size_t workers = worker_count(batch.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            results[i] = item_gradients(batch[i], out.draws[i], params, ucfg, s);
        }
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < batch.size(); i += workers) {
                    results[i] = item_gradients(batch[i], out.draws[i], params, ucfg, s);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }

    const float inv = 1.0f / static_cast<float>(batch.size());
    std::map<std::string, std::vector<float>> acc;
    for (const auto& r : results) {
        out.item_losses.push_back(r.loss);
        out.loss += r.loss;
        for (const auto& [name, g] : r.grads) {
            auto& a = acc[name];
            if (a.empty()) {
                a.assign(g.size(), 0.0f);
            }
            for (std::size_t i = 0; i < a.size(); ++i) {
                a[i] += g[i];
            }
        }
    }
    out.loss /= static_cast<double>(batch.size());
    for (auto& [name, a] : acc) {
        for (auto& v : a) {
            v *= inv;
        }
        out.grads.emplace(name, Tensor(params.at(name).shape(), std::move(a)));
    }
    return out;
}

TrainStepResult train_step(std::span<const LatentPair> batch, ModelParams& params,
                           AdamWState& opt, const TrainConfig& cfg, const UNetConfig& ucfg,
                           const Schedule& s, long long step, double lr) {
    auto bg = batch_gradients(batch, params, cfg, ucfg, s, step);
    AdamWOptions o;
    o.lr = lr;
    o.weight_decay = cfg.weight_decay;
    adamw_step(params, bg.grads, opt, o, step + 1);
    return {bg.loss, std::move(bg.item_losses), std::move(bg.draws)};
}

double validation_loss(std::span<const LatentPair> pairs, const ModelParams& params,
                       const UNetConfig& ucfg, const Schedule& s, std::uint64_t seed,
                       std::size_t draws) {
    if (pairs.empty()) {
        throw ContractError("validation_loss: no pairs");
    }
    double total = 0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        const auto& pair = pairs[j];
        auto enc = std::optional<VocalEncoding<float>>(encode_vocal(pair.z_v, params, ucfg));
        for (std::size_t d = 0; d < draws; ++d) {
            Rng rng = Rng::stream(seed, "validation", j, d);
            const int t = static_cast<int>(rng.uniform_int(1, s.T));
            Tensor eps = rng.normal_tensor(pair.z_a.shape());
            Tensor x_t = forward_diffuse(pair.z_a, eps, t, s);
            Tensor v = unet_forward(x_t, t, enc, params, ucfg, s);
            total += loss_snr(v, v_target(pair.z_a, eps, t, s), t, s).item();
            ++n;
        }
    }
    return total / static_cast<double>(n);
}

} // namespace vocaldiff
