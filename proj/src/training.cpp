#include "vocaldiff/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vocaldiff/rng.hpp"

namespace vocaldiff {

double cosine_lr(double base, double floor_ratio, long long step, long long total) {
    if (total <= 1) {
        return base;
    }
    const double floor = base * floor_ratio;
    const double frac = static_cast<double>(step) / static_cast<double>(total - 1);
    return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * frac));
}

DataSplit split_validation(std::vector<LatentPair> pairs, double fraction, std::uint64_t seed) {
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(pairs.size()) * fraction));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(seed, "split");
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<bool> is_val(pairs.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) {
        is_val[order[i]] = true;
    }
    DataSplit out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        (is_val[i] ? out.val : out.train).push_back(std::move(pairs[i]));
    }
    return out;
}

TrainOutcome run_training(ModelParams& params, AdamWState& opt, const TrainConfig& cfg,
                          const UNetConfig& ucfg, std::span<const LatentPair> train,
                          std::span<const LatentPair> val, const TrainHooks& hooks) {
    cfg.validate();
    ucfg.validate();
    if (cfg.steps > 0 && train.size() < cfg.batch) {
        throw ConfigError("need at least " + std::to_string(cfg.batch) +
                          " training pairs, have " + std::to_string(train.size()));
    }
    const Schedule s = build_cosine_schedule(cfg.T);
    TrainOutcome out;
    std::vector<std::size_t> order(train.size());
    std::size_t cursor = order.size();
    std::uint64_t epoch = 0;
    int bad_evals = 0;
    std::vector<LatentPair> batch;

    for (long long step = 0; step < cfg.steps; ++step) {
        batch.clear();
        while (batch.size() < cfg.batch) {
            if (cursor == order.size()) {
                std::iota(order.begin(), order.end(), 0);
                Rng rng = Rng::stream(cfg.seed, "data", epoch++);
                std::shuffle(order.begin(), order.end(), rng.engine());
                cursor = 0;
            }
            batch.push_back(train[order[cursor++]]);
        }
        const double lr = cosine_lr(cfg.lr, cfg.lr_floor_ratio, step, cfg.steps);
        auto r = train_step(batch, params, opt, cfg, ucfg, s, step, lr);

        TrainLogRow row{step + 1, r.loss, std::nullopt};
        bool stop = false;
        if (!val.empty() && (step + 1) % cfg.eval_every == 0) {
            const double vl = validation_loss(val, params, ucfg, s, cfg.seed);
            row.val_loss = vl;
            if (!out.best_val || vl < *out.best_val) {
                out.best_val = vl;
                bad_evals = 0;
                if (hooks.on_best) {
                    hooks.on_best(params, step + 1, vl);
                }
            } else if (++bad_evals >= cfg.patience) {
                stop = true;
            }
        }
        out.log.push_back(row);
        out.steps_run = step + 1;
        if (hooks.on_step) {
            hooks.on_step(row);
        }
        if (stop) {
            out.early_stopped = true;
            break;
        }
    }
    return out;
}

} // namespace vocaldiff
