#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vocaldiff/diffusion.hpp"

namespace vocaldiff {

struct TrainLogRow {
    long long step; // 1-based count of completed optimizer steps
    double train_loss;
    std::optional<double> val_loss;
};

struct TrainHooks {
    std::function<void(const TrainLogRow&)> on_step;
    // Called with the parameters right after a new best validation loss.
    std::function<void(const ModelParams&, long long step, double val_loss)> on_best;
};

struct TrainOutcome {
    long long steps_run = 0;
    bool early_stopped = false;
    std::optional<double> best_val;
    std::vector<TrainLogRow> log;
};

// Cosine annealing from base to base * floor_ratio; step is 0-based in [0, total).
double cosine_lr(double base, double floor_ratio, long long step, long long total);

struct DataSplit {
    std::vector<LatentPair> train;
    std::vector<LatentPair> val;
};

// floor(N * fraction) pairs, chosen by a seeded shuffle, go to validation.
DataSplit split_validation(std::vector<LatentPair> pairs, double fraction, std::uint64_t seed);

// Runs cfg.steps optimizer steps over shuffled epochs of `train`, evaluating on
// `val` every cfg.eval_every steps (skipped when val is empty) and stopping
// after cfg.patience evaluations without improvement.
TrainOutcome run_training(ModelParams& params, AdamWState& opt, const TrainConfig& cfg,
                          const UNetConfig& ucfg, std::span<const LatentPair> train,
                          std::span<const LatentPair> val, const TrainHooks& hooks = {});

} // namespace vocaldiff
