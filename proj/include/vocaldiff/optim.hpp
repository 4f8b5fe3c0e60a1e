#pragma once

#include <map>
#include <string>
#include <vector>

#include "vocaldiff/tensor.hpp"

namespace vocaldiff {

template <typename T>
using BasicParams = std::map<std::string, BasicTensor<T>>;
using ModelParams = BasicParams<float>;
using NamedGrads = std::map<std::string, Tensor>;

struct AdamWOptions {
    double lr = 3.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// First and second moment estimates, keyed by parameter name.
struct AdamWState {
    std::map<std::string, std::vector<float>> m;
    std::map<std::string, std::vector<float>> v;
    long long step = 0;
};

// One AdamW update with bias correction and decoupled weight decay. `step`
// is the 1-based update index used for bias correction.
void adamw_step(ModelParams& params, const NamedGrads& grads, AdamWState& state,
                const AdamWOptions& opts, long long step);

} // namespace vocaldiff
