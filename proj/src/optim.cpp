#include "vocaldiff/optim.hpp"

#include <cmath>

namespace vocaldiff {

void adamw_step(ModelParams& params, const NamedGrads& grads, AdamWState& state,
                const AdamWOptions& opts, long long step) {
    if (step < 1) {
        throw ContractError("adamw_step: step must be >= 1, got " + std::to_string(step));
    }
    for (const auto& [name, p] : params) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            throw ContractError("adamw_step: no gradient for parameter '" + name + "'");
        }
        if (it->second.shape() != p.shape()) {
            throw DimensionError("adamw_step: gradient for '" + name + "' has shape " +
                                 shape_str(it->second.shape()) + ", parameter " +
                                 shape_str(p.shape()));
        }
    }
    const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
    for (auto& [name, p] : params) {
        const auto& g = grads.at(name);
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) {
            m.assign(p.size(), 0.0f);
            v.assign(p.size(), 0.0f);
        }
        std::vector<float> next(p.values());
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double gi = g[i];
            m[i] = static_cast<float>(opts.beta1 * m[i] + (1.0 - opts.beta1) * gi);
            v[i] = static_cast<float>(opts.beta2 * v[i] + (1.0 - opts.beta2) * gi * gi);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            double x = next[i];
            x -= opts.lr * opts.weight_decay * x;
            x -= opts.lr * mhat / (std::sqrt(vhat) + opts.eps);
            next[i] = static_cast<float>(x);
        }
        p = Tensor(p.shape(), std::move(next));
    }
    state.step = step;
}

} // namespace vocaldiff
