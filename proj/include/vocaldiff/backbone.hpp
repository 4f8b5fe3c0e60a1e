#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "vocaldiff/attention.hpp"
#include "vocaldiff/optim.hpp"
#include "vocaldiff/schedule.hpp"

namespace vocaldiff {

// Exact scale factor for channel widths, e.g. 1/8.
struct Rational {
    long num = 1;
    long den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;
    // Accepts "a/b", integers, or decimals with an exact power-of-two denominator ("0.125").
    static Rational parse(const std::string& text);
    bool operator==(const Rational&) const = default;
};

struct UNetConfig {
    std::size_t in_channels = 64;
    Rational width_mult{1, 1};
    std::size_t groups = 8;
    std::size_t length = 1024;
    std::size_t heads = 8;
    std::size_t window = 16;

    // 64*w, 128*w, 256*w, 512*w
    std::array<std::size_t, 4> ladder() const;
    std::size_t time_embed_dim() const;
    std::size_t head_dim() const { return ladder()[3] / heads; }
    AttentionConfig attention() const { return {heads, head_dim(), window}; }
    void validate() const;
};

template <typename T>
struct VocalEncoding {
    BasicTensor<T> tokens; // [L/4, D]
    BasicTensor<T> pooled; // [D]
};

// Randomly initialized parameters; FiLM generators, the null pooled vector and
// the output convolution start at zero.
ModelParams init_params(const UNetConfig& cfg, std::uint64_t seed);

template <typename U, typename T>
BasicParams<U> cast_params(const BasicParams<T>& params) {
    BasicParams<U> out;
    for (const auto& [name, t] : params) {
        out.emplace(name, t.template cast<U>());
    }
    return out;
}

template <typename T>
std::size_t count_params(const BasicParams<T>& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) {
        n += t.size();
    }
    return n;
}

// Parameter totals per block ("time", "down0", "mid.attn", ...), in name order.
std::map<std::string, std::size_t> param_breakdown(const ModelParams& params);

// Raw sinusoidal features: [sin(t f_0..f_{h-1}), cos(t f_0..f_{h-1})],
// f_k = 10000^(-k/h), h = dim/2.
template <typename T>
BasicTensor<T> sinusoidal_embedding(int t, std::size_t dim);

// Sinusoidal features through Linear -> SiLU -> Linear. Returns [D].
template <typename T>
BasicTensor<T> timestep_embedding(int t, const BasicParams<T>& params, const UNetConfig& cfg);

// FiLM: a learned affine maps cond_vec[D] to (scale, shift) per channel of x[C,L];
// gen_w is [D, 2C], gen_b [2C].
template <typename T>
BasicTensor<T> film(const BasicTensor<T>& x, const BasicTensor<T>& cond_vec,
                    const BasicTensor<T>& gen_w, const BasicTensor<T>& gen_b);

// Two stride-2 convolutions over z_v[64,L] give tokens [L/4, D]; pooled is their mean.
template <typename T>
VocalEncoding<T> encode_vocal(const BasicTensor<T>& z_v, const BasicParams<T>& params,
                              const UNetConfig& cfg);

// v-prediction for x_t[64,L]. Without `cond` the learned null pooled vector
// replaces the vocal stream and cross-attention is skipped.
template <typename T>
BasicTensor<T> unet_forward(const BasicTensor<T>& x_t, int t,
                            const std::optional<VocalEncoding<T>>& cond,
                            const BasicParams<T>& params, const UNetConfig& cfg,
                            const Schedule& s);

} // namespace vocaldiff
