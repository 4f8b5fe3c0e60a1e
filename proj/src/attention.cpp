#include "vocaldiff/attention.hpp"

#include <cmath>
#include <numeric>

namespace vocaldiff {

void AttentionConfig::validate() const {
    if (heads < 1) {
        throw ConfigError("attention needs at least one head");
    }
    if (window < 1) {
        throw ConfigError("attention window must be >= 1");
    }
    if (head_dim < 2 || head_dim % 2 != 0) {
        throw ConfigError("attention head_dim must be even for rotary pairing, got " +
                          std::to_string(head_dim));
    }
}

namespace {

Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return rng.uniform_tensor(shape, -bound, bound);
}

} // namespace

void add_attention_params(ModelParams& params, const std::string& prefix,
                          const AttentionConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.model_dim();
    for (const char* which : {"q", "k", "v"}) {
        params[prefix + ".local_" + which + ".w"] =
            fan_in_uniform({c, c, kLocalProjectionKernel}, c * kLocalProjectionKernel, rng);
        params[prefix + ".local_" + which + ".b"] = Tensor::zeros({c});
    }
    for (const char* which : {"q", "k", "v"}) {
        params[prefix + ".global_" + which + ".w"] = fan_in_uniform({c, c, 1}, c, rng);
        params[prefix + ".global_" + which + ".b"] = Tensor::zeros({c});
    }
    params[prefix + ".out.w"] = fan_in_uniform({c, c, 1}, c, rng);
    params[prefix + ".out.b"] = Tensor::zeros({c});
}

template <typename T>
AttentionParams<T> attention_params_view(const BasicParams<T>& params, const std::string& prefix) {
    auto get = [&](const std::string& name) -> const BasicTensor<T>& {
        auto it = params.find(prefix + "." + name);
        if (it == params.end()) {
            throw ConfigError("missing attention parameter '" + prefix + "." + name + "'");
        }
        return it->second;
    };
    return AttentionParams<T>{
        get("local_q.w"),  get("local_q.b"),  get("local_k.w"),  get("local_k.b"),
        get("local_v.w"),  get("local_v.b"),  get("global_q.w"), get("global_q.b"),
        get("global_k.w"), get("global_k.b"), get("global_v.w"), get("global_v.b"),
        get("out.w"),      get("out.b"),
    };
}

template <typename T>
BasicTensor<T> attention_weights(const BasicTensor<T>& q, const BasicTensor<T>& k) {
    const auto d = static_cast<double>(q.dim(1));
    return softmax(scale(matmul(q, transpose(k)), static_cast<T>(1.0 / std::sqrt(d))));
}

template <typename T>
BasicTensor<T> scaled_dot_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                    const BasicTensor<T>& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
        v.dim(0) != k.dim(0)) {
        throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " +
                             shape_str(k.shape()) + ", v " + shape_str(v.shape()));
    }
    return matmul(attention_weights(q, k), v);
}

template <typename T>
BasicTensor<T> global_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, std::span<const double> positions) {
    return scaled_dot_attention(rope_rotate(q, positions), rope_rotate(k, positions), v);
}

template <typename T>
BasicTensor<T> global_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v) {
    std::vector<double> positions(q.dim(0));
    std::iota(positions.begin(), positions.end(), 0.0);
    return global_attention(q, k, v, std::span<const double>(positions));
}

template <typename T>
BasicTensor<T> split_head(const BasicTensor<T>& x, std::size_t head, std::size_t head_dim) {
    return transpose(slice(x, head * head_dim, head_dim));
}

template <typename T>
BasicTensor<T> merge_heads(const std::vector<BasicTensor<T>>& heads) {
    std::vector<BasicTensor<T>> rows;
    rows.reserve(heads.size());
    for (const auto& h : heads) {
        rows.push_back(transpose(h));
    }
    return concat(rows);
}

template <typename T>
SoftAlignBranches<T> soft_align_branches(const BasicTensor<T>& x, const AttentionConfig& cfg,
                                         const AttentionParams<T>& p) {
    cfg.validate();
    if (x.rank() != 2 || x.dim(0) != cfg.model_dim()) {
        throw ConfigError("soft alignment attention expects " + std::to_string(cfg.model_dim()) +
                          " channels, got input " + shape_str(x.shape()));
    }
    const std::size_t pad = kLocalProjectionKernel / 2;
    auto lq = conv1d(x, p.local_q_w, p.local_q_b, 1, pad);
    auto lk = conv1d(x, p.local_k_w, p.local_k_b, 1, pad);
    auto lv = conv1d(x, p.local_v_w, p.local_v_b, 1, pad);
    auto gq = conv1d(x, p.global_q_w, p.global_q_b, 1, 0);
    auto gk = conv1d(x, p.global_k_w, p.global_k_b, 1, 0);
    auto gv = conv1d(x, p.global_v_w, p.global_v_b, 1, 0);

    std::vector<double> positions(x.dim(1));
    std::iota(positions.begin(), positions.end(), 0.0);
    std::vector<BasicTensor<T>> global_heads;
    std::vector<BasicTensor<T>> local_heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        local_heads.push_back(local_attention(split_head(lq, h, cfg.head_dim),
                                              split_head(lk, h, cfg.head_dim),
                                              split_head(lv, h, cfg.head_dim), cfg.window));
        global_heads.push_back(global_attention(
            split_head(gq, h, cfg.head_dim), split_head(gk, h, cfg.head_dim),
            split_head(gv, h, cfg.head_dim), std::span<const double>(positions)));
    }
    return {merge_heads(global_heads), merge_heads(local_heads)};
}

template <typename T>
BasicTensor<T> attention_output(const BasicTensor<T>& context, const AttentionParams<T>& p) {
    return conv1d(context, p.out_w, p.out_b, 1, 0);
}

template <typename T>
BasicTensor<T> soft_align_mix(const BasicTensor<T>& x, double global_weight, double local_weight,
                              const AttentionConfig& cfg, const AttentionParams<T>& p) {
    auto branches = soft_align_branches(x, cfg, p);
    auto context = add(scale(branches.global, static_cast<T>(global_weight)),
                       scale(branches.local, static_cast<T>(local_weight)));
    return add(x, attention_output(context, p));
}

template <typename T>
BasicTensor<T> soft_align_attention(const BasicTensor<T>& x, int t, const AttentionConfig& cfg,
                                    const AttentionParams<T>& p, const Schedule& s) {
    auto w = mix_weight(t, s);
    return soft_align_mix(x, w.global, w.local, cfg, p);
}

#define VOCALDIFF_INSTANTIATE_ATTENTION(T)                                                         \
    template AttentionParams<T> attention_params_view(const BasicParams<T>&, const std::string&);  \
    template BasicTensor<T> attention_weights(const BasicTensor<T>&, const BasicTensor<T>&);       \
    template BasicTensor<T> scaled_dot_attention(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                                 const BasicTensor<T>&);                           \
    template BasicTensor<T> global_attention(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                             const BasicTensor<T>&, std::span<const double>);      \
    template BasicTensor<T> global_attention(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                             const BasicTensor<T>&);                               \
    template BasicTensor<T> split_head(const BasicTensor<T>&, std::size_t, std::size_t);           \
    template BasicTensor<T> merge_heads(const std::vector<BasicTensor<T>>&);                       \
    template SoftAlignBranches<T> soft_align_branches(const BasicTensor<T>&,                       \
                                                      const AttentionConfig&,                      \
                                                      const AttentionParams<T>&);                  \
    template BasicTensor<T> attention_output(const BasicTensor<T>&, const AttentionParams<T>&);    \
    template BasicTensor<T> soft_align_mix(const BasicTensor<T>&, double, double,                  \
                                           const AttentionConfig&, const AttentionParams<T>&);     \
    template BasicTensor<T> soft_align_attention(const BasicTensor<T>&, int,                       \
                                                 const AttentionConfig&,                           \
                                                 const AttentionParams<T>&, const Schedule&);

VOCALDIFF_INSTANTIATE_ATTENTION(float)
VOCALDIFF_INSTANTIATE_ATTENTION(double)

#undef VOCALDIFF_INSTANTIATE_ATTENTION

} // namespace vocaldiff
