#pragma once

#include <string>
#include <vector>

#include "vocaldiff/ops.hpp"
#include "vocaldiff/optim.hpp"
#include "vocaldiff/rng.hpp"
#include "vocaldiff/schedule.hpp"

namespace vocaldiff {

struct AttentionConfig {
    std::size_t heads = 8;
    std::size_t head_dim = 64;
    std::size_t window = 16;

    std::size_t model_dim() const { return heads * head_dim; }
    void validate() const;
};

// Projection weights of one soft-alignment block. Local projections are
// kernel-3 convolutions, global ones pointwise (kernel-1) convolutions.
template <typename T>
struct AttentionParams {
    BasicTensor<T> local_q_w, local_q_b;
    BasicTensor<T> local_k_w, local_k_b;
    BasicTensor<T> local_v_w, local_v_b;
    BasicTensor<T> global_q_w, global_q_b;
    BasicTensor<T> global_k_w, global_k_b;
    BasicTensor<T> global_v_w, global_v_b;
    BasicTensor<T> out_w, out_b;
};

inline constexpr std::size_t kLocalProjectionKernel = 3;

// Registers the block's parameters under `prefix` (e.g. "mid.attn").
void add_attention_params(ModelParams& params, const std::string& prefix,
                          const AttentionConfig& cfg, Rng& rng);

template <typename T>
AttentionParams<T> attention_params_view(const BasicParams<T>& params, const std::string& prefix);

// softmax(q k^T / sqrt(d)) over q,k[L,d].
template <typename T>
BasicTensor<T> attention_weights(const BasicTensor<T>& q, const BasicTensor<T>& k);

// q[Lq,d], k[Lk,d], v[Lk,dv] -> [Lq,dv].
template <typename T>
BasicTensor<T> scaled_dot_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                    const BasicTensor<T>& v);

// RoPE on q and k (not v), then full-length scaled dot-product attention.
template <typename T>
BasicTensor<T> global_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, std::span<const double> positions);

// Positions 0..L-1.
template <typename T>
BasicTensor<T> global_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v);

// Rows [h*d, (h+1)*d) of x[C,L], returned as [L,d].
template <typename T>
BasicTensor<T> split_head(const BasicTensor<T>& x, std::size_t head, std::size_t head_dim);

// Inverse of split_head over all heads: [L,d] x H -> [H*d, L].
template <typename T>
BasicTensor<T> merge_heads(const std::vector<BasicTensor<T>>& heads);

// Both branch contexts before mixing, heads already merged back to [C,L].
template <typename T>
struct SoftAlignBranches {
    BasicTensor<T> global;
    BasicTensor<T> local;
};

template <typename T>
SoftAlignBranches<T> soft_align_branches(const BasicTensor<T>& x, const AttentionConfig& cfg,
                                         const AttentionParams<T>& p);

// out_w * context + out_b (pointwise).
template <typename T>
BasicTensor<T> attention_output(const BasicTensor<T>& context, const AttentionParams<T>& p);

// x + Out(g * Global + l * Local) with (g, l) = mix_weight(t).
template <typename T>
BasicTensor<T> soft_align_attention(const BasicTensor<T>& x, int t, const AttentionConfig& cfg,
                                    const AttentionParams<T>& p, const Schedule& s);

// Same block with explicit mix weights.
template <typename T>
BasicTensor<T> soft_align_mix(const BasicTensor<T>& x, double global_weight, double local_weight,
                              const AttentionConfig& cfg, const AttentionParams<T>& p);

} // namespace vocaldiff
