#pragma once

#include <span>

#include "vocaldiff/tensor.hpp"

// Differentiable primitives. Every function records a backward rule on the
// calling thread's active tape when at least one input is tracked.
namespace vocaldiff {

inline constexpr double kGroupNormEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;

// [m,k] x [k,n] -> [m,n]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// 2-D transpose.
template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Elementwise product.
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

// x[m,n] + b[n] broadcast over rows.
template <typename T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

// Rows [start, start+count) of the leading axis.
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t start, std::size_t count);

// Concatenation along the leading axis; trailing dimensions must agree.
template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts);

// Cross-correlation with zero padding. x[C_in,L], w[C_out,C_in,K], b[C_out].
template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      std::size_t stride, std::size_t padding);

// Adjoint of conv1d in the input. x[C_in,L], w[C_in,C_out,K], b[C_out];
// output length (L-1)*stride - 2*padding + K.
template <typename T>
BasicTensor<T> conv_transpose1d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b, std::size_t stride, std::size_t padding);

// Softmax over the last axis, max-subtracted.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, std::size_t groups, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps = kGroupNormEps);

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x);

// (1 + scale[c]) * x[c,l] + shift[c]
template <typename T>
BasicTensor<T> modulate(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                        const BasicTensor<T>& shift);

// Rotary embedding over x[L,d]: pair (2k, 2k+1) of row i turns by positions[i] * base^(-2k/d).
template <typename T>
BasicTensor<T> rope_rotate(const BasicTensor<T>& x, std::span<const double> positions,
                           double base = kRopeBase);

// Windowed scaled dot-product attention over q,k,v[L,d]. Position i attends to
// j with i - ceil(w/2) < j <= i + floor(w/2), clipped to [0, L).
template <typename T>
BasicTensor<T> local_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                               const BasicTensor<T>& v, std::size_t window);

// Mean over the leading axis: [L,D] -> [D].
template <typename T>
BasicTensor<T> mean_rows(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

// mean((a - b)^2) as a [1] tensor.
template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Window bounds [lo, hi) used by local_attention for position i.
struct WindowBounds {
    std::size_t lo;
    std::size_t hi;
};
WindowBounds local_window(std::size_t i, std::size_t length, std::size_t window);

} // namespace vocaldiff
