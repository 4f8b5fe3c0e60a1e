#include "vocaldiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vocaldiff {

namespace {

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

template <typename T>
void require_rank(const BasicTensor<T>& a, std::size_t rank, const char* op, const char* what) {
    if (a.rank() != rank) {
        throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                             std::to_string(rank) + ", got " + shape_str(a.shape()));
    }
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

} // namespace

WindowBounds local_window(std::size_t i, std::size_t length, std::size_t window) {
    auto before = static_cast<long long>((window + 1) / 2); // ceil(w/2)
    auto after = static_cast<long long>(window / 2);        // floor(w/2)
    auto ii = static_cast<long long>(i);
    auto lo = std::max<long long>(0, ii - before + 1);
    auto hi = std::min<long long>(static_cast<long long>(length), ii + after + 1);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul", "lhs");
    require_rank(b, 2, "matmul", "rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<T> out(m * n, T(0));
    const T* A = a.data().data();
    const T* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            const T* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] += av * brow[j];
            }
        }
    }
    return make_result<T>({m, n}, std::move(out), {&a, &b},
                          [a, b, m, k, n](std::span<const T> g, GradSink<T>& sink) {
                              const T* A = a.data().data();
                              const T* B = b.data().data();
                              if (T* ga = sink.grad(0)) {
                                  for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t p = 0; p < k; ++p) {
                                          T acc = 0;
                                          const T* grow = g.data() + i * n;
                                          const T* brow = B + p * n;
                                          for (std::size_t j = 0; j < n; ++j) {
                                              acc += grow[j] * brow[j];
                                          }
                                          ga[i * k + p] += acc;
                                      }
                                  }
                              }
                              if (T* gb = sink.grad(1)) {
                                  for (std::size_t i = 0; i < m; ++i) {
                                      const T* grow = g.data() + i * n;
                                      for (std::size_t p = 0; p < k; ++p) {
                                          const T av = A[i * k + p];
                                          T* gbrow = gb + p * n;
                                          for (std::size_t j = 0; j < n; ++j) {
                                              gbrow[j] += av * grow[j];
                                          }
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
    require_rank(a, 2, "transpose", "input");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<T> out(m * n);
    const T* A = a.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = A[i * n + j];
        }
    }
    return make_result<T>({n, m}, std::move(out), {&a},
                          [m, n](std::span<const T> g, GradSink<T>& sink) {
                              if (T* ga = sink.grad(0)) {
                                  for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t j = 0; j < n; ++j) {
                                          ga[i * n + j] += g[j * m + i];
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return make_result<T>(a.shape(), std::move(out), {&a, &b},
                          [](std::span<const T> g, GradSink<T>& sink) {
                              for (std::size_t in = 0; in < 2; ++in) {
                                  if (T* gi = sink.grad(in)) {
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                          gi[i] += g[i];
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return make_result<T>(a.shape(), std::move(out), {&a, &b},
                          [](std::span<const T> g, GradSink<T>& sink) {
                              if (T* ga = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      ga[i] += g[i];
                                  }
                              }
                              if (T* gb = sink.grad(1)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      gb[i] -= g[i];
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * b[i];
    }
    return make_result<T>(a.shape(), std::move(out), {&a, &b},
                          [a, b](std::span<const T> g, GradSink<T>& sink) {
                              if (T* ga = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      ga[i] += g[i] * b[i];
                                  }
                              }
                              if (T* gb = sink.grad(1)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      gb[i] += g[i] * a[i];
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * factor;
    }
    return make_result<T>(a.shape(), std::move(out), {&a},
                          [factor](std::span<const T> g, GradSink<T>& sink) {
                              if (T* ga = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      ga[i] += g[i] * factor;
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
    require_rank(x, 2, "add_row_bias", "input");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (bias.size() != n) {
        throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " vs input " +
                             shape_str(x.shape()));
    }
    std::vector<T> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = x[i * n + j] + bias[j];
        }
    }
    return make_result<T>(x.shape(), std::move(out), {&x, &bias},
                          [m, n](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      gx[i] += g[i];
                                  }
                              }
                              if (T* gb = sink.grad(1)) {
                                  for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t j = 0; j < n; ++j) {
                                          gb[j] += g[i * n + j];
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(shape));
    }
    return make_result<T>(std::move(shape), x.values(), {&x},
                          [](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      gx[i] += g[i];
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t start, std::size_t count) {
    if (count == 0 || start + count > x.dim(0)) {
        throw DimensionError("slice: rows [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") out of range for " +
                             shape_str(x.shape()));
    }
    const std::size_t inner = x.size() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = count;
    std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(start * inner),
                       x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * inner));
    const std::size_t offset = start * inner;
    return make_result<T>(std::move(shape), std::move(out), {&x},
                          [offset](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      gx[offset + i] += g[i];
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat: no inputs");
    }
    Shape shape = parts.front().shape();
    Shape tail(shape.begin() + 1, shape.end());
    std::size_t rows = 0;
    std::vector<const BasicTensor<T>*> inputs;
    std::vector<std::size_t> offsets;
    std::vector<T> out;
    for (const auto& p : parts) {
        if (Shape(p.shape().begin() + 1, p.shape().end()) != tail) {
            throw DimensionError("concat: " + shape_str(p.shape()) + " does not match " +
                                 shape_str(shape));
        }
        offsets.push_back(out.size());
        out.insert(out.end(), p.data().begin(), p.data().end());
        rows += p.dim(0);
        inputs.push_back(&p);
    }
    shape[0] = rows;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
        sizes.push_back(p.size());
    }
    return make_result<T>(std::move(shape), std::move(out), inputs,
                          [offsets, sizes](std::span<const T> g, GradSink<T>& sink) {
                              for (std::size_t in = 0; in < offsets.size(); ++in) {
                                  if (T* gi = sink.grad(in)) {
                                      for (std::size_t i = 0; i < sizes[in]; ++i) {
                                          gi[i] += g[offsets[in] + i];
                                      }
                                  }
                              }
                          });
}

namespace {

// Output positions l with 0 <= l*stride + k - pad < length.
struct Span {
    std::size_t begin;
    std::size_t end;
};

Span valid_outputs(std::size_t k, std::size_t pad, std::size_t stride, std::size_t length,
                   std::size_t out_len) {
    long long lo = 0;
    auto diff = static_cast<long long>(pad) - static_cast<long long>(k);
    if (diff > 0) {
        lo = (diff + static_cast<long long>(stride) - 1) / static_cast<long long>(stride);
    }
    long long top = static_cast<long long>(length) - 1 + diff;
    if (top < 0) {
        return {0, 0};
    }
    long long hi = top / static_cast<long long>(stride) + 1;
    hi = std::min<long long>(hi, static_cast<long long>(out_len));
    if (hi <= lo) {
        return {0, 0};
    }
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

} // namespace

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      std::size_t stride, std::size_t padding) {
    require_rank(x, 2, "conv1d", "input");
    require_rank(w, 3, "conv1d", "weight");
    const std::size_t cin = x.dim(0), len = x.dim(1);
    const std::size_t cout = w.dim(0), ksize = w.dim(2);
    if (w.dim(1) != cin) {
        throw DimensionError("conv1d: weight " + shape_str(w.shape()) + " does not match input " +
                             shape_str(x.shape()));
    }
    if (b.size() != cout) {
        throw DimensionError("conv1d: bias " + shape_str(b.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    }
    if (stride == 0) {
        throw ConfigError("conv1d: stride must be positive");
    }
    if (len + 2 * padding < ksize) {
        throw DimensionError("conv1d: kernel " + std::to_string(ksize) +
                             " larger than padded input " + shape_str(x.shape()) + " with padding " +
                             std::to_string(padding));
    }
    const std::size_t out_len = (len + 2 * padding - ksize) / stride + 1;
    std::vector<T> out(cout * out_len);
    const T* X = x.data().data();
    const T* W = w.data().data();
    for (std::size_t o = 0; o < cout; ++o) {
        T* orow = out.data() + o * out_len;
        std::fill(orow, orow + out_len, b[o]);
        for (std::size_t c = 0; c < cin; ++c) {
            const T* xrow = X + c * len;
            for (std::size_t k = 0; k < ksize; ++k) {
                const T wv = W[(o * cin + c) * ksize + k];
                auto span = valid_outputs(k, padding, stride, len, out_len);
                for (std::size_t l = span.begin; l < span.end; ++l) {
                    orow[l] += wv * xrow[l * stride + k - padding];
                }
            }
        }
    }
    return make_result<T>(
        {cout, out_len}, std::move(out), {&x, &w, &b},
        [x, w, cin, len, cout, ksize, stride, padding, out_len](std::span<const T> g,
                                                                 GradSink<T>& sink) {
            const T* X = x.data().data();
            const T* W = w.data().data();
            T* gx = sink.grad(0);
            T* gw = sink.grad(1);
            T* gb = sink.grad(2);
            for (std::size_t o = 0; o < cout; ++o) {
                const T* grow = g.data() + o * out_len;
                if (gb) {
                    T acc = 0;
                    for (std::size_t l = 0; l < out_len; ++l) {
                        acc += grow[l];
                    }
                    gb[o] += acc;
                }
                for (std::size_t c = 0; c < cin; ++c) {
                    const T* xrow = X + c * len;
                    for (std::size_t k = 0; k < ksize; ++k) {
                        const std::size_t widx = (o * cin + c) * ksize + k;
                        auto span = valid_outputs(k, padding, stride, len, out_len);
                        if (gw) {
                            T acc = 0;
                            for (std::size_t l = span.begin; l < span.end; ++l) {
                                acc += grow[l] * xrow[l * stride + k - padding];
                            }
                            gw[widx] += acc;
                        }
                        if (gx) {
                            const T wv = W[widx];
                            T* gxrow = gx + c * len;
                            for (std::size_t l = span.begin; l < span.end; ++l) {
                                gxrow[l * stride + k - padding] += wv * grow[l];
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
BasicTensor<T> conv_transpose1d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b, std::size_t stride, std::size_t padding) {
    require_rank(x, 2, "conv_transpose1d", "input");
    require_rank(w, 3, "conv_transpose1d", "weight");
    const std::size_t cin = x.dim(0), len = x.dim(1);
    const std::size_t cout = w.dim(1), ksize = w.dim(2);
    if (w.dim(0) != cin) {
        throw DimensionError("conv_transpose1d: weight " + shape_str(w.shape()) +
                             " does not match input " + shape_str(x.shape()));
    }
    if (b.size() != cout) {
        throw DimensionError("conv_transpose1d: bias " + shape_str(b.shape()) +
                             " does not match weight " + shape_str(w.shape()));
    }
    if (stride == 0) {
        throw ConfigError("conv_transpose1d: stride must be positive");
    }
    const long long full = static_cast<long long>((len - 1) * stride + ksize);
    const long long out_signed = full - 2 * static_cast<long long>(padding);
    if (out_signed < 1) {
        throw DimensionError("conv_transpose1d: padding " + std::to_string(padding) +
                             " leaves no output for input " + shape_str(x.shape()));
    }
    const auto out_len = static_cast<std::size_t>(out_signed);
    std::vector<T> out(cout * out_len);
    for (std::size_t o = 0; o < cout; ++o) {
        std::fill(out.begin() + static_cast<std::ptrdiff_t>(o * out_len),
                  out.begin() + static_cast<std::ptrdiff_t>((o + 1) * out_len), b[o]);
    }
    const T* X = x.data().data();
    const T* W = w.data().data();
    // Input l maps to output l*stride + k - padding; the valid l range is the
    // conv1d output range of the reversed geometry.
    auto input_span = [&](std::size_t k) {
        long long lo = 0;
        auto diff = static_cast<long long>(padding) - static_cast<long long>(k);
        if (diff > 0) {
            lo = (diff + static_cast<long long>(stride) - 1) / static_cast<long long>(stride);
        }
        long long top = static_cast<long long>(out_len) - 1 + diff;
        long long hi = top < 0 ? 0 : top / static_cast<long long>(stride) + 1;
        hi = std::min<long long>(hi, static_cast<long long>(len));
        if (hi < lo) {
            hi = lo;
        }
        return Span{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    };
    for (std::size_t c = 0; c < cin; ++c) {
        const T* xrow = X + c * len;
        for (std::size_t o = 0; o < cout; ++o) {
            T* orow = out.data() + o * out_len;
            for (std::size_t k = 0; k < ksize; ++k) {
                const T wv = W[(c * cout + o) * ksize + k];
                auto span = input_span(k);
                for (std::size_t l = span.begin; l < span.end; ++l) {
                    orow[l * stride + k - padding] += wv * xrow[l];
                }
            }
        }
    }
    std::vector<Span> spans;
    for (std::size_t k = 0; k < ksize; ++k) {
        spans.push_back(input_span(k));
    }
    return make_result<T>(
        {cout, out_len}, std::move(out), {&x, &w, &b},
        [x, w, cin, len, cout, ksize, stride, padding, out_len, spans](std::span<const T> g,
                                                                        GradSink<T>& sink) {
            const T* X = x.data().data();
            const T* W = w.data().data();
            T* gx = sink.grad(0);
            T* gw = sink.grad(1);
            T* gb = sink.grad(2);
            if (gb) {
                for (std::size_t o = 0; o < cout; ++o) {
                    T acc = 0;
                    for (std::size_t l = 0; l < out_len; ++l) {
                        acc += g[o * out_len + l];
                    }
                    gb[o] += acc;
                }
            }
            for (std::size_t c = 0; c < cin; ++c) {
                const T* xrow = X + c * len;
                for (std::size_t o = 0; o < cout; ++o) {
                    const T* grow = g.data() + o * out_len;
                    for (std::size_t k = 0; k < ksize; ++k) {
                        const std::size_t widx = (c * cout + o) * ksize + k;
                        const auto& span = spans[k];
                        if (gw) {
                            T acc = 0;
                            for (std::size_t l = span.begin; l < span.end; ++l) {
                                acc += xrow[l] * grow[l * stride + k - padding];
                            }
                            gw[widx] += acc;
                        }
                        if (gx) {
                            const T wv = W[widx];
                            T* gxrow = gx + c * len;
                            for (std::size_t l = span.begin; l < span.end; ++l) {
                                gxrow[l] += wv * grow[l * stride + k - padding];
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * n;
        T* o = out.data() + r * n;
        T mx = *std::max_element(in, in + n);
        T total = 0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        const T inv = T(1) / total;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] *= inv;
        }
    }
    BasicTensor<T> y(x.shape(), out);
    return make_result<T>(x.shape(), std::move(out), {&x},
                          [y, n, rows](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  const T* Y = y.data().data();
                                  for (std::size_t r = 0; r < rows; ++r) {
                                      T dot = 0;
                                      for (std::size_t j = 0; j < n; ++j) {
                                          dot += g[r * n + j] * Y[r * n + j];
                                      }
                                      for (std::size_t j = 0; j < n; ++j) {
                                          gx[r * n + j] += Y[r * n + j] * (g[r * n + j] - dot);
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, std::size_t groups, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps) {
    require_rank(x, 2, "group_norm", "input");
    const std::size_t channels = x.dim(0), len = x.dim(1);
    if (groups == 0 || channels % groups != 0) {
        throw ConfigError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                          std::to_string(channels) + " channels");
    }
    if (gamma.size() != channels || beta.size() != channels) {
        throw DimensionError("group_norm: affine parameters must have " +
                             std::to_string(channels) + " entries");
    }
    const std::size_t per_group = channels / groups;
    const std::size_t count = per_group * len;
    std::vector<T> xhat(x.size());
    std::vector<T> inv_std(groups);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        const T* in = x.data().data() + gi * count;
        double m = 0;
        for (std::size_t i = 0; i < count; ++i) {
            m += in[i];
        }
        m /= static_cast<double>(count);
        double var = 0;
        for (std::size_t i = 0; i < count; ++i) {
            double d = in[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(count);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[gi] = static_cast<T>(inv);
        for (std::size_t i = 0; i < count; ++i) {
            xhat[gi * count + i] = static_cast<T>((in[i] - m) * inv);
        }
    }
    std::vector<T> out(x.size());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t l = 0; l < len; ++l) {
            out[c * len + l] = gamma[c] * xhat[c * len + l] + beta[c];
        }
    }
    return make_result<T>(
        x.shape(), std::move(out), {&x, &gamma, &beta},
        [xhat = std::move(xhat), inv_std = std::move(inv_std), gamma, groups, channels, len,
         per_group, count](std::span<const T> g, GradSink<T>& sink) {
            if (T* gg = sink.grad(1)) {
                for (std::size_t c = 0; c < channels; ++c) {
                    T acc = 0;
                    for (std::size_t l = 0; l < len; ++l) {
                        acc += g[c * len + l] * xhat[c * len + l];
                    }
                    gg[c] += acc;
                }
            }
            if (T* gb = sink.grad(2)) {
                for (std::size_t c = 0; c < channels; ++c) {
                    T acc = 0;
                    for (std::size_t l = 0; l < len; ++l) {
                        acc += g[c * len + l];
                    }
                    gb[c] += acc;
                }
            }
            if (T* gx = sink.grad(0)) {
                std::vector<T> dxhat(count);
                for (std::size_t gi = 0; gi < groups; ++gi) {
                    T mean_d = 0;
                    T mean_dx = 0;
                    for (std::size_t i = 0; i < count; ++i) {
                        const std::size_t idx = gi * count + i;
                        const std::size_t c = gi * per_group + i / len;
                        dxhat[i] = g[idx] * gamma[c];
                        mean_d += dxhat[i];
                        mean_dx += dxhat[i] * xhat[idx];
                    }
                    mean_d /= static_cast<T>(count);
                    mean_dx /= static_cast<T>(count);
                    for (std::size_t i = 0; i < count; ++i) {
                        const std::size_t idx = gi * count + i;
                        gx[idx] += inv_std[gi] * (dxhat[i] - mean_d - xhat[idx] * mean_dx);
                    }
                }
            }
        });
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * sigmoid(x[i]);
    }
    return make_result<T>(x.shape(), std::move(out), {&x},
                          [x](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                      const T s = sigmoid(x[i]);
                                      gx[i] += g[i] * s * (T(1) + x[i] * (T(1) - s));
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> modulate(const BasicTensor<T>& x, const BasicTensor<T>& scale_v,
                        const BasicTensor<T>& shift) {
    require_rank(x, 2, "modulate", "input");
    const std::size_t channels = x.dim(0), len = x.dim(1);
    if (scale_v.size() != channels || shift.size() != channels) {
        throw DimensionError("modulate: scale " + shape_str(scale_v.shape()) + " / shift " +
                             shape_str(shift.shape()) + " do not match " + shape_str(x.shape()));
    }
    std::vector<T> out(x.size());
    for (std::size_t c = 0; c < channels; ++c) {
        const T s = T(1) + scale_v[c];
        for (std::size_t l = 0; l < len; ++l) {
            out[c * len + l] = s * x[c * len + l] + shift[c];
        }
    }
    return make_result<T>(x.shape(), std::move(out), {&x, &scale_v, &shift},
                          [x, scale_v, channels, len](std::span<const T> g, GradSink<T>& sink) {
                              T* gx = sink.grad(0);
                              T* gs = sink.grad(1);
                              T* gt = sink.grad(2);
                              for (std::size_t c = 0; c < channels; ++c) {
                                  const T s = T(1) + scale_v[c];
                                  T acc_s = 0;
                                  T acc_t = 0;
                                  for (std::size_t l = 0; l < len; ++l) {
                                      const T gv = g[c * len + l];
                                      if (gx) {
                                          gx[c * len + l] += gv * s;
                                      }
                                      acc_s += gv * x[c * len + l];
                                      acc_t += gv;
                                  }
                                  if (gs) {
                                      gs[c] += acc_s;
                                  }
                                  if (gt) {
                                      gt[c] += acc_t;
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> rope_rotate(const BasicTensor<T>& x, std::span<const double> positions, double base) {
    require_rank(x, 2, "rope_rotate", "input");
    const std::size_t len = x.dim(0), d = x.dim(1);
    if (d % 2 != 0) {
        throw DimensionError("rope_rotate: feature dimension " + std::to_string(d) + " must be even");
    }
    if (positions.size() != len) {
        throw DimensionError("rope_rotate: " + std::to_string(positions.size()) +
                             " positions for " + std::to_string(len) + " rows");
    }
    const std::size_t half = d / 2;
    std::vector<T> cosv(len * half);
    std::vector<T> sinv(len * half);
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t k = 0; k < half; ++k) {
            const double theta = std::pow(base, -2.0 * static_cast<double>(k) / static_cast<double>(d));
            const double angle = positions[i] * theta;
            cosv[i * half + k] = static_cast<T>(std::cos(angle));
            sinv[i * half + k] = static_cast<T>(std::sin(angle));
        }
    }
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t k = 0; k < half; ++k) {
            const T a = x[i * d + 2 * k];
            const T b = x[i * d + 2 * k + 1];
            const T c = cosv[i * half + k];
            const T s = sinv[i * half + k];
            out[i * d + 2 * k] = a * c - b * s;
            out[i * d + 2 * k + 1] = a * s + b * c;
        }
    }
    return make_result<T>(x.shape(), std::move(out), {&x},
                          [cosv = std::move(cosv), sinv = std::move(sinv), len, d,
                           half](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  for (std::size_t i = 0; i < len; ++i) {
                                      for (std::size_t k = 0; k < half; ++k) {
                                          const T ga = g[i * d + 2 * k];
                                          const T gb = g[i * d + 2 * k + 1];
                                          const T c = cosv[i * half + k];
                                          const T s = sinv[i * half + k];
                                          gx[i * d + 2 * k] += ga * c + gb * s;
                                          gx[i * d + 2 * k + 1] += -ga * s + gb * c;
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> local_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                               const BasicTensor<T>& v, std::size_t window) {
    require_rank(q, 2, "local_attention", "q");
    require_same_shape(q, k, "local_attention");
    require_rank(v, 2, "local_attention", "v");
    if (v.dim(0) != q.dim(0)) {
        throw DimensionError("local_attention: v " + shape_str(v.shape()) + " vs q " +
                             shape_str(q.shape()));
    }
    if (window == 0) {
        throw ConfigError("local_attention: window must be >= 1");
    }
    const std::size_t len = q.dim(0), d = q.dim(1), dv = v.dim(1);
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    const T* Q = q.data().data();
    const T* K = k.data().data();
    const T* V = v.data().data();
    // probs[i] holds the softmax over positions [lo(i), hi(i)).
    std::vector<std::vector<T>> probs(len);
    std::vector<T> out(len * dv, T(0));
    for (std::size_t i = 0; i < len; ++i) {
        auto [lo, hi] = local_window(i, len, window);
        auto& p = probs[i];
        p.resize(hi - lo);
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = lo; j < hi; ++j) {
            T s = 0;
            for (std::size_t c = 0; c < d; ++c) {
                s += Q[i * d + c] * K[j * d + c];
            }
            s *= inv_sqrt;
            p[j - lo] = s;
            mx = std::max(mx, s);
        }
        T total = 0;
        for (auto& s : p) {
            s = std::exp(s - mx);
            total += s;
        }
        for (auto& s : p) {
            s /= total;
        }
        T* orow = out.data() + i * dv;
        for (std::size_t j = lo; j < hi; ++j) {
            const T w = p[j - lo];
            for (std::size_t c = 0; c < dv; ++c) {
                orow[c] += w * V[j * dv + c];
            }
        }
    }
    return make_result<T>(
        {len, dv}, std::move(out), {&q, &k, &v},
        [q, k, v, probs = std::move(probs), len, d, dv, window, inv_sqrt](std::span<const T> g,
                                                                          GradSink<T>& sink) {
            const T* Q = q.data().data();
            const T* K = k.data().data();
            const T* V = v.data().data();
            T* gq = sink.grad(0);
            T* gk = sink.grad(1);
            T* gv = sink.grad(2);
            std::vector<T> ds;
            for (std::size_t i = 0; i < len; ++i) {
                auto [lo, hi] = local_window(i, len, window);
                const auto& p = probs[i];
                const T* grow = g.data() + i * dv;
                ds.assign(hi - lo, T(0));
                T dot = 0;
                for (std::size_t j = lo; j < hi; ++j) {
                    T dp = 0;
                    for (std::size_t c = 0; c < dv; ++c) {
                        dp += grow[c] * V[j * dv + c];
                    }
                    ds[j - lo] = dp;
                    dot += p[j - lo] * dp;
                    if (gv) {
                        for (std::size_t c = 0; c < dv; ++c) {
                            gv[j * dv + c] += p[j - lo] * grow[c];
                        }
                    }
                }
                for (std::size_t j = lo; j < hi; ++j) {
                    const T s = p[j - lo] * (ds[j - lo] - dot) * inv_sqrt;
                    if (gq) {
                        for (std::size_t c = 0; c < d; ++c) {
                            gq[i * d + c] += s * K[j * d + c];
                        }
                    }
                    if (gk) {
                        for (std::size_t c = 0; c < d; ++c) {
                            gk[j * d + c] += s * Q[i * d + c];
                        }
                    }
                }
            }
        });
}

template <typename T>
BasicTensor<T> mean_rows(const BasicTensor<T>& x) {
    require_rank(x, 2, "mean_rows", "input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    std::vector<T> out(cols, T(0));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out[j] += x[i * cols + j];
        }
    }
    const T inv = T(1) / static_cast<T>(rows);
    for (auto& v : out) {
        v *= inv;
    }
    return make_result<T>({cols}, std::move(out), {&x},
                          [rows, cols, inv](std::span<const T> g, GradSink<T>& sink) {
                              if (T* gx = sink.grad(0)) {
                                  for (std::size_t i = 0; i < rows; ++i) {
                                      for (std::size_t j = 0; j < cols; ++j) {
                                          gx[i * cols + j] += g[j] * inv;
                                      }
                                  }
                              }
                          });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    T total = 0;
    for (auto v : x.data()) {
        total += v;
    }
    const std::size_t n = x.size();
    return make_result<T>({1}, {total}, {&x}, [n](std::span<const T> g, GradSink<T>& sink) {
        if (T* gx = sink.grad(0)) {
            for (std::size_t i = 0; i < n; ++i) {
                gx[i] += g[0];
            }
        }
    });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mse");
    const std::size_t n = a.size();
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = a[i] - b[i];
        total += d * d;
    }
    const T inv = T(1) / static_cast<T>(n);
    return make_result<T>({1}, {total * inv}, {&a, &b},
                          [a, b, n, inv](std::span<const T> g, GradSink<T>& sink) {
                              T* ga = sink.grad(0);
                              T* gb = sink.grad(1);
                              for (std::size_t i = 0; i < n; ++i) {
                                  const T d = T(2) * (a[i] - b[i]) * inv * g[0];
                                  if (ga) {
                                      ga[i] += d;
                                  }
                                  if (gb) {
                                      gb[i] -= d;
                                  }
                              }
                          });
}

#define VOCALDIFF_INSTANTIATE_OPS(T)                                                               \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                  \
    template BasicTensor<T> transpose(const BasicTensor<T>&);                                      \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                     \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                       \
    template BasicTensor<T> add_row_bias(const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                 \
    template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t);                \
    template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&);                            \
    template BasicTensor<T> conv1d(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                   const BasicTensor<T>&, std::size_t, std::size_t);               \
    template BasicTensor<T> conv_transpose1d(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                             const BasicTensor<T>&, std::size_t, std::size_t);     \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                        \
    template BasicTensor<T> group_norm(const BasicTensor<T>&, std::size_t, const BasicTensor<T>&,  \
                                       const BasicTensor<T>&, double);                             \
    template BasicTensor<T> silu(const BasicTensor<T>&);                                           \
    template BasicTensor<T> modulate(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                     const BasicTensor<T>&);                                       \
    template BasicTensor<T> rope_rotate(const BasicTensor<T>&, std::span<const double>, double);   \
    template BasicTensor<T> local_attention(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                            const BasicTensor<T>&, std::size_t);                   \
    template BasicTensor<T> mean_rows(const BasicTensor<T>&);                                      \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                            \
    template BasicTensor<T> mean(const BasicTensor<T>&);                                           \
    template BasicTensor<T> mse(const BasicTensor<T>&, const BasicTensor<T>&);

VOCALDIFF_INSTANTIATE_OPS(float)
VOCALDIFF_INSTANTIATE_OPS(double)

#undef VOCALDIFF_INSTANTIATE_OPS

} // namespace vocaldiff
