#include "vocaldiff/backbone.hpp"

#include <cmath>
#include <vector>

#include "vocaldiff/rng.hpp"

namespace vocaldiff {

std::string Rational::str() const {
    if (den == 1) {
        return std::to_string(num);
    }
    return std::to_string(num) + "/" + std::to_string(den);
}

Rational Rational::parse(const std::string& text) {
    auto fail = [&] { return ConfigError("cannot parse width multiplier '" + text + "'"); };
    try {
        auto slash = text.find('/');
        Rational r;
        if (slash != std::string::npos) {
            std::size_t used = 0;
            r.num = std::stol(text.substr(0, slash), &used);
            if (used != slash) {
                throw fail();
            }
            auto tail = text.substr(slash + 1);
            r.den = std::stol(tail, &used);
            if (used != tail.size()) {
                throw fail();
            }
        } else {
            std::size_t used = 0;
            double v = std::stod(text, &used);
            if (used != text.size()) {
                throw fail();
            }
            r.num = 0;
            r.den = 1;
            while (r.den <= (1L << 20)) {
                double scaled = v * static_cast<double>(r.den);
                if (scaled == std::floor(scaled)) {
                    r.num = static_cast<long>(scaled);
                    break;
                }
                r.den *= 2;
            }
            if (r.den > (1L << 20)) {
                throw fail();
            }
        }
        if (r.num <= 0 || r.den <= 0) {
            throw fail();
        }
        long a = r.num, b = r.den;
        while (b != 0) {
            long tmp = a % b;
            a = b;
            b = tmp;
        }
        r.num /= a;
        r.den /= a;
        return r;
    } catch (const std::logic_error&) {
        throw fail();
    }
}

std::array<std::size_t, 4> UNetConfig::ladder() const {
    std::array<std::size_t, 4> out{};
    const std::array<long, 4> base{64, 128, 256, 512};
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = static_cast<std::size_t>(base[i] * width_mult.num / width_mult.den);
    }
    return out;
}

std::size_t UNetConfig::time_embed_dim() const {
    return static_cast<std::size_t>(256 * width_mult.num / width_mult.den);
}

void UNetConfig::validate() const {
    if (width_mult.num <= 0 || width_mult.den <= 0) {
        throw ConfigError("width multiplier must be positive");
    }
    const std::array<long, 4> base{64, 128, 256, 512};
    for (auto b : base) {
        if ((b * width_mult.num) % width_mult.den != 0) {
            throw ConfigError("width multiplier " + width_mult.str() +
                              " does not give whole channel counts");
        }
    }
    if ((256 * width_mult.num) % width_mult.den != 0) {
        throw ConfigError("width multiplier " + width_mult.str() +
                          " does not give a whole time-embedding size");
    }
    if (groups == 0) {
        throw ConfigError("group count must be positive");
    }
    for (auto c : ladder()) {
        if (c == 0 || c % groups != 0) {
            throw ConfigError(std::to_string(groups) + " groups do not divide " +
                              std::to_string(c) + " channels");
        }
    }
    if (time_embed_dim() % 2 != 0) {
        throw ConfigError("time embedding size must be even");
    }
    if (heads == 0 || ladder()[3] % heads != 0) {
        throw ConfigError(std::to_string(heads) + " heads do not divide " +
                          std::to_string(ladder()[3]) + " bottleneck channels");
    }
    attention().validate();
    if (length < 8 || length % 8 != 0) {
        throw ConfigError("latent length must be a positive multiple of 8, got " +
                          std::to_string(length));
    }
}

namespace {

Tensor uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return rng.uniform_tensor(shape, -bound, bound);
}

struct ParamBuilder {
    ModelParams& params;
    Rng& rng;
    std::size_t cond_dim;

    void conv(const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
              bool bias = true) {
        params[name + ".w"] = uniform_init({cout, cin, k}, cin * k, rng);
        if (bias) {
            params[name + ".b"] = Tensor::zeros({cout});
        }
    }
    void conv_transpose(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride) {
        params[name + ".w"] = uniform_init({cin, cout, k}, cin * k / stride, rng);
        params[name + ".b"] = Tensor::zeros({cout});
    }
    void linear(const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
        params[name + ".w"] = uniform_init({in, out}, in, rng);
        if (bias) {
            params[name + ".b"] = Tensor::zeros({out});
        }
    }
    void norm(const std::string& name, std::size_t c) {
        params[name + ".gamma"] = Tensor::full({c}, 1.0f);
        params[name + ".beta"] = Tensor::zeros({c});
    }
    void film(const std::string& name, std::size_t c) {
        params[name + ".w"] = Tensor::zeros({cond_dim, 2 * c});
        params[name + ".b"] = Tensor::zeros({2 * c});
    }
    void res_block(const std::string& name, std::size_t cin, std::size_t cout) {
        norm(name + ".gn1", cin);
        conv(name + ".conv1", cout, cin, 3);
        norm(name + ".gn2", cout);
        film(name + ".film", cout);
        conv(name + ".conv2", cout, cout, 3);
        if (cin != cout) {
            conv(name + ".skip", cout, cin, 1);
        }
    }
};

constexpr std::size_t kSampleKernel = 4;
constexpr std::size_t kSampleStride = 2;
constexpr std::size_t kSamplePad = 1;

} // namespace

ModelParams init_params(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams params;
    Rng rng = Rng::stream(seed, "init");
    const auto ch = cfg.ladder();
    const std::size_t dim = cfg.time_embed_dim();
    ParamBuilder b{params, rng, dim};

    b.linear("time.mlp1", dim, dim);
    b.linear("time.mlp2", dim, dim);

    b.conv("vocal.conv1", dim, cfg.in_channels, kSampleKernel);
    b.conv("vocal.conv2", dim, dim, kSampleKernel);
    b.linear("vocal.proj", dim, dim);
    params["vocal.null_pooled"] = Tensor::zeros({dim});

    b.conv("stem", ch[0], cfg.in_channels, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto name = "down" + std::to_string(i);
        b.res_block(name + ".res", ch[i], ch[i]);
        b.norm(name + ".gn", ch[i]);
        b.film(name + ".film", ch[i]);
        b.conv(name + ".conv", ch[i + 1], ch[i], kSampleKernel);
    }

    b.res_block("mid.res1", ch[3], ch[3]);
    add_attention_params(params, "mid.attn", cfg.attention(), rng);
    b.conv("mid.xattn.q", ch[3], ch[3], 1, false);
    b.linear("mid.xattn.k", dim, ch[3], false);
    b.linear("mid.xattn.v", dim, ch[3], false);
    b.conv("mid.xattn.o", ch[3], ch[3], 1, false);
    b.res_block("mid.res2", ch[3], ch[3]);

    for (std::size_t i = 0; i < 3; ++i) {
        const auto name = "up" + std::to_string(i);
        b.norm(name + ".gn", ch[i + 1]);
        b.film(name + ".film", ch[i + 1]);
        b.conv_transpose(name + ".conv", ch[i + 1], ch[i], kSampleKernel, kSampleStride);
        b.res_block(name + ".res", 2 * ch[i], ch[i]);
    }

    b.norm("out.gn", ch[0]);
    params["out.conv.w"] = Tensor::zeros({cfg.in_channels, ch[0], 3});
    params["out.conv.b"] = Tensor::zeros({cfg.in_channels});
    return params;
}

std::map<std::string, std::size_t> param_breakdown(const ModelParams& params) {
    std::map<std::string, std::size_t> out;
    for (const auto& [name, t] : params) {
        auto dot = name.find('.');
        std::string key = name.substr(0, dot);
        if (key == "mid" && dot != std::string::npos) {
            auto second = name.find('.', dot + 1);
            key = name.substr(0, second);
        }
        out[key] += t.size();
    }
    return out;
}

template <typename T>
BasicTensor<T> sinusoidal_embedding(int t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw ConfigError("timestep embedding size must be even, got " + std::to_string(dim));
    }
    const std::size_t half = dim / 2;
    std::vector<T> out(dim);
    for (std::size_t k = 0; k < half; ++k) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        const double angle = static_cast<double>(t) * freq;
        out[k] = static_cast<T>(std::sin(angle));
        out[half + k] = static_cast<T>(std::cos(angle));
    }
    return BasicTensor<T>({dim}, std::move(out));
}

namespace {

template <typename T>
class Net {
public:
    Net(const BasicParams<T>& params, const UNetConfig& cfg) : params_(params), cfg_(cfg) {}

    const BasicTensor<T>& p(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) {
            throw ConfigError("missing model parameter '" + name + "'");
        }
        return it->second;
    }

    // x[1,in] -> [1,out]
    BasicTensor<T> linear(const BasicTensor<T>& x, const std::string& name) const {
        return add_row_bias(matmul(x, p(name + ".w")), p(name + ".b"));
    }

    BasicTensor<T> norm(const BasicTensor<T>& x, const std::string& name) const {
        return group_norm(x, cfg_.groups, p(name + ".gamma"), p(name + ".beta"));
    }

    BasicTensor<T> conv(const BasicTensor<T>& x, const std::string& name, std::size_t stride,
                        std::size_t pad) const {
        return conv1d(x, p(name + ".w"), p(name + ".b"), stride, pad);
    }

    BasicTensor<T> modulated(const BasicTensor<T>& x, const std::string& name,
                             const BasicTensor<T>& cond) const {
        return film(x, cond, p(name + ".w"), p(name + ".b"));
    }

    // GN -> SiLU -> Conv3, GN -> SiLU -> FiLM -> Conv3, plus (projected) skip.
    BasicTensor<T> res_block(const BasicTensor<T>& x, const std::string& name,
                             const BasicTensor<T>& cond) const {
        auto h = conv(silu(norm(x, name + ".gn1")), name + ".conv1", 1, 1);
        h = conv(modulated(silu(norm(h, name + ".gn2")), name + ".film", cond), name + ".conv2",
                 1, 1);
        auto it = params_.find(name + ".skip.w");
        auto skip = it == params_.end() ? x : conv(x, name + ".skip", 1, 0);
        return add(skip, h);
    }

    BasicTensor<T> down(const BasicTensor<T>& x, const std::string& name,
                        const BasicTensor<T>& cond) const {
        auto h = modulated(silu(norm(x, name + ".gn")), name + ".film", cond);
        return conv(h, name + ".conv", kSampleStride, kSamplePad);
    }

    BasicTensor<T> up(const BasicTensor<T>& x, const std::string& name,
                      const BasicTensor<T>& cond) const {
        auto h = modulated(silu(norm(x, name + ".gn")), name + ".film", cond);
        return conv_transpose1d(h, p(name + ".conv.w"), p(name + ".conv.b"), kSampleStride,
                                kSamplePad);
    }

    // Multi-head attention from bottleneck positions to vocal tokens, residual.
    BasicTensor<T> cross_attention(const BasicTensor<T>& h, const BasicTensor<T>& tokens) const {
        const auto cfg = cfg_.attention();
        const std::size_t c = h.dim(0);
        auto no_bias = BasicTensor<T>::zeros({c});
        auto q = conv1d(h, p("mid.xattn.q.w"), no_bias, 1, 0);
        auto k = transpose(matmul(tokens, p("mid.xattn.k.w")));
        auto v = transpose(matmul(tokens, p("mid.xattn.v.w")));
        std::vector<BasicTensor<T>> heads;
        for (std::size_t i = 0; i < cfg.heads; ++i) {
            heads.push_back(scaled_dot_attention(split_head(q, i, cfg.head_dim),
                                                 split_head(k, i, cfg.head_dim),
                                                 split_head(v, i, cfg.head_dim)));
        }
        return add(h, conv1d(merge_heads(heads), p("mid.xattn.o.w"), no_bias, 1, 0));
    }

private:
    const BasicParams<T>& params_;
    const UNetConfig& cfg_;
};

} // namespace

template <typename T>
BasicTensor<T> timestep_embedding(int t, const BasicParams<T>& params, const UNetConfig& cfg) {
    Net<T> net(params, cfg);
    const std::size_t dim = cfg.time_embed_dim();
    auto e = reshape(sinusoidal_embedding<T>(t, dim), {1, dim});
    auto h = net.linear(silu(net.linear(e, "time.mlp1")), "time.mlp2");
    return reshape(h, {dim});
}

template <typename T>
BasicTensor<T> film(const BasicTensor<T>& x, const BasicTensor<T>& cond_vec,
                    const BasicTensor<T>& gen_w, const BasicTensor<T>& gen_b) {
    if (x.rank() != 2) {
        throw ConfigError("film expects [C, L] input, got " + shape_str(x.shape()));
    }
    const std::size_t c = x.dim(0);
    const std::size_t d = cond_vec.size();
    if (gen_w.rank() != 2 || gen_w.dim(0) != d || gen_w.dim(1) != 2 * c || gen_b.size() != 2 * c) {
        throw ConfigError("film generator " + shape_str(gen_w.shape()) + " cannot map a " +
                          std::to_string(d) + "-vector to " + std::to_string(c) +
                          " scale/shift pairs");
    }
    auto params = reshape(add_row_bias(matmul(reshape(cond_vec, {1, d}), gen_w), gen_b), {2 * c});
    return modulate(x, slice(params, 0, c), slice(params, c, c));
}

template <typename T>
VocalEncoding<T> encode_vocal(const BasicTensor<T>& z_v, const BasicParams<T>& params,
                              const UNetConfig& cfg) {
    if (z_v.rank() != 2 || z_v.dim(0) != cfg.in_channels || z_v.dim(1) % 4 != 0) {
        throw DimensionError("encode_vocal: expected [" + std::to_string(cfg.in_channels) +
                             ", L] with L divisible by 4, got " + shape_str(z_v.shape()));
    }
    Net<T> net(params, cfg);
    auto h = silu(net.conv(z_v, "vocal.conv1", kSampleStride, kSamplePad));
    h = net.conv(h, "vocal.conv2", kSampleStride, kSamplePad);
    auto tokens = transpose(h);
    auto pooled = mean_rows(tokens);
    return {tokens, pooled};
}

template <typename T>
BasicTensor<T> unet_forward(const BasicTensor<T>& x_t, int t,
                            const std::optional<VocalEncoding<T>>& cond,
                            const BasicParams<T>& params, const UNetConfig& cfg,
                            const Schedule& s) {
    cfg.validate();
    s.check_timestep(t);
    if (x_t.rank() != 2 || x_t.dim(0) != cfg.in_channels) {
        throw DimensionError("unet_forward: expected [" + std::to_string(cfg.in_channels) +
                             ", L], got " + shape_str(x_t.shape()));
    }
    const std::size_t len = x_t.dim(1);
    if (len % 8 != 0) {
        throw ConfigError("unet_forward: length " + std::to_string(len) +
                          " is not divisible by 8");
    }
    Net<T> net(params, cfg);
    const std::size_t dim = cfg.time_embed_dim();

    auto temb = timestep_embedding(t, params, cfg);
    const auto& pooled = cond ? cond->pooled : net.p("vocal.null_pooled");
    auto cond_vec = add(reshape(temb, {1, dim}), net.linear(reshape(pooled, {1, dim}), "vocal.proj"));
    auto c = reshape(silu(cond_vec), {dim});

    auto h = net.conv(x_t, "stem", 1, 1);
    std::vector<BasicTensor<T>> skips;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto name = "down" + std::to_string(i);
        h = net.res_block(h, name + ".res", c);
        skips.push_back(h);
        h = net.down(h, name, c);
    }

    h = net.res_block(h, "mid.res1", c);
    h = soft_align_attention(h, t, cfg.attention(), attention_params_view(params, "mid.attn"), s);
    if (cond) {
        h = net.cross_attention(h, cond->tokens);
    }
    h = net.res_block(h, "mid.res2", c);

    for (std::size_t i = 3; i-- > 0;) {
        const auto name = "up" + std::to_string(i);
        h = net.up(h, name, c);
        h = concat<T>({h, skips[i]});
        h = net.res_block(h, name + ".res", c);
    }
    return net.conv(silu(net.norm(h, "out.gn")), "out.conv", 1, 1);
}

#define VOCALDIFF_INSTANTIATE_BACKBONE(T)                                                          \
    template BasicTensor<T> sinusoidal_embedding<T>(int, std::size_t);                             \
    template BasicTensor<T> timestep_embedding(int, const BasicParams<T>&, const UNetConfig&);     \
    template BasicTensor<T> film(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                 const BasicTensor<T>&, const BasicTensor<T>&);                    \
    template VocalEncoding<T> encode_vocal(const BasicTensor<T>&, const BasicParams<T>&,           \
                                           const UNetConfig&);                                     \
    template BasicTensor<T> unet_forward(const BasicTensor<T>&, int,                               \
                                         const std::optional<VocalEncoding<T>>&,                   \
                                         const BasicParams<T>&, const UNetConfig&,                 \
                                         const Schedule&);

VOCALDIFF_INSTANTIATE_BACKBONE(float)
VOCALDIFF_INSTANTIATE_BACKBONE(double)

#undef VOCALDIFF_INSTANTIATE_BACKBONE

} // namespace vocaldiff
