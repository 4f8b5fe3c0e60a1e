#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vocaldiff/backbone.hpp"
#include "vocaldiff/rng.hpp"

using namespace vocaldiff;

namespace {

const std::optional<VocalEncoding<float>> kNone;

UNetConfig small() {
    UNetConfig cfg;
    cfg.width_mult = {1, 8};
    cfg.length = 64;
    return cfg;
}

// Randomizes every parameter so zero-initialized paths become live.
ModelParams perturbed(const UNetConfig& cfg, std::uint64_t seed) {
    auto params = init_params(cfg, seed);
    Rng rng(seed + 1);
    for (auto& [name, p] : params) {
        auto noise = rng.normal_tensor(p.shape());
        p = add(p, scale(noise, 0.05f));
    }
    return params;
}

} // namespace

TEST_CASE("rational width multipliers") {
    CHECK(Rational::parse("1/8") == Rational{1, 8});
    CHECK(Rational::parse("2/16") == Rational{1, 8});
    CHECK(Rational::parse("0.125") == Rational{1, 8});
    CHECK(Rational::parse("1") == Rational{1, 1});
    CHECK(Rational::parse("1/16").str() == "1/16");
    CHECK_THROWS_AS(Rational::parse("abc"), ConfigError);
    CHECK_THROWS_AS(Rational::parse("1/0"), ConfigError);
    CHECK_THROWS_AS(Rational::parse("-1"), ConfigError);
}

TEST_CASE("channel ladder") {
    UNetConfig cfg;
    CHECK(cfg.ladder() == std::array<std::size_t, 4>{64, 128, 256, 512});
    CHECK(cfg.head_dim() == 64);
    cfg.width_mult = {1, 8};
    CHECK(cfg.ladder() == std::array<std::size_t, 4>{8, 16, 32, 64});
    CHECK(cfg.head_dim() == 8);
    cfg.width_mult = {1, 128};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    UNetConfig bad_len;
    bad_len.length = 20;
    CHECK_THROWS_AS(bad_len.validate(), ConfigError);
    UNetConfig bad_groups;
    bad_groups.groups = 7;
    CHECK_THROWS_AS(bad_groups.validate(), ConfigError);
}

TEST_CASE("default parameter count lies in the target band") {
    auto params = init_params(UNetConfig{}, 0);
    const auto n = count_params(params);
    MESSAGE("default parameter count " << n);
    CHECK(n >= 8'000'000);
    CHECK(n <= 25'000'000);
    std::size_t total = 0;
    for (const auto& [block, c] : param_breakdown(params)) {
        total += c;
    }
    CHECK(total == n);
    CHECK(param_breakdown(params).count("mid.attn") == 1);
}

TEST_CASE("initialization is seeded") {
    auto a = init_params(small(), 3);
    auto b = init_params(small(), 3);
    auto c = init_params(small(), 4);
    bool all_same = true;
    bool any_diff = false;
    for (const auto& [name, p] : a) {
        all_same &= p.bitwise_equal(b.at(name));
        any_diff |= !p.bitwise_equal(c.at(name));
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("sinusoidal embedding") {
    auto e = sinusoidal_embedding<double>(5, 8);
    REQUIRE(e.size() == 8);
    for (std::size_t k = 0; k < 4; ++k) {
        const double f = std::pow(10000.0, -static_cast<double>(k) / 4.0);
        CHECK(e[k] == doctest::Approx(std::sin(5 * f)));
        CHECK(e[k + 4] == doctest::Approx(std::cos(5 * f)));
    }
}

TEST_CASE("film with zero generator is the identity") {
    Rng rng(5);
    auto x = rng.normal_tensor({4, 6});
    auto cond = rng.normal_tensor({3});
    auto y = film(x, cond, Tensor::zeros({3, 8}), Tensor::zeros({8}));
    CHECK(y.bitwise_equal(x));
    // Bias-only generator: scale = b[0..C), shift = b[C..2C).
    std::vector<float> b(8, 0.0f);
    b[1] = 1.0f;
    b[6] = 0.5f;
    auto z = film(x, cond, Tensor::zeros({3, 8}), Tensor({8}, b));
    CHECK(z.at(1, 2) == doctest::Approx(2 * x.at(1, 2)));
    CHECK(z.at(2, 3) == doctest::Approx(x.at(2, 3) + 0.5f));
}

TEST_CASE("forward shapes at small and full scale") {
    const auto s = build_cosine_schedule(800);
    auto cfg = small();
    auto params = init_params(cfg, 0);
    Rng rng(6);
    auto x = rng.normal_tensor({64, 64});
    auto enc = encode_vocal(rng.normal_tensor({64, 64}), params, cfg);
    CHECK(enc.tokens.shape() == Shape{16, cfg.time_embed_dim()});
    CHECK(enc.pooled.shape() == Shape{cfg.time_embed_dim()});
    auto y = unet_forward(x, 10, std::optional(enc), params, cfg, s);
    CHECK(y.shape() == Shape{64, 64});
    // Zero-initialized output head.
    for (float v : y.data()) {
        CHECK(v == 0.0f);
    }
    CHECK_THROWS_AS(unet_forward(rng.normal_tensor({64, 60}), 1, std::optional(enc), params, cfg, s),
                    ConfigError);
    CHECK_THROWS_AS(unet_forward(rng.normal_tensor({32, 64}), 1, std::optional(enc), params, cfg, s),
                    DimensionError);
}

TEST_CASE("full-scale latent shape") {
    const auto s = build_cosine_schedule(800);
    UNetConfig cfg;
    cfg.width_mult = {1, 16};
    cfg.groups = 4;
    cfg.length = 1024;
    auto params = perturbed(cfg, 2);
    Rng rng(7);
    auto y = unet_forward(rng.normal_tensor({64, 1024}), 400, kNone, params, cfg, s);
    CHECK(y.shape() == Shape{64, 1024});
}

TEST_CASE("conditioning changes the output and unconditional ignores z_v") {
    const auto s = build_cosine_schedule(800);
    auto cfg = small();
    auto params = perturbed(cfg, 8);
    Rng rng(9);
    auto x = rng.normal_tensor({64, 64});
    auto e1 = encode_vocal(rng.normal_tensor({64, 64}), params, cfg);
    auto e2 = encode_vocal(rng.normal_tensor({64, 64}), params, cfg);
    auto y1 = unet_forward(x, 200, std::optional(e1), params, cfg, s);
    auto y2 = unet_forward(x, 200, std::optional(e2), params, cfg, s);
    auto u = unet_forward(x, 200, kNone, params, cfg, s);
    CHECK_FALSE(y1.bitwise_equal(y2));
    CHECK_FALSE(y1.bitwise_equal(u));
    CHECK(u.bitwise_equal(unet_forward(x, 200, kNone, params, cfg, s)));
    CHECK_FALSE(unet_forward(x, 201, kNone, params, cfg, s).bitwise_equal(u));
}

TEST_CASE("float and double forwards agree") {
    const auto s = build_cosine_schedule(800);
    auto cfg = small();
    auto params = perturbed(cfg, 10);
    auto p64 = cast_params<double>(params);
    Rng rng(11);
    auto x = rng.normal_tensor({64, 64});
    auto zv = rng.normal_tensor({64, 64});
    auto y = unet_forward(x, 50, std::optional(encode_vocal(zv, params, cfg)), params, cfg, s);
    auto y64 = unet_forward(x.cast<double>(), 50,
                            std::optional(encode_vocal(zv.cast<double>(), p64, cfg)), p64, cfg, s);
    double m = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        m = std::max(m, std::abs(y[i] - y64[i]));
    }
    CHECK(m < 1e-4);
}
