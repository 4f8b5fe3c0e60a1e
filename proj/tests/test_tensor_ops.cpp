#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vocaldiff/ops.hpp"
#include "vocaldiff/optim.hpp"
#include "vocaldiff/rng.hpp"

using namespace vocaldiff;

namespace {

double max_abs_diff(const Tensor64& a, const std::vector<long double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        m = std::max(m, static_cast<double>(std::fabs(a[i] - b[i])));
    }
    return m;
}

} // namespace

TEST_CASE("matmul matches triple loop") {
    Rng rng(1);
    auto a = rng.normal_tensor64({5, 7});
    auto b = rng.normal_tensor64({7, 3});
    std::vector<long double> ref(15, 0.0L);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t k = 0; k < 7; ++k) {
                ref[i * 3 + j] += static_cast<long double>(a.at(i, k)) * b.at(k, j);
            }
        }
    }
    CHECK(max_abs_diff(matmul(a, b), ref) < 1e-12);
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("identity matmul is exact") {
    Rng rng(2);
    auto a = rng.normal_tensor({4, 4});
    std::vector<float> eye(16, 0.0f);
    for (std::size_t i = 0; i < 4; ++i) {
        eye[i * 5] = 1.0f;
    }
    CHECK(matmul(a, Tensor({4, 4}, eye)).bitwise_equal(a));
}

TEST_CASE("conv1d matches nested loops") {
    Rng rng(3);
    const std::size_t cin = 3, cout = 4, len = 11, k = 4;
    auto x = rng.normal_tensor64({cin, len});
    auto w = rng.normal_tensor64({cout, cin, k});
    auto b = rng.normal_tensor64({cout});
    for (std::size_t stride : {1u, 2u, 3u}) {
        for (std::size_t pad : {0u, 1u, 2u}) {
            const std::size_t lout = (len + 2 * pad - k) / stride + 1;
            std::vector<long double> ref(cout * lout);
            for (std::size_t o = 0; o < cout; ++o) {
                for (std::size_t l = 0; l < lout; ++l) {
                    long double acc = b[o];
                    for (std::size_t c = 0; c < cin; ++c) {
                        for (std::size_t j = 0; j < k; ++j) {
                            const long pos = static_cast<long>(l * stride + j) - static_cast<long>(pad);
                            if (pos >= 0 && pos < static_cast<long>(len)) {
                                acc += static_cast<long double>(w[(o * cin + c) * k + j]) *
                                       x[c * len + static_cast<std::size_t>(pos)];
                            }
                        }
                    }
                    ref[o * lout + l] = acc;
                }
            }
            auto y = conv1d(x, w, b, stride, pad);
            CHECK(y.shape() == Shape{cout, lout});
            CHECK(max_abs_diff(y, ref) < 1e-12);
        }
    }
}

TEST_CASE("conv_transpose1d is the adjoint of conv1d") {
    Rng rng(4);
    const std::size_t cin = 3, cout = 2, k = 4, stride = 2, pad = 1;
    // conv1d maps [cout, lin] -> [cin, lout] with weight [cin, cout, k];
    // the transposed conv uses the same weight tensor as [C_in=cin, C_out=cout, K].
    const std::size_t lin = 8;
    auto w = rng.normal_tensor64({cin, cout, k});
    auto x = rng.normal_tensor64({cout, lin});
    auto zero_b_in = Tensor64::zeros({cin});
    auto zero_b_out = Tensor64::zeros({cout});
    auto y = conv1d(x, w, zero_b_in, stride, pad);
    auto r = rng.normal_tensor64(y.shape());
    auto xt = conv_transpose1d(r, w, zero_b_out, stride, pad);
    REQUIRE(xt.shape() == x.shape());
    long double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        lhs += static_cast<long double>(y[i]) * r[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        rhs += static_cast<long double>(x[i]) * xt[i];
    }
    CHECK(std::fabs(static_cast<double>(lhs - rhs)) < 1e-10);
    CHECK(conv_transpose1d(rng.normal_tensor({4, 16}), rng.normal_tensor({4, 2, 4}),
                           Tensor::zeros({2}), 2, 1)
              .shape() == Shape{2, 32});
}

TEST_CASE("softmax against extended precision") {
    Rng rng(5);
    auto x = rng.normal_tensor64({4, 9});
    auto y = softmax(x);
    std::vector<long double> ref(x.size());
    for (std::size_t r = 0; r < 4; ++r) {
        long double z = 0;
        for (std::size_t c = 0; c < 9; ++c) {
            z += std::exp(static_cast<long double>(x.at(r, c)));
        }
        double row = 0;
        for (std::size_t c = 0; c < 9; ++c) {
            ref[r * 9 + c] = std::exp(static_cast<long double>(x.at(r, c))) / z;
            row += y.at(r, c);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(max_abs_diff(y, ref) < 1e-14);
    // Large logits stay finite.
    auto big = softmax(Tensor({1, 2}, {1000.0f, 999.0f}));
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] + big[1] == doctest::Approx(1.0));
}

TEST_CASE("silu and modulate closed forms") {
    Rng rng(6);
    auto x = rng.normal_tensor64({3, 5});
    auto y = silu(x);
    std::vector<long double> ref(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const long double v = x[i];
        ref[i] = v / (1.0L + std::exp(-v));
    }
    CHECK(max_abs_diff(y, ref) < 1e-14);

    auto sc = rng.normal_tensor64({3});
    auto sh = rng.normal_tensor64({3});
    auto m = modulate(x, sc, sh);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t l = 0; l < 5; ++l) {
            CHECK(m.at(c, l) == doctest::Approx((1 + sc[c]) * x.at(c, l) + sh[c]).epsilon(1e-14));
        }
    }
}

TEST_CASE("group_norm statistics") {
    Rng rng(7);
    auto x = rng.normal_tensor64({8, 32});
    auto xs = scale(x, 3.0);
    auto y = group_norm(xs, 4, Tensor64::full({8}, 1.0), Tensor64::zeros({8}));
    for (std::size_t g = 0; g < 4; ++g) {
        double m = 0, v = 0;
        for (std::size_t i = g * 64; i < (g + 1) * 64; ++i) {
            m += y[i];
        }
        m /= 64;
        for (std::size_t i = g * 64; i < (g + 1) * 64; ++i) {
            v += (y[i] - m) * (y[i] - m);
        }
        v /= 64;
        CHECK(std::abs(m) < 1e-12);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK_THROWS_AS(group_norm(x, 3, Tensor64::full({8}, 1.0), Tensor64::zeros({8})),
                    ConfigError);
}

TEST_CASE("reductions and shape plumbing") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(sum(a).item() == 21.0f);
    CHECK(mean(a).item() == 3.5f);
    CHECK(mean_rows(a).values() == std::vector<float>{2.5f, 3.5f, 4.5f});
    CHECK(transpose(a).values() == std::vector<float>{1, 4, 2, 5, 3, 6});
    CHECK(slice(a, 1, 1).values() == std::vector<float>{4, 5, 6});
    CHECK(concat<float>({a, a}).shape() == Shape{4, 3});
    CHECK(mse(a, Tensor::zeros({2, 3})).item() == doctest::Approx(91.0 / 6));
    CHECK_THROWS_AS(reshape(a, {4}), DimensionError);
    CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(slice(a, 1, 2), DimensionError);
}

TEST_CASE("tape records only tracked inputs") {
    Rng rng(8);
    auto a = rng.normal_tensor({2, 2});
    auto b = rng.normal_tensor({2, 2});
    CHECK_FALSE(matmul(a, b).requires_grad());

    Tape tape;
    TapeScope<float> scope(tape);
    auto wa = tape.watch(a);
    const auto before = tape.size();
    auto c = add(a, b);
    CHECK_FALSE(c.requires_grad());
    CHECK(tape.size() == before);
    auto d = add(wa, b);
    CHECK(d.requires_grad());
    CHECK(tape.size() == before + 1);
}

TEST_CASE("backward yields zeros for unreachable leaves") {
    Tape tape;
    TapeScope<float> scope(tape);
    auto x = tape.watch(Tensor({2}, {1, 2}));
    auto unused = tape.watch(Tensor({3}, {1, 2, 3}));
    auto g = tape.backward(sum(mul(x, x)));
    CHECK(g.at(*x.node_id()).values() == std::vector<float>{2, 4});
    CHECK(g.at(*unused.node_id()).values() == std::vector<float>{0, 0, 0});
}

TEST_CASE("mixing tapes is rejected") {
    Tape t1;
    Tape t2;
    Tensor x1;
    {
        TapeScope<float> s(t1);
        x1 = t1.watch(Tensor({1}, {1}));
    }
    TapeScope<float> s(t2);
    auto x2 = t2.watch(Tensor({1}, {2}));
    CHECK_THROWS_AS(add(x1, x2), ContractError);
}

TEST_CASE("reused node accumulates gradient") {
    Tape tape;
    TapeScope<float> scope(tape);
    auto x = tape.watch(Tensor({1}, {3}));
    auto y = add(mul(x, x), scale(x, 2.0f));
    auto g = tape.backward(sum(y));
    CHECK(g.at(*x.node_id())[0] == doctest::Approx(8.0));
}

TEST_CASE("adamw matches a hand-computed step") {
    ModelParams p{{"w", Tensor({2}, {1.0f, -2.0f})}};
    NamedGrads g{{"w", Tensor({2}, {0.5f, -0.25f})}};
    AdamWState st;
    AdamWOptions o;
    o.lr = 0.1;
    o.weight_decay = 0.01;
    adamw_step(p, g, st, o, 1);
    // At step 1 the bias-corrected update is g/(|g| + eps) = sign(g).
    for (int i = 0; i < 2; ++i) {
        const double w0 = i == 0 ? 1.0 : -2.0;
        const double gi = i == 0 ? 0.5 : -0.25;
        const double expect = w0 - 0.1 * 0.01 * w0 - 0.1 * gi / (std::abs(gi) + 1e-8);
        CHECK(p.at("w")[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("adamw endpoints and errors") {
    ModelParams p{{"w", Tensor({3}, {1, 2, 3})}};
    const auto before = p.at("w");
    AdamWState st;
    AdamWOptions o;
    o.weight_decay = 0.0;
    adamw_step(p, {{"w", Tensor::zeros({3})}}, st, o, 1);
    CHECK(p.at("w").bitwise_equal(before));
    CHECK_THROWS_AS(adamw_step(p, {}, st, o, 2), ContractError);
    CHECK_THROWS_AS(adamw_step(p, {{"w", Tensor::zeros({3})}}, st, o, 0), ContractError);
}
