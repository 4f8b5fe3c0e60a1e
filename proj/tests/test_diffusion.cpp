#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "vocaldiff/rng.hpp"
#include "vocaldiff/training.hpp"

using namespace vocaldiff;

namespace {

const Schedule& sched() {
    static const Schedule s = build_cosine_schedule(800);
    return s;
}

UNetConfig tiny() {
    UNetConfig cfg;
    cfg.width_mult = {1, 16};
    cfg.groups = 4;
    cfg.length = 16;
    return cfg;
}

double max_abs(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
    }
    return m;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    for (const auto& [name, p] : a) {
        if (!p.bitwise_equal(b.at(name))) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("v-parametrization round trip") {
    const auto& s = sched();
    Rng rng(1);
    auto x0 = rng.normal_tensor({8, 16});
    auto eps = rng.normal_tensor({8, 16});
    for (int t = 1; t <= 800; t += 7) {
        auto xt = forward_diffuse(x0, eps, t, s);
        auto v = v_target(x0, eps, t, s);
        auto x0h = recover_x0(xt, v, t, s);
        auto epsh = recover_eps(xt, v, t, s);
        CHECK(max_abs(x0h, x0) <= 1e-5);
        CHECK(max_abs(epsh, eps) <= 1e-5);
        auto re = add(scale(x0h, static_cast<float>(s.sqrt_alpha_bar[static_cast<std::size_t>(t)])),
                      scale(epsh, static_cast<float>(
                                      s.sqrt_one_minus_alpha_bar[static_cast<std::size_t>(t)])));
        CHECK(max_abs(re, xt) <= 1e-5);
    }
}

TEST_CASE("v target endpoints") {
    const auto& s = sched();
    Rng rng(2);
    auto x0 = rng.normal_tensor({4, 4});
    auto eps = rng.normal_tensor({4, 4});
    CHECK(v_target(x0, eps, 0, s).bitwise_equal(eps));
    CHECK(max_abs(v_target(x0, eps, 800, s), scale(x0, -1.0f)) == 0.0);
    CHECK(recover_x0(x0, eps, 0, s).bitwise_equal(x0));
    CHECK(recover_eps(x0, eps, 0, s).bitwise_equal(eps));
    CHECK_THROWS_AS(v_target(x0, rng.normal_tensor({4, 5}), 3, s), DimensionError);
    CHECK_THROWS_AS(recover_x0(x0, rng.normal_tensor({4, 5}), 3, s), DimensionError);
    CHECK_THROWS_AS(recover_eps(x0, rng.normal_tensor({4, 5}), 3, s), DimensionError);
}

TEST_CASE("recover_x0 is linear") {
    const auto& s = sched();
    Rng rng(3);
    auto a = rng.normal_tensor({3, 5});
    auto b = rng.normal_tensor({3, 5});
    auto c = rng.normal_tensor({3, 5});
    auto d = rng.normal_tensor({3, 5});
    auto lhs = recover_x0(add(a, scale(c, 2.0f)), add(b, scale(d, 2.0f)), 250, s);
    auto rhs = add(recover_x0(a, b, 250, s), scale(recover_x0(c, d, 250, s), 2.0f));
    CHECK(max_abs(lhs, rhs) < 1e-5);
}

TEST_CASE("SNR loss factorizes") {
    const auto& s = sched();
    Rng rng(4);
    auto a = rng.normal_tensor({8, 8});
    auto b = rng.normal_tensor({8, 8});
    CHECK(loss_snr(a, a, 5, s).item() == 0.0f);
    for (int t = 1; t <= 800; t += 13) {
        const double plain = loss_plain(a, b).item();
        const double w = loss_snr(a, b, t, s).item();
        const double expect = snr_weight(t, s) * plain;
        CHECK(std::abs(w - expect) <= 1e-6 * std::max(1.0, std::abs(expect)));
    }
    CHECK_THROWS_AS(loss_snr(a, rng.normal_tensor({8, 7}), 1, s), DimensionError);
}

TEST_CASE("guidance combination") {
    Rng rng(5);
    auto c = rng.normal_tensor({4, 6});
    auto u = rng.normal_tensor({4, 6});
    CHECK(cfg_combine(c, u, 1.0).bitwise_equal(c));
    CHECK(cfg_combine(c, u, 0.0).bitwise_equal(u));
    auto g2 = cfg_combine(c, u, 2.0);
    auto g3 = cfg_combine(c, u, 3.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(g2[i] == doctest::Approx(2.0 * c[i] - u[i]).epsilon(1e-6));
        // Affine in g: g3 - g2 equals c - u.
        CHECK(g3[i] - g2[i] == doctest::Approx(c[i] - u[i]).epsilon(1e-4));
    }
    CHECK_THROWS_AS(cfg_combine(c, rng.normal_tensor({4, 5}), 1.0), DimensionError);
}

TEST_CASE("oracle denoiser recovers the clean latent") {
    const auto& s = sched();
    Rng rng(6);
    auto x0 = rng.normal_tensor({8, 32});
    Denoiser oracle = [&](const Tensor& xt, int t, bool) {
        const auto i = static_cast<std::size_t>(t);
        // v = (sqrt(ab) x_t - x0) / sqrt(1 - ab)
        return scale(sub(scale(xt, static_cast<float>(s.sqrt_alpha_bar[i])), x0),
                     static_cast<float>(1.0 / s.sqrt_one_minus_alpha_bar[i]));
    };
    auto res = ddpm_sample(oracle, x0.shape(), 3.0, s, 7);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        num += (res.sample[i] - x0[i]) * (res.sample[i] - x0[i]);
        den += x0[i] * x0[i];
    }
    CHECK(std::sqrt(num / den) < 0.05);
    CHECK(res.trace.records.size() == 800);
    CHECK(res.trace.records.front().t == 800);
    CHECK(res.trace.records.back().t == 1);
}

TEST_CASE("sampler stays finite for a wild model") {
    const auto& s = sched();
    Denoiser wild = [](const Tensor& xt, int t, bool cond) {
        return scale(xt, cond ? 1e6f : -1e6f * static_cast<float>(t % 3));
    };
    auto res = ddpm_sample(wild, {4, 8}, 3.0, s, 1);
    for (float v : res.sample.data()) {
        CHECK(std::isfinite(v));
        CHECK(std::abs(v) <= kX0Clamp + 1e-4);
    }
}

TEST_CASE("model sampler determinism and guidance zero") {
    const auto s = build_cosine_schedule(40);
    auto cfg = tiny();
    auto params = init_params(cfg, 1);
    Rng rng(8);
    for (auto& [name, p] : params) {
        p = add(p, scale(rng.normal_tensor(p.shape()), 0.05f));
    }
    auto zv = gen_pair(3, 16).z_v;
    auto a = ddpm_sample(zv, params, cfg, s, 3.0, 11);
    auto b = ddpm_sample(zv, params, cfg, s, 3.0, 11);
    CHECK(a.sample.bitwise_equal(b.sample));
    CHECK(a.trace.records.size() == 40);
    auto c = ddpm_sample(zv, params, cfg, s, 3.0, 12);
    CHECK_FALSE(a.sample.bitwise_equal(c.sample));

    auto g0 = ddpm_sample(zv, params, cfg, s, 0.0, 11);
    auto unc = ddpm_sample_unconditional(model_denoiser(zv, params, cfg, s), zv.shape(), s, 11);
    CHECK(g0.sample.bitwise_equal(unc.sample));
    CHECK_FALSE(g0.sample.bitwise_equal(a.sample));

    CHECK_THROWS_AS(ddpm_sample(rng.normal_tensor({64, 20}), params, cfg, s, 3.0, 1), ConfigError);
    CHECK_THROWS_AS(ddpm_sample(zv, params, cfg, s, -1.0, 1), ConfigError);
}

TEST_CASE("training draws are reproducible and independent per item") {
    const auto& s = sched();
    auto a = draw_training_item(1, 5, 0, {2, 3}, s, 0.5);
    auto b = draw_training_item(1, 5, 0, {2, 3}, s, 0.5);
    auto c = draw_training_item(1, 5, 1, {2, 3}, s, 0.5);
    CHECK(a.t == b.t);
    CHECK(a.eps.bitwise_equal(b.eps));
    CHECK_FALSE(a.eps.bitwise_equal(c.eps));
    int dropped = 0;
    int tmin = 1000, tmax = 0;
    for (std::size_t i = 0; i < 2000; ++i) {
        auto d = draw_training_item(2, 0, i, {1}, s, 0.1);
        dropped += d.dropped;
        tmin = std::min(tmin, d.t);
        tmax = std::max(tmax, d.t);
    }
    CHECK(dropped > 140);
    CHECK(dropped < 260);
    CHECK(tmin >= 1);
    CHECK(tmax <= 800);
    CHECK(tmax > 780);
    CHECK(tmin < 20);
    CHECK(draw_training_item(2, 0, 0, {1}, s, 1.0).dropped);
    CHECK_FALSE(draw_training_item(2, 0, 0, {1}, s, 0.0).dropped);
}

TEST_CASE("train step is deterministic") {
    const auto& s = sched();
    auto cfg = tiny();
    TrainConfig tc;
    tc.batch = 2;
    std::vector<LatentPair> batch{gen_pair(0, 16), gen_pair(1, 16)};
    auto p1 = init_params(cfg, 0);
    auto p2 = init_params(cfg, 0);
    AdamWState o1, o2;
    for (long long step = 0; step < 3; ++step) {
        auto r1 = train_step(batch, p1, o1, tc, cfg, s, step, 1e-3);
        auto r2 = train_step(batch, p2, o2, tc, cfg, s, step, 1e-3);
        CHECK(r1.loss == r2.loss);
        CHECK(r1.item_losses == r2.item_losses);
    }
    CHECK(params_equal(p1, p2));
    CHECK_FALSE(params_equal(p1, init_params(cfg, 0)));
    CHECK_THROWS_AS(train_step({}, p1, o1, tc, cfg, s, 3, 1e-3), ContractError);
}

TEST_CASE("full conditioning dropout ignores the vocal latent") {
    const auto& s = sched();
    auto cfg = tiny();
    TrainConfig tc;
    tc.batch = 2;
    std::vector<LatentPair> a{gen_pair(0, 16), gen_pair(1, 16)};
    std::vector<LatentPair> b = a;
    b[0].z_v = gen_pair(50, 16).z_v;
    b[1].z_v = gen_pair(51, 16).z_v;
    auto run = [&](const std::vector<LatentPair>& batch, double dropout) {
        tc.cond_dropout = dropout;
        auto p = init_params(cfg, 0);
        AdamWState o;
        for (long long step = 0; step < 3; ++step) {
            train_step(batch, p, o, tc, cfg, s, step, 1e-3);
        }
        return p;
    };
    CHECK(params_equal(run(a, 1.0), run(b, 1.0)));
    CHECK_FALSE(params_equal(run(a, 0.0), run(b, 0.0)));
}

TEST_CASE("batch gradients average item gradients") {
    const auto& s = sched();
    auto cfg = tiny();
    TrainConfig tc;
    std::vector<LatentPair> batch{gen_pair(0, 16), gen_pair(1, 16)};
    auto params = init_params(cfg, 0);
    auto both = batch_gradients(batch, params, tc, cfg, s, 4);
    CHECK(both.loss == doctest::Approx((both.item_losses[0] + both.item_losses[1]) / 2));
    // Item 0 alone uses the same per-item stream.
    auto first = batch_gradients(std::span(batch).first(1), params, tc, cfg, s, 4);
    CHECK(first.item_losses[0] == both.item_losses[0]);
    CHECK(both.grads.size() == params.size());
}

TEST_CASE("cosine learning rate") {
    CHECK(cosine_lr(1.0, 0.01, 0, 100) == 1.0);
    CHECK(cosine_lr(1.0, 0.01, 99, 100) == doctest::Approx(0.01));
    CHECK(cosine_lr(1.0, 0.01, 50, 101) == doctest::Approx(0.505));
    for (long long i = 1; i < 100; ++i) {
        CHECK(cosine_lr(1.0, 0.01, i, 100) <= cosine_lr(1.0, 0.01, i - 1, 100));
    }
    CHECK(cosine_lr(2.0, 0.01, 0, 1) == 2.0);
}

TEST_CASE("validation split") {
    std::vector<LatentPair> pairs;
    for (std::uint64_t i = 0; i < 20; ++i) {
        pairs.push_back(gen_pair(i, 16));
    }
    auto sp = split_validation(pairs, 0.1, 3);
    CHECK(sp.val.size() == 2);
    CHECK(sp.train.size() == 18);
    auto again = split_validation(pairs, 0.1, 3);
    CHECK(again.val[0].seed == sp.val[0].seed);
    auto small = split_validation(std::vector<LatentPair>(pairs.begin(), pairs.begin() + 8), 0.1, 3);
    CHECK(small.val.empty());
    CHECK(small.train.size() == 8);
}

TEST_CASE("early stopping after non-improving evaluations") {
    auto cfg = tiny();
    TrainConfig tc;
    tc.batch = 2;
    tc.steps = 50;
    tc.eval_every = 1;
    tc.patience = 3;
    tc.weight_decay = 0.0;
    tc.lr = 1e-30; // updates round away, so validation never improves
    std::vector<LatentPair> train{gen_pair(0, 16), gen_pair(1, 16), gen_pair(2, 16)};
    std::vector<LatentPair> val{gen_pair(3, 16)};
    auto params = init_params(cfg, 0);
    AdamWState opt;
    int best_calls = 0;
    TrainHooks hooks;
    hooks.on_best = [&](const ModelParams&, long long, double) { ++best_calls; };
    auto out = run_training(params, opt, tc, cfg, train, val, hooks);
    CHECK(out.early_stopped);
    CHECK(out.steps_run == 4);
    CHECK(best_calls == 1);
    CHECK(out.log.size() == 4);
    CHECK(out.log[0].val_loss.has_value());
}

TEST_CASE("training needs a full batch") {
    auto cfg = tiny();
    TrainConfig tc;
    tc.batch = 4;
    tc.steps = 1;
    std::vector<LatentPair> train{gen_pair(0, 16)};
    auto params = init_params(cfg, 0);
    AdamWState opt;
    CHECK_THROWS_AS(run_training(params, opt, tc, cfg, train, {}), ConfigError);
    tc.cond_dropout = 1.5;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
}
