#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vocaldiff/rng.hpp"
#include "vocaldiff/schedule.hpp"

using namespace vocaldiff;

namespace {

long double cosine_f(long double t, long double T) {
    const long double s = 0.008L;
    const long double c = std::cos((t / T + s) / (1 + s) * 3.14159265358979323846264338327950288L / 2);
    return c * c;
}

} // namespace

TEST_CASE("alpha_bar follows the cosine closed form") {
    const auto s = build_cosine_schedule(800);
    REQUIRE(s.alpha_bar.size() == 801);
    REQUIRE(s.beta.size() == 800);
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.alpha_bar[800] == 0.0);
    for (int t = 1; t < 800; ++t) {
        const long double ref = cosine_f(t, 800) / cosine_f(0, 800);
        CHECK(std::fabs(static_cast<long double>(s.alpha_bar[static_cast<std::size_t>(t)]) - ref) <
              1e-14L);
    }
}

TEST_CASE("schedule invariants") {
    for (int T : {2, 10, 800, 1000}) {
        const auto s = build_cosine_schedule(T);
        CAPTURE(T);
        for (int t = 0; t <= T; ++t) {
            const auto i = static_cast<std::size_t>(t);
            if (t > 0) {
                CHECK(s.alpha_bar[i] <= s.alpha_bar[i - 1]);
                CHECK(s.beta_at(t) > 0.0);
                CHECK(s.beta_at(t) <= kMaxBeta);
            }
            const double a = s.sqrt_alpha_bar[i];
            const double b = s.sqrt_one_minus_alpha_bar[i];
            CHECK(std::abs(a * a + b * b - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("beta relation and clamp") {
    const auto s = build_cosine_schedule(800);
    for (int t = 1; t < 800; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double expect = std::min(1.0 - s.alpha_bar[i] / s.alpha_bar[i - 1], kMaxBeta);
        CHECK(s.beta_at(t) == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK(s.beta_at(800) == kMaxBeta);
}

TEST_CASE("snr weight") {
    const auto s = build_cosine_schedule(800);
    CHECK(snr_weight(0, s) == kSnrWeightMax);
    CHECK(snr_weight(1, s) == kSnrWeightMax);
    CHECK(snr_weight(800, s) == 0.0);
    bool seen_unclamped = false;
    for (int t = 1; t < 800; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double raw = s.alpha_bar[i] / (1.0 - s.alpha_bar[i]);
        CHECK(snr_weight(t, s) == doctest::Approx(std::min(raw, kSnrWeightMax)));
        CHECK(snr_weight(t + 1, s) <= snr_weight(t, s));
        seen_unclamped |= raw < kSnrWeightMax;
    }
    CHECK(seen_unclamped);
    // alpha_bar = 0.5 gives weight 1.
    const auto s2 = build_cosine_schedule(2);
    CHECK(s2.alpha_bar[1] == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("mix weights") {
    const auto s = build_cosine_schedule(800);
    auto m0 = mix_weight(0, s);
    CHECK(m0.global == 1.0);
    CHECK(m0.local == 0.0);
    auto mT = mix_weight(800, s);
    CHECK(mT.global == 0.0);
    CHECK(mT.local == 1.0);
    for (int t = 0; t <= 800; ++t) {
        auto m = mix_weight(t, s);
        CHECK(m.global + m.local == 1.0);
        CHECK(m.global >= 0.0);
        CHECK(m.local >= 0.0);
        CHECK(m.global == s.sqrt_alpha_bar[static_cast<std::size_t>(t)]);
    }
}

TEST_CASE("forward diffusion") {
    const auto s = build_cosine_schedule(800);
    Rng rng(3);
    auto x0 = rng.normal_tensor({4, 8});
    auto eps = rng.normal_tensor({4, 8});
    CHECK(forward_diffuse(x0, eps, 0, s).bitwise_equal(x0));
    CHECK(forward_diffuse(x0, eps, 800, s).bitwise_equal(eps));
    auto xt = forward_diffuse(x0, eps, 300, s);
    for (std::size_t i = 0; i < xt.size(); ++i) {
        CHECK(xt[i] == doctest::Approx(s.sqrt_alpha_bar[300] * x0[i] +
                                       s.sqrt_one_minus_alpha_bar[300] * eps[i])
                           .epsilon(1e-6));
    }
    CHECK_THROWS_AS(forward_diffuse(x0, rng.normal_tensor({4, 7}), 1, s), DimensionError);
    CHECK_THROWS(forward_diffuse(x0, eps, 801, s));
    CHECK_THROWS(forward_diffuse(x0, eps, -1, s));
}

TEST_CASE("configuration errors") {
    CHECK_THROWS_AS(build_cosine_schedule(1), ConfigError);
    CHECK_THROWS_AS(build_cosine_schedule(0), ConfigError);
}
