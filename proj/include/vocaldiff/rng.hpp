#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "vocaldiff/tensor.hpp"

namespace vocaldiff {

// Seeded random source. Independent named sub-streams are derived from one
// master seed so that data order, noise, dropout and init never share state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Sub-stream keyed by (seed, name, a, b).
    static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t a = 0,
                      std::uint64_t b = 0);

    double uniform() { return uniform_(engine_); }
    double normal() { return normal_(engine_); }
    // Inclusive range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    bool bernoulli(double p) { return uniform() < p; }

    Tensor normal_tensor(const Shape& shape);
    Tensor64 normal_tensor64(const Shape& shape);
    Tensor uniform_tensor(const Shape& shape, double lo, double hi);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name, std::uint64_t a = 0,
                       std::uint64_t b = 0);

} // namespace vocaldiff
