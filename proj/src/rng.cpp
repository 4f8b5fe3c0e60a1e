#include "vocaldiff/rng.hpp"

namespace vocaldiff {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name, std::uint64_t a,
                       std::uint64_t b) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : name) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ h);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ (b + 0x632be59bd9b4e019ULL));
    return s;
}

Rng Rng::stream(std::uint64_t seed, std::string_view name, std::uint64_t a, std::uint64_t b) {
    return Rng(mix_seed(seed, name, a, b));
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> dist(lo, hi);
    return dist(engine_);
}

Tensor Rng::normal_tensor(const Shape& shape) {
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) {
        v = static_cast<float>(normal());
    }
    return Tensor(shape, std::move(data));
}

Tensor64 Rng::normal_tensor64(const Shape& shape) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) {
        v = normal();
    }
    return Tensor64(shape, std::move(data));
}

Tensor Rng::uniform_tensor(const Shape& shape, double lo, double hi) {
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) {
        v = static_cast<float>(lo + (hi - lo) * uniform());
    }
    return Tensor(shape, std::move(data));
}

} // namespace vocaldiff
