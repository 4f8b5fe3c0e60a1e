#include "vocaldiff/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vocaldiff/binio.hpp"
#include "vocaldiff/rng.hpp"

namespace vocaldiff {

namespace {

constexpr std::uint32_t kPairVersion = 1;
constexpr std::uint64_t kMixingSeed = 0x564c4154u; // fixed for every pair

void check_length(std::size_t length) {
    if (length < 16 || length % 8 != 0) {
        throw ConfigError("latent length must be >= 16 and divisible by 8, got " +
                          std::to_string(length));
    }
}

void standardize(std::vector<double>& v) {
    double m = 0;
    for (double x : v) {
        m += x;
    }
    m /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) {
        var += (x - m) * (x - m);
    }
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(v.size()));
    for (double& x : v) {
        x = (x - m) * inv;
    }
}

Tensor to_tensor(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
    return Tensor({rows, cols}, std::vector<float>(v.begin(), v.end()));
}

const std::vector<double>& mixing_matrix() {
    static const std::vector<double> m = [] {
        Rng rng = Rng::stream(kMixingSeed, "mixing");
        std::vector<double> out(kLatentChannels * kLatentChannels);
        const double s = 1.0 / std::sqrt(static_cast<double>(kLatentChannels));
        for (auto& x : out) {
            x = rng.normal() * s;
        }
        return out;
    }();
    return m;
}

} // namespace

Tensor gen_vocal(std::uint64_t seed, std::size_t length) {
    check_length(length);
    Rng rng = Rng::stream(seed, "vocal");
    const std::size_t per_band = kLatentChannels / kBandCount;
    const auto max_cycles = static_cast<std::int64_t>(length / 8);
    std::vector<double> z(kLatentChannels * length, 0.0);
    for (std::size_t band = 0; band < kBandCount; ++band) {
        std::array<double, kTonesPerBand> cycles{};
        std::array<double, kTonesPerBand> phase{};
        for (std::size_t k = 0; k < kTonesPerBand; ++k) {
            cycles[k] = static_cast<double>(rng.uniform_int(1, max_cycles));
            phase[k] = 2.0 * std::numbers::pi * rng.uniform();
        }
        for (std::size_t c = band * per_band; c < (band + 1) * per_band; ++c) {
            std::array<double, kTonesPerBand> weight{};
            for (auto& w : weight) {
                w = rng.normal();
            }
            for (std::size_t tau = 0; tau < length; ++tau) {
                double v = 0;
                for (std::size_t k = 0; k < kTonesPerBand; ++k) {
                    v += weight[k] * std::sin(2.0 * std::numbers::pi * cycles[k] *
                                                  static_cast<double>(tau) /
                                                  static_cast<double>(length) +
                                              phase[k]);
                }
                z[c * length + tau] = v;
            }
        }
    }
    for (auto& v : z) {
        v += kVocalNoise * rng.normal();
    }
    standardize(z);
    return to_tensor(kLatentChannels, length, z);
}

Tensor accompaniment_transform(const Tensor& z_v) {
    if (z_v.rank() != 2 || z_v.dim(0) != kLatentChannels) {
        throw DimensionError("accompaniment_transform: expected [64, L], got " +
                             shape_str(z_v.shape()));
    }
    const std::size_t length = z_v.dim(1);
    std::vector<double> doubled(kLatentChannels * length);
    for (std::size_t c = 0; c < kLatentChannels; ++c) {
        double dc = 0;
        for (std::size_t tau = 0; tau < length; ++tau) {
            const double x = z_v[c * length + tau];
            doubled[c * length + tau] = x * x;
            dc += x * x;
        }
        dc /= static_cast<double>(length);
        for (std::size_t tau = 0; tau < length; ++tau) {
            doubled[c * length + tau] -= dc;
        }
    }
    const auto& mix = mixing_matrix();
    std::vector<double> out(kLatentChannels * length, 0.0);
    for (std::size_t o = 0; o < kLatentChannels; ++o) {
        for (std::size_t c = 0; c < kLatentChannels; ++c) {
            const double m = mix[o * kLatentChannels + c];
            for (std::size_t tau = 0; tau < length; ++tau) {
                const std::size_t src = (tau + length - kAccompanimentShift % length) % length;
                out[o * length + tau] += m * doubled[c * length + src];
            }
        }
    }
    standardize(out);
    return to_tensor(kLatentChannels, length, out);
}

LatentPair gen_pair(std::uint64_t seed, std::size_t length) {
    auto z_v = gen_vocal(seed, length);
    auto z_a = accompaniment_transform(z_v);
    return {std::move(z_v), std::move(z_a), seed, length};
}

double correlation(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw DimensionError("correlation: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0 || sbb == 0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

CorpusStats corpus_stats(std::span<const LatentPair> pairs) {
    CorpusStats st;
    double total = 0, sq = 0;
    for (const auto& p : pairs) {
        for (const auto* t : {&p.z_v, &p.z_a}) {
            for (float v : t->data()) {
                total += v;
                sq += static_cast<double>(v) * v;
            }
            st.count += t->size();
        }
    }
    if (st.count == 0) {
        return st;
    }
    const auto n = static_cast<double>(st.count);
    st.mean = total / n;
    st.std = std::sqrt(std::max(0.0, sq / n - st.mean * st.mean));
    return st;
}

std::vector<std::uint8_t> encode_pair(const LatentPair& pair) {
    const Shape expected{kLatentChannels, pair.length};
    if (pair.z_v.shape() != expected || pair.z_a.shape() != expected) {
        throw DimensionError("encode_pair: latents must be " + shape_str(expected) + ", got " +
                             shape_str(pair.z_v.shape()) + " and " + shape_str(pair.z_a.shape()));
    }
    binio::Writer w;
    w.bytes("VLAT", 4);
    w.le<std::uint32_t>(kPairVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(kLatentChannels));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(pair.length));
    w.le<std::uint64_t>(pair.seed);
    for (float v : pair.z_v.data()) {
        w.f32(v);
    }
    for (float v : pair.z_a.data()) {
        w.f32(v);
    }
    return w.take();
}

LatentPair decode_pair(std::span<const std::uint8_t> bytes) {
    binio::Reader r(bytes, "VLAT");
    r.magic("VLAT");
    const auto version_at = r.offset();
    auto version = r.le<std::uint32_t>("version");
    if (version != kPairVersion) {
        r.fail("unsupported version " + std::to_string(version), version_at);
    }
    const auto channels_at = r.offset();
    auto channels = r.le<std::uint32_t>("channel count");
    if (channels != kLatentChannels) {
        r.fail("expected 64 channels, found " + std::to_string(channels), channels_at);
    }
    const auto length_at = r.offset();
    auto length = r.le<std::uint32_t>("length");
    if (length == 0) {
        r.fail("zero length", length_at);
    }
    auto seed = r.le<std::uint64_t>("seed");
    const std::size_t n = static_cast<std::size_t>(channels) * length;
    auto zv = r.f32s(n, "z_v");
    auto za = r.f32s(n, "z_a");
    r.finish();
    LatentPair p;
    p.z_v = Tensor({channels, length}, std::move(zv));
    p.z_a = Tensor({channels, length}, std::move(za));
    p.seed = seed;
    p.length = length;
    return p;
}

void write_pair(const LatentPair& pair, const std::filesystem::path& path) {
    auto bytes = encode_pair(pair);
    binio::write_file_atomic(path, bytes);
}

LatentPair read_pair(const std::filesystem::path& path) {
    auto bytes = binio::read_file(path);
    try {
        return decode_pair(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<LatentPair> read_corpus(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw IoError("'" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("pair_", 0) == 0 &&
            entry.path().extension() == ".vlat") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<LatentPair> out;
    out.reserve(files.size());
    for (const auto& f : files) {
        out.push_back(read_pair(f));
    }
    return out;
}

} // namespace vocaldiff
