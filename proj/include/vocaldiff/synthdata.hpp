#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vocaldiff/tensor.hpp"

namespace vocaldiff {

inline constexpr std::size_t kLatentChannels = 64;
inline constexpr std::size_t kBandCount = 8;
inline constexpr std::size_t kTonesPerBand = 3;
inline constexpr std::size_t kAccompanimentShift = 4;
inline constexpr double kVocalNoise = 0.05;

struct LatentPair {
    Tensor z_v; // conditioning, [64, L]
    Tensor z_a; // target, [64, L]
    std::uint64_t seed = 0;
    std::size_t length = 0;
};

// Vocal latent: per band of 8 channels, three integer-cycle sinusoids with
// random phases mixed with random per-channel weights, plus small noise;
// standardized to zero mean and unit variance.
Tensor gen_vocal(std::uint64_t seed, std::size_t length);

// Fixed vocal -> accompaniment map shared by every pair: square each channel
// (doubling every tone frequency) and drop its DC, delay 4 frames circularly,
// mix channels with a fixed matrix, standardize.
Tensor accompaniment_transform(const Tensor& z_v);

LatentPair gen_pair(std::uint64_t seed, std::size_t length);

// Pearson correlation of two equally sized tensors.
double correlation(const Tensor& a, const Tensor& b);

struct CorpusStats {
    double mean = 0;
    double std = 0;
    std::size_t count = 0;
};

// Statistics over every z_v and z_a value in the corpus.
CorpusStats corpus_stats(std::span<const LatentPair> pairs);

// VLAT: "VLAT", u32 version=1, u32 C=64, u32 L, u64 seed, z_v then z_a as
// C*L little-endian f32 each, row-major.
std::vector<std::uint8_t> encode_pair(const LatentPair& pair);
LatentPair decode_pair(std::span<const std::uint8_t> bytes);

void write_pair(const LatentPair& pair, const std::filesystem::path& path);
LatentPair read_pair(const std::filesystem::path& path);

// Reads every pair_*.vlat in `dir`, in file-name order.
std::vector<LatentPair> read_corpus(const std::filesystem::path& dir);

} // namespace vocaldiff
