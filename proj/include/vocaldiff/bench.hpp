#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vocaldiff {

struct BenchOptions {
    std::size_t length = 1024;
    std::size_t heads = 8;
    std::size_t head_dim = 64;
    std::size_t window = 16;
    int reps = 5;
    std::uint64_t seed = 0;
};

struct BenchRow {
    std::string kernel; // "local", "global" or "soft_align"
    std::size_t length;
    int reps;
    double ns_per_call; // median over reps
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double global_exponent = 0;
    double local_exponent = 0;
    double soft_align_exponent = 0;
    bool low_confidence = false; // set when reps == 1

    std::string csv() const;
    std::string summary() const;
};

// Least-squares slope of log(time) against log(length).
double fit_exponent(const std::vector<double>& lengths, const std::vector<double>& times);

// Times the local and global attention cores (all heads) and the complete
// soft-alignment block at lengths L/4, L/2 and L.
BenchReport run_bench(const BenchOptions& opts);

} // namespace vocaldiff
