#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "vocaldiff/bench.hpp"
#include "vocaldiff/diffusion.hpp"
#include "vocaldiff/training.hpp"

// Library form of each CLI subcommand. Errors propagate as exceptions; the
// executable turns them into a one-line diagnostic and a non-zero exit.
namespace vocaldiff::cmd {

struct GenDataOptions {
    std::size_t count = 8;
    std::size_t length = 64;
    std::uint64_t seed = 0;
    std::filesystem::path out;
};
CorpusStats gen_data(const GenDataOptions& opts, std::ostream& log);

struct TrainOptions {
    std::filesystem::path data;
    std::filesystem::path out;
    std::optional<std::filesystem::path> log_csv;
    TrainConfig train;
    UNetConfig unet;
};
TrainOutcome train(const TrainOptions& opts, std::ostream& log);

// "Params: N" line plus one line per block.
void print_param_report(const ModelParams& params, std::ostream& log);

struct SampleOptions {
    std::filesystem::path ckpt;
    std::filesystem::path vocal;
    std::filesystem::path out;
    std::optional<std::filesystem::path> trace_csv;
    double guidance = 3.0;
    std::uint64_t seed = 0;
    // Drive the chain with the unconditional branch only.
    bool unconditional = false;
};
SampleResult sample(const SampleOptions& opts, std::ostream& log);

struct BenchCommandOptions {
    BenchOptions bench;
    std::optional<std::filesystem::path> csv;
};
BenchReport bench(const BenchCommandOptions& opts, std::ostream& log);

struct AnalyzeOptions {
    std::filesystem::path ckpt;
    std::filesystem::path data;
    std::filesystem::path csv;
    std::uint64_t seed = 0;
    std::size_t pairs = 4;
};

struct AnalyzeResult {
    std::vector<double> std_v; // index t-1
    double first_decile_mean = 0;
    double last_decile_mean = 0;
};
AnalyzeResult analyze(const AnalyzeOptions& opts, std::ostream& log);

std::string trace_csv(const SamplerTrace& trace);
std::string train_log_csv(const std::vector<TrainLogRow>& rows);

} // namespace vocaldiff::cmd
