#include <CLI11.hpp>

#include <iostream>

#include "vocaldiff/commands.hpp"

using namespace vocaldiff;

int main(int argc, char** argv) {
    CLI::App app{"vocal-conditioned latent diffusion toolkit"};
    app.require_subcommand(1);

    cmd::GenDataOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "write synthetic latent pairs");
    gen_cmd->add_option("--count", gen.count, "number of pairs")->capture_default_str();
    gen_cmd->add_option("--length", gen.length, "frames per latent")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "first seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "output directory")->required();

    cmd::TrainOptions tr;
    std::string width = "1";
    std::string log_csv;
    auto* train_cmd = app.add_subcommand("train", "train the denoiser");
    train_cmd->add_option("--data", tr.data, "directory of pair files")->required();
    train_cmd->add_option("--steps", tr.train.steps)->capture_default_str();
    train_cmd->add_option("--batch", tr.train.batch)->capture_default_str();
    train_cmd->add_option("--lr", tr.train.lr)->capture_default_str();
    train_cmd->add_option("--timesteps", tr.train.T)->capture_default_str();
    train_cmd->add_option("--cond-dropout", tr.train.cond_dropout)->capture_default_str();
    train_cmd->add_option("--width-mult", width, "e.g. 1, 1/8 or 0.125")->capture_default_str();
    train_cmd->add_option("--groups", tr.unet.groups)->capture_default_str();
    train_cmd->add_option("--length", tr.unet.length)->capture_default_str();
    train_cmd->add_option("--seed", tr.train.seed)->capture_default_str();
    train_cmd->add_option("--eval-every", tr.train.eval_every)->capture_default_str();
    train_cmd->add_option("--patience", tr.train.patience)->capture_default_str();
    train_cmd->add_option("--guidance", tr.train.guidance_scale, "stored default for sampling")
        ->capture_default_str();
    train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
    train_cmd->add_option("--log", log_csv, "training log CSV");

    cmd::SampleOptions smp;
    std::string trace_csv;
    auto* sample_cmd = app.add_subcommand("sample", "generate an accompaniment latent");
    sample_cmd->add_option("--ckpt", smp.ckpt)->required();
    sample_cmd->add_option("--vocal", smp.vocal, "pair file supplying z_v")->required();
    sample_cmd->add_option("--guidance", smp.guidance)->capture_default_str();
    sample_cmd->add_option("--seed", smp.seed)->capture_default_str();
    sample_cmd->add_option("--out", smp.out)->required();
    sample_cmd->add_option("--trace", trace_csv, "sampler trace CSV");
    sample_cmd->add_flag("--unconditional", smp.unconditional, "ignore the vocal conditioning");

    cmd::BenchCommandOptions bo;
    std::string bench_csv;
    auto* bench_cmd = app.add_subcommand("bench", "time attention kernels");
    bench_cmd->add_option("--length", bo.bench.length)->capture_default_str();
    bench_cmd->add_option("--heads", bo.bench.heads)->capture_default_str();
    bench_cmd->add_option("--head-dim", bo.bench.head_dim)->capture_default_str();
    bench_cmd->add_option("--window", bo.bench.window)->capture_default_str();
    bench_cmd->add_option("--reps", bo.bench.reps)->capture_default_str();
    bench_cmd->add_option("--seed", bo.bench.seed)->capture_default_str();
    bench_cmd->add_option("--csv", bench_csv, "write the CSV here instead of stdout");

    cmd::AnalyzeOptions an;
    auto* analyze_cmd = app.add_subcommand("analyze", "std of predicted v per timestep");
    analyze_cmd->add_option("--ckpt", an.ckpt)->required();
    analyze_cmd->add_option("--data", an.data)->required();
    analyze_cmd->add_option("--csv", an.csv)->required();
    analyze_cmd->add_option("--seed", an.seed)->capture_default_str();
    analyze_cmd->add_option("--pairs", an.pairs)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            cmd::gen_data(gen, std::cout);
        } else if (train_cmd->parsed()) {
            tr.unet.width_mult = Rational::parse(width);
            if (!log_csv.empty()) {
                tr.log_csv = log_csv;
            }
            cmd::train(tr, std::cout);
        } else if (sample_cmd->parsed()) {
            if (!trace_csv.empty()) {
                smp.trace_csv = trace_csv;
            }
            cmd::sample(smp, std::cout);
        } else if (bench_cmd->parsed()) {
            if (!bench_csv.empty()) {
                bo.csv = bench_csv;
            }
            cmd::bench(bo, std::cout);
        } else if (analyze_cmd->parsed()) {
            cmd::analyze(an, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
