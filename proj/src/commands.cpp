#include "vocaldiff/commands.hpp"

#include <cstdio>
#include <sstream>

#include "vocaldiff/binio.hpp"
#include "vocaldiff/checkpoint.hpp"
#include "vocaldiff/rng.hpp"

namespace vocaldiff::cmd {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create directory " + dir.string() +
                      (ec ? ": " + ec.message() : std::string()));
    }
}

} // namespace

std::string trace_csv(const SamplerTrace& trace) {
    std::ostringstream os;
    os << "t,mean_v,std_v\n";
    for (const auto& r : trace.records) {
        os << r.t << ',' << fmt_double(r.mean_v) << ',' << fmt_double(r.std_v) << '\n';
    }
    return os.str();
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
    std::ostringstream os;
    os << "step,train_loss,val_loss\n";
    for (const auto& r : rows) {
        os << r.step << ',' << fmt_double(r.train_loss) << ','
           << (r.val_loss ? fmt_double(*r.val_loss) : std::string()) << '\n';
    }
    return os.str();
}

CorpusStats gen_data(const GenDataOptions& opts, std::ostream& log) {
    ensure_dir(opts.out);
    std::vector<LatentPair> pairs;
    for (std::size_t i = 0; i < opts.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "pair_%06zu.vlat", i);
        pairs.push_back(gen_pair(opts.seed + i, opts.length));
        write_pair(pairs.back(), opts.out / name);
    }
    const CorpusStats st = corpus_stats(pairs);
    log << "wrote " << opts.count << " pairs (L=" << opts.length << ") to " << opts.out.string()
        << "\n";
    if (st.count > 0) {
        log << "corpus mean " << fmt_double(st.mean) << " std " << fmt_double(st.std) << " over "
            << st.count << " values\n";
    }
    return st;
}

void print_param_report(const ModelParams& params, std::ostream& log) {
    log << "Params: " << count_params(params) << "\n";
    for (const auto& [block, n] : param_breakdown(params)) {
        log << "  " << block << ": " << n << "\n";
    }
}

TrainOutcome train(const TrainOptions& opts, std::ostream& log) {
    opts.train.validate();
    opts.unet.validate();
    auto corpus = read_corpus(opts.data);
    for (const auto& p : corpus) {
        if (p.length != opts.unet.length) {
            throw ConfigError("pair length " + std::to_string(p.length) +
                              " does not match --length " + std::to_string(opts.unet.length));
        }
    }
    auto split = split_validation(std::move(corpus), opts.train.validation_fraction,
                                  opts.train.seed);
    if (split.train.size() < opts.train.batch) {
        throw ConfigError("insufficient data: " + std::to_string(split.train.size()) +
                          " training pairs in " + opts.data.string() + ", batch needs " +
                          std::to_string(opts.train.batch));
    }
    ModelParams params = init_params(opts.unet, opts.train.seed);
    print_param_report(params, log);
    log << "train pairs " << split.train.size() << ", validation pairs " << split.val.size()
        << (split.val.empty() ? " (early stopping disabled)" : "") << "\n";

    AdamWState opt;
    TrainHooks hooks;
    std::filesystem::path best_path = opts.out;
    best_path += ".best";
    hooks.on_best = [&](const ModelParams& p, long long step, double) {
        save_checkpoint({opts.unet, opts.train, p, static_cast<std::uint64_t>(step)}, best_path);
    };
    hooks.on_step = [&](const TrainLogRow& row) {
        if (row.step % 100 == 0 || row.val_loss) {
            log << "step " << row.step << " loss " << fmt_double(row.train_loss);
            if (row.val_loss) {
                log << " val " << fmt_double(*row.val_loss);
            }
            log << "\n";
        }
    };
    TrainOutcome outcome =
        run_training(params, opt, opts.train, opts.unet, split.train, split.val, hooks);
    save_checkpoint({opts.unet, opts.train, params, static_cast<std::uint64_t>(outcome.steps_run)},
                    opts.out);
    if (opts.log_csv) {
        binio::write_text_atomic(*opts.log_csv, train_log_csv(outcome.log));
    }
    log << "finished after " << outcome.steps_run << " steps"
        << (outcome.early_stopped ? " (early stop)" : "") << "\n";
    return outcome;
}

SampleResult sample(const SampleOptions& opts, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(opts.ckpt);
    const LatentPair vocal = read_pair(opts.vocal);
    if (vocal.length != ckpt.unet.length) {
        throw ConfigError("vocal length " + std::to_string(vocal.length) +
                          " does not match checkpoint length " +
                          std::to_string(ckpt.unet.length));
    }
    const Schedule s = build_cosine_schedule(ckpt.train.T);
    SampleResult res;
    if (opts.unconditional) {
        res = ddpm_sample_unconditional(model_denoiser(vocal.z_v, ckpt.params, ckpt.unet, s),
                                        vocal.z_v.shape(), s, opts.seed);
    } else {
        res = ddpm_sample(vocal.z_v, ckpt.params, ckpt.unet, s, opts.guidance, opts.seed);
    }
    write_pair({vocal.z_v, res.sample, vocal.seed, vocal.length}, opts.out);
    if (opts.trace_csv) {
        binio::write_text_atomic(*opts.trace_csv, trace_csv(res.trace));
    }
    log << "sampled " << s.T << " steps, wrote " << opts.out.string() << "\n";
    return res;
}

BenchReport bench(const BenchCommandOptions& opts, std::ostream& log) {
    BenchReport report = run_bench(opts.bench);
    if (opts.csv) {
        binio::write_text_atomic(*opts.csv, report.csv());
    } else {
        log << report.csv();
    }
    log << report.summary();
    return report;
}

AnalyzeResult analyze(const AnalyzeOptions& opts, std::ostream& log) {
    const Checkpoint ckpt = load_checkpoint(opts.ckpt);
    auto corpus = read_corpus(opts.data);
    if (corpus.empty()) {
        throw ConfigError("no pairs in " + opts.data.string());
    }
    const std::size_t n = std::min(opts.pairs, corpus.size());
    std::vector<std::optional<VocalEncoding<float>>> encs;
    for (std::size_t j = 0; j < n; ++j) {
        if (corpus[j].length != ckpt.unet.length) {
            throw ConfigError("pair length " + std::to_string(corpus[j].length) +
                              " does not match checkpoint length " +
                              std::to_string(ckpt.unet.length));
        }
        encs.emplace_back(encode_vocal(corpus[j].z_v, ckpt.params, ckpt.unet));
    }
    const Schedule s = build_cosine_schedule(ckpt.train.T);
    AnalyzeResult res;
    std::ostringstream csv;
    csv << "t,std_v\n";
    for (int t = 1; t <= s.T; ++t) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) {
            Rng rng = Rng::stream(opts.seed, "analyze", static_cast<std::uint64_t>(t), j);
            Tensor eps = rng.normal_tensor(corpus[j].z_a.shape());
            Tensor x_t = forward_diffuse(corpus[j].z_a, eps, t, s);
            acc += moments(unet_forward(x_t, t, encs[j], ckpt.params, ckpt.unet, s)).std;
        }
        res.std_v.push_back(acc / static_cast<double>(n));
        csv << t << ',' << fmt_double(res.std_v.back()) << '\n';
    }
    binio::write_text_atomic(opts.csv, csv.str());
    const std::size_t dec = std::max<std::size_t>(1, res.std_v.size() / 10);
    for (std::size_t i = 0; i < dec; ++i) {
        res.first_decile_mean += res.std_v[i] / static_cast<double>(dec);
        res.last_decile_mean += res.std_v[res.std_v.size() - 1 - i] / static_cast<double>(dec);
    }
    log << "mean std_v, t in first decile: " << fmt_double(res.first_decile_mean)
        << "; last decile: " << fmt_double(res.last_decile_mean) << "\n";
    return res;
}

} // namespace vocaldiff::cmd
