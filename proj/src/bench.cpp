#include "vocaldiff/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "vocaldiff/attention.hpp"
#include "vocaldiff/errors.hpp"
#include "vocaldiff/rng.hpp"

namespace vocaldiff {

double fit_exponent(const std::vector<double>& lengths, const std::vector<double>& times) {
    if (lengths.size() != times.size() || lengths.size() < 2) {
        throw ContractError("fit_exponent: need at least two matching points");
    }
    const double n = static_cast<double>(lengths.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        const double x = std::log(lengths[i]);
        const double y = std::log(times[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

double median_ns(int reps, const std::function<void()>& fn) {
    std::vector<double> samples;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t m = samples.size() / 2;
    return samples.size() % 2 ? samples[m] : 0.5 * (samples[m - 1] + samples[m]);
}

} // namespace

BenchReport run_bench(const BenchOptions& opts) {
    if (opts.reps < 1) {
        throw ConfigError("reps must be >= 1");
    }
    if (opts.length < 4 || opts.length % 4 != 0) {
        throw ConfigError("bench length must be a positive multiple of 4");
    }
    AttentionConfig cfg{opts.heads, opts.head_dim, opts.window};
    cfg.validate();
    const Schedule sched = build_cosine_schedule(800);
    ModelParams params;
    Rng init = Rng::stream(opts.seed, "bench.init");
    add_attention_params(params, "attn", cfg, init);
    const auto p = attention_params_view(params, "attn");

    BenchReport report;
    report.low_confidence = opts.reps == 1;
    std::vector<double> lens, t_local, t_global, t_soft;
    for (std::size_t len : {opts.length / 4, opts.length / 2, opts.length}) {
        Rng rng = Rng::stream(opts.seed, "bench.data", len);
        std::vector<Tensor> q, k, v;
        for (std::size_t h = 0; h < opts.heads; ++h) {
            q.push_back(rng.normal_tensor({len, opts.head_dim}));
            k.push_back(rng.normal_tensor({len, opts.head_dim}));
            v.push_back(rng.normal_tensor({len, opts.head_dim}));
        }
        Tensor x = rng.normal_tensor({cfg.model_dim(), len});
        // Warm-up so first-touch allocation is not timed.
        (void)local_attention(q[0], k[0], v[0], opts.window);
        (void)global_attention(q[0], k[0], v[0]);

        const double local = median_ns(opts.reps, [&] {
            for (std::size_t h = 0; h < opts.heads; ++h) {
                (void)local_attention(q[h], k[h], v[h], opts.window);
            }
        });
        const double global = median_ns(opts.reps, [&] {
            for (std::size_t h = 0; h < opts.heads; ++h) {
                (void)global_attention(q[h], k[h], v[h]);
            }
        });
        const double soft = median_ns(opts.reps, [&] {
            (void)soft_align_attention(x, sched.T / 2, cfg, p, sched);
        });
        report.rows.push_back({"local", len, opts.reps, local});
        report.rows.push_back({"global", len, opts.reps, global});
        report.rows.push_back({"soft_align", len, opts.reps, soft});
        lens.push_back(static_cast<double>(len));
        t_local.push_back(local);
        t_global.push_back(global);
        t_soft.push_back(soft);
    }
    report.local_exponent = fit_exponent(lens, t_local);
    report.global_exponent = fit_exponent(lens, t_global);
    report.soft_align_exponent = fit_exponent(lens, t_soft);
    return report;
}

std::string BenchReport::csv() const {
    std::ostringstream os;
    os << "kernel,length,reps,ns_per_call,low_confidence\n";
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.0f", r.ns_per_call);
        os << r.kernel << ',' << r.length << ',' << r.reps << ',' << buf << ','
           << (r.reps == 1 ? 1 : 0) << '\n';
    }
    return os.str();
}

std::string BenchReport::summary() const {
    std::ostringstream os;
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-10s L=%-6zu %12.3f ms/call\n", r.kernel.c_str(),
                      r.length, r.ns_per_call / 1e6);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "fitted exponents: global %.3f, local %.3f, soft_align %.3f\n",
                  global_exponent, local_exponent, soft_align_exponent);
    os << buf;
    if (low_confidence) {
        os << "warning: single measurement per point (reps=1), low confidence\n";
    }
    return os.str();
}

} // namespace vocaldiff
