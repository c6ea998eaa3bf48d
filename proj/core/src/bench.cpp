#include "wfm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "wfm/data.hpp"
#include "wfm/ssl.hpp"

namespace wfm {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double to_ms(Clock::duration d) {
    return std::chrono::duration<double, std::milli>(d).count();
}

// Nearest-rank percentile over a sorted sample.
double percentile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    rank = std::min(std::max<std::size_t>(rank, 1), n);
    return sorted[rank - 1];
}

LatencyStats stats_from(std::vector<double> samples) {
    LatencyStats s;
    double sum = 0.0;
    for (const double v : samples) sum += v;
    s.mean_ms = sum / static_cast<double>(samples.size());
    std::sort(samples.begin(), samples.end());
    s.p50_ms = percentile_sorted(samples, 0.50);
    s.p95_ms = percentile_sorted(samples, 0.95);
    s.max_ms = samples.back();
    return s;
}

// Smallest observable nonzero tick of the monotonic clock.
double clock_resolution_us() {
    double best = 1e9;
    for (int probe = 0; probe < 16; ++probe) {
        const auto t0 = Clock::now();
        auto t1 = Clock::now();
        while (t1 == t0) t1 = Clock::now();
        best = std::min(best, to_ms(t1 - t0) * 1000.0);
    }
    return best;
}

std::string hyperconfig_digest(const HyperConfig& cfg) {
    std::uint64_t h = detail::kFnvOffset;
    const std::uint64_t fields[5] = {cfg.input_len, cfg.patch_len, cfg.stride, cfg.channels,
                                     cfg.hidden_dim};
    detail::fnv_update(h, fields, sizeof(fields));
    detail::fnv_update(h, &cfg.mask_ratio, sizeof(cfg.mask_ratio));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string host_description() {
    std::string s = "gcc " __VERSION__;
#if defined(__x86_64__)
    s += " x86_64";
#elif defined(__aarch64__)
    s += " aarch64";
#endif
#if defined(__linux__)
    s += " linux";
#endif
    return s;
}

json stats_json(const LatencyStats& s) {
    return {{"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p95_ms", s.p95_ms},
            {"max_ms", s.max_ms}};
}

LatencyStats stats_from_json(const json& j) {
    LatencyStats s;
    s.mean_ms = j.at("mean_ms").get<double>();
    s.p50_ms = j.at("p50_ms").get<double>();
    s.p95_ms = j.at("p95_ms").get<double>();
    s.max_ms = j.at("max_ms").get<double>();
    return s;
}

}  // namespace

std::string BenchReport::to_json() const {
    json j;
    j["warmup_iters"] = warmup_iters;
    j["measured_iters"] = measured_iters;
    j["batch"] = batch;
    j["full"] = stats_json(full);
    j["model_only"] = stats_json(model_only);
    j["config_digest"] = config_digest;
    j["host"] = host;
    j["clock_warning"] = clock_warning;
    return j.dump(2);
}

BenchReport BenchReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bench report is not valid JSON: ") + e.what(), 0);
    }
    BenchReport r;
    r.warmup_iters = j.at("warmup_iters").get<std::size_t>();
    r.measured_iters = j.at("measured_iters").get<std::size_t>();
    r.batch = j.value("batch", std::size_t(1));
    r.full = stats_from_json(j.at("full"));
    r.model_only = stats_from_json(j.at("model_only"));
    r.config_digest = j.value("config_digest", "");
    r.host = j.value("host", "");
    r.clock_warning = j.value("clock_warning", false);
    return r;
}

BenchReport bench_inference(const ModelParams<float>& params, const HyperConfig& cfg,
                            std::size_t warmup, std::size_t iters, std::size_t batch,
                            std::uint64_t seed) {
    cfg.validate();
    if (iters < 1) throw ArgumentError("bench_inference: iters must be >= 1");
    if (batch < 1) throw ArgumentError("bench_inference: batch must be >= 1");

    ModelParams<float> model = params;
    if (!model.has_classifier()) {
        attach_classifier(model, cfg.channels, 4, Rng(seed).split(11));
    }
    if (model.hidden_dim() != cfg.hidden_dim || model.patch_len() != cfg.patch_len) {
        throw ConfigError("bench_inference: model dimensions do not match the hyperconfig");
    }

    // Input pool and every buffer the timed loop touches are built up front;
    // the measured region performs no allocation and no I/O.
    const std::size_t pool_size = std::min<std::size_t>(256, (warmup + iters) * batch);
    Rng root(seed);
    std::vector<SignalRecord> pool(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) {
        Rng r = root.split(i);
        pool[i].samples = Tensor<float>({cfg.channels, cfg.input_len});
        for (std::size_t t = 0; t < pool[i].samples.size(); ++t) {
            pool[i].samples[t] = static_cast<float>(r.normal());
        }
    }
    EncoderActivations<float> acts;
    ClassifyCache<float> cache;
    Tensor<float> logits;
    volatile float sink = 0.0f;  // keeps the forward pass observable

    std::size_t cursor = 0;
    auto one_pass = [&](Clock::duration& full_d, Clock::duration& model_d) {
        const SignalRecord& rec = pool[cursor];
        cursor = (cursor + 1) % pool_size;
        const auto t0 = Clock::now();
        const Tensor<float> patches = prepare_patches(rec, cfg);
        const auto t1 = Clock::now();
        encode_into(patches, model, acts);
        classify_into(acts.z2, model, 0.0, static_cast<Rng*>(nullptr), false, logits, &cache);
        const auto t2 = Clock::now();
        sink = sink + logits[0];
        full_d = t2 - t0;
        model_d = t2 - t1;
    };

    Clock::duration full_d{}, model_d{};
    for (std::size_t w = 0; w < warmup * batch; ++w) one_pass(full_d, model_d);

    std::vector<double> full_ms, model_ms;
    full_ms.reserve(iters);
    model_ms.reserve(iters);
    for (std::size_t it = 0; it < iters; ++it) {
        Clock::duration full_acc{}, model_acc{};
        for (std::size_t b = 0; b < batch; ++b) {
            one_pass(full_d, model_d);
            full_acc += full_d;
            model_acc += model_d;
        }
        full_ms.push_back(to_ms(full_acc) / static_cast<double>(batch));
        model_ms.push_back(to_ms(model_acc) / static_cast<double>(batch));
    }

    BenchReport report;
    report.warmup_iters = warmup;
    report.measured_iters = iters;
    report.batch = batch;
    report.full = stats_from(std::move(full_ms));
    report.model_only = stats_from(std::move(model_ms));
    report.config_digest = hyperconfig_digest(cfg);
    report.host = host_description();
    report.clock_warning = clock_resolution_us() > 10.0;
    return report;
}

}  // namespace wfm
