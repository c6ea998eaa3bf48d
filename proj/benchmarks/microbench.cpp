#include <benchmark/benchmark.h>

#include "wfm/data.hpp"
#include "wfm/model.hpp"
#include "wfm/ssl.hpp"

namespace {

wfm::HyperConfig desk_config() {
    wfm::HyperConfig cfg;
    cfg.input_len = 1024;
    cfg.patch_len = 64;
    cfg.stride = 32;
    cfg.channels = 2;
    cfg.hidden_dim = 32;
    return cfg;
}

wfm::Tensor<float> random_patches(const wfm::HyperConfig& cfg, wfm::Rng rng) {
    wfm::Tensor<float> patches({cfg.channels, cfg.num_patches(), cfg.patch_len});
    for (std::size_t i = 0; i < patches.size(); ++i) {
        patches[i] = static_cast<float>(rng.normal());
    }
    return patches;
}

void BM_EncodeForward(benchmark::State& state) {
    wfm::HyperConfig cfg = desk_config();
    cfg.hidden_dim = static_cast<std::size_t>(state.range(0));
    const auto params = wfm::init_params<float>(cfg, std::nullopt, wfm::Rng(1));
    const auto patches = random_patches(cfg, wfm::Rng(2));
    wfm::EncoderActivations<float> acts;
    for (auto _ : state) {
        wfm::encode_into(patches, params, acts);
        benchmark::DoNotOptimize(acts.z2.data());
    }
}
BENCHMARK(BM_EncodeForward)->Arg(8)->Arg(32)->Arg(64);

void BM_Classify(benchmark::State& state) {
    const wfm::HyperConfig cfg = desk_config();
    auto params = wfm::init_params<float>(cfg, 4, wfm::Rng(1));
    const auto patches = random_patches(cfg, wfm::Rng(2));
    wfm::EncoderActivations<float> acts;
    wfm::encode_into(patches, params, acts);
    wfm::Tensor<float> logits;
    wfm::ClassifyCache<float> cache;
    for (auto _ : state) {
        wfm::classify_into(acts.z2, params, 0.0, nullptr, false, logits, &cache);
        benchmark::DoNotOptimize(logits.data());
    }
}
BENCHMARK(BM_Classify);

void BM_FullPipelineForward(benchmark::State& state) {
    const wfm::HyperConfig cfg = desk_config();
    auto params = wfm::init_params<float>(cfg, 4, wfm::Rng(1));
    wfm::SignalRecord rec;
    rec.samples = wfm::Tensor<float>({cfg.channels, cfg.input_len});
    wfm::Rng rng(3);
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        rec.samples[i] = static_cast<float>(rng.normal());
    }
    wfm::EncoderActivations<float> acts;
    wfm::Tensor<float> logits;
    wfm::ClassifyCache<float> cache;
    for (auto _ : state) {
        const auto patches = wfm::prepare_patches(rec, cfg);
        wfm::encode_into(patches, params, acts);
        wfm::classify_into(acts.z2, params, 0.0, nullptr, false, logits, &cache);
        benchmark::DoNotOptimize(logits.data());
    }
}
BENCHMARK(BM_FullPipelineForward);

void BM_SslObjectiveWithGrad(benchmark::State& state) {
    const wfm::HyperConfig cfg = desk_config();
    auto params = wfm::init_params<float>(cfg, std::nullopt, wfm::Rng(1));
    const auto patches = random_patches(cfg, wfm::Rng(2));
    const auto mask = wfm::complementary_masks(cfg.num_patches(), wfm::Rng(4));
    auto grads = params.zeros_like();
    wfm::SslWorkspace<float> ws;
    for (auto _ : state) {
        const auto loss = wfm::sample_objective(patches, params, mask, {}, &grads, &ws);
        benchmark::DoNotOptimize(loss.total);
    }
}
BENCHMARK(BM_SslObjectiveWithGrad);

void BM_MaxpoolPairs(benchmark::State& state) {
    const std::size_t n = 125, d = 64;
    wfm::Tensor<float> x({n, d}), y({(n + 1) / 2, d});
    wfm::Rng rng(5);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
    std::vector<std::uint32_t> route((n + 1) / 2 * d);
    for (auto _ : state) {
        wfm::maxpool_pairs_rows(x.data(), n, d, y.data(), route.data());
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_MaxpoolPairs);

}  // namespace

BENCHMARK_MAIN();
