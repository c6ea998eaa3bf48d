#include <doctest.h>

#include <string>

#include "wfm/bench.hpp"

using namespace wfm;

namespace {

HyperConfig tiny_config() {
    HyperConfig cfg;
    cfg.input_len = 64;
    cfg.patch_len = 16;
    cfg.stride = 8;
    cfg.channels = 2;
    cfg.hidden_dim = 8;
    return cfg;
}

}  // namespace

TEST_CASE("a single measured iteration collapses the distribution") {
    const HyperConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg, std::nullopt, Rng(1));
    const BenchReport rep = bench_inference(params, cfg, 2, 1, 1, 0);
    CHECK(rep.warmup_iters == 2);
    CHECK(rep.measured_iters == 1);
    CHECK(rep.batch == 1);
    CHECK(rep.full.mean_ms == rep.full.p50_ms);
    CHECK(rep.full.mean_ms == rep.full.p95_ms);
    CHECK(rep.full.mean_ms == rep.full.max_ms);
    CHECK(rep.full.mean_ms > 0.0);
}

TEST_CASE("latency statistics are ordered and the scopes nest") {
    const HyperConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg, 4, Rng(2));
    const BenchReport rep = bench_inference(params, cfg, 3, 60, 1, 0);
    for (const LatencyStats& s : {rep.full, rep.model_only}) {
        CHECK(s.mean_ms > 0.0);
        CHECK(s.p50_ms <= s.p95_ms);
        CHECK(s.p95_ms <= s.max_ms);
    }
    // the model-only scope is a suffix of the full pipeline scope
    CHECK(rep.model_only.mean_ms <= rep.full.mean_ms);
    CHECK(!rep.config_digest.empty());
    CHECK(!rep.host.empty());
}

TEST_CASE("reports round-trip through json with bit-identical statistics") {
    const HyperConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg, std::nullopt, Rng(3));
    const BenchReport rep = bench_inference(params, cfg, 1, 5, 2, 0);
    const BenchReport back = BenchReport::from_json(rep.to_json());
    CHECK(back.warmup_iters == rep.warmup_iters);
    CHECK(back.measured_iters == rep.measured_iters);
    CHECK(back.batch == rep.batch);
    CHECK(back.full.mean_ms == rep.full.mean_ms);
    CHECK(back.full.p50_ms == rep.full.p50_ms);
    CHECK(back.full.p95_ms == rep.full.p95_ms);
    CHECK(back.full.max_ms == rep.full.max_ms);
    CHECK(back.model_only.mean_ms == rep.model_only.mean_ms);
    CHECK(back.model_only.p95_ms == rep.model_only.p95_ms);
    CHECK(back.config_digest == rep.config_digest);
    CHECK(back.host == rep.host);
    CHECK(back.clock_warning == rep.clock_warning);
}

TEST_CASE("malformed report json is rejected") {
    CHECK_THROWS_AS(BenchReport::from_json("not json at all {"), FormatError);
}

TEST_CASE("the monotonic clock on this host is fine enough") {
    const HyperConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg, std::nullopt, Rng(4));
    const BenchReport rep = bench_inference(params, cfg, 1, 3, 1, 0);
    CHECK(!rep.clock_warning);
}

TEST_CASE("bench arguments are validated") {
    const HyperConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg, std::nullopt, Rng(5));
    CHECK_THROWS_AS(bench_inference(params, cfg, 1, 0, 1, 0), ArgumentError);
    CHECK_THROWS_AS(bench_inference(params, cfg, 1, 1, 0, 0), ArgumentError);

    HyperConfig other = tiny_config();
    other.hidden_dim = 16;
    CHECK_THROWS_AS(bench_inference(params, other, 1, 1, 1, 0), ConfigError);
}
