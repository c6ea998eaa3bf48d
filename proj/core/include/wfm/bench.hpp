#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "wfm/config.hpp"
#include "wfm/model.hpp"

namespace wfm {

struct LatencyStats {
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double max_ms = 0.0;
};

struct BenchReport {
    std::size_t warmup_iters = 0;
    std::size_t measured_iters = 0;
    std::size_t batch = 1;
    LatencyStats full;        // normalize -> patchify -> encode -> classify
    LatencyStats model_only;  // encode -> classify on the already-built patches
    std::string config_digest;
    std::string host;
    bool clock_warning = false;  // monotonic clock coarser than 10 us

    std::string to_json() const;
    static BenchReport from_json(const std::string& text);
};

// Latency protocol: warmup untimed forward passes, then iters timed ones over
// a pre-generated input pool, batch samples per iteration. Both scopes are
// timed inside the same pass, so the total number of forward invocations is
// exactly (warmup + iters) * batch. The timed section allocates no parameters
// and touches no files; all buffers are warmed before measurement. A trunk
// without a classification head gets a seeded 4-class head attached first.
BenchReport bench_inference(const ModelParams<float>& params, const HyperConfig& cfg,
                            std::size_t warmup = 10, std::size_t iters = 5000,
                            std::size_t batch = 1, std::uint64_t seed = 0);

}  // namespace wfm
