#pragma once

#include <cmath>
#include <cstdint>

namespace wfm {

// Splittable counter-style generator built on the SplitMix64 finalizer.
// A stream is (state, gamma) where gamma is an odd increment derived from the
// stream id, so identical (seed, stream) pairs replay bit-identical sequences
// on every platform and split() children are decorrelated by construction.
// The algorithm id is recorded in checkpoints.
class Rng {
public:
    static constexpr const char* kAlgorithmId = "splitmix64-v1";

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix(seed + kGolden)), gamma_(mix(stream + kGolden) | 1ull) {}

    std::uint64_t next_u64() {
        state_ += gamma_;
        return mix(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n); n must be > 0. Multiply-shift mapping.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller. Two draws per value, no cached state.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Derived independent stream. Pure: the parent is not advanced, and the
    // same id always yields the same child.
    Rng split(std::uint64_t stream_id) const {
        Rng child(0);
        child.state_ = mix(state_ ^ mix(stream_id + kGolden));
        child.gamma_ = (mix(gamma_ + mix(stream_id)) | 1ull);
        return child;
    }

    bool operator==(const Rng& other) const {
        return state_ == other.state_ && gamma_ == other.gamma_;
    }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_ = 0;
    std::uint64_t gamma_ = 1;
};

}  // namespace wfm
