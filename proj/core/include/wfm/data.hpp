#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wfm/config.hpp"
#include "wfm/errors.hpp"
#include "wfm/tensor.hpp"

namespace wfm {

enum class SourceKind { iq, cir, synthetic };

const char* source_kind_name(SourceKind kind);
SourceKind source_kind_from_name(const std::string& name);

// One multichannel time-series sample. I and Q are two real channels; CIR
// records store their single channel in channel 0 with channel 1 all zeros.
struct SignalRecord {
    Tensor<float> samples;  // [C, L_raw]
    double sample_rate_hz = 1.0;
    std::optional<int> label;
    SourceKind source_kind = SourceKind::synthetic;

    std::size_t channels() const { return samples.rank() == 2 ? samples.dim(0) : 0; }
    std::size_t length() const { return samples.rank() == 2 ? samples.dim(1) : 0; }
};

enum class FitMode { pad_right_zero, upsample_linear };

// -- scalar-templated kernels ------------------------------------------------

// Per-channel standardization with population variance: (x - mean) / sqrt(var + eps).
// A constant channel maps to all zeros.
template <typename T>
void instance_normalize_channel(const T* x, std::size_t n, double eps, T* out) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += static_cast<double>(x[i]);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<T>((static_cast<double>(x[i]) - mean) * inv);
    }
}

// Linear resample onto `out_len` points; source position of output index j is
// j * (in_len - 1) / (out_len - 1), so endpoints are preserved exactly.
template <typename T>
void linear_resample(const T* x, std::size_t in_len, T* out, std::size_t out_len) {
    if (out_len == 1) {
        out[0] = x[0];
        return;
    }
    const double scale = static_cast<double>(in_len - 1) / static_cast<double>(out_len - 1);
    for (std::size_t j = 0; j < out_len; ++j) {
        const double pos = static_cast<double>(j) * scale;
        std::size_t lo = static_cast<std::size_t>(pos);
        if (lo >= in_len - 1) {
            out[j] = x[in_len - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(lo);
        out[j] = static_cast<T>((1.0 - frac) * static_cast<double>(x[lo]) +
                                frac * static_cast<double>(x[lo + 1]));
    }
}

// Overlapping patch extraction: signal [C, L] -> patches [C, N, P] with
// N = (L - P) / S + 1; patch n of channel c copies samples [n*S, n*S + P).
template <typename T>
void patchify_signal(const T* sig, std::size_t channels, std::size_t len,
                     const HyperConfig& cfg, T* patches) {
    const std::size_t n_patches = cfg.num_patches();
    const std::size_t p = cfg.patch_len;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* chan = sig + c * len;
        T* out_chan = patches + c * n_patches * p;
        for (std::size_t n = 0; n < n_patches; ++n) {
            const T* src = chan + n * cfg.stride;
            T* dst = out_chan + n * p;
            for (std::size_t i = 0; i < p; ++i) dst[i] = src[i];
        }
    }
}

// -- record-level operations -------------------------------------------------

SignalRecord instance_normalize(const SignalRecord& rec, double eps = 1e-5);

SignalRecord fit_length(const SignalRecord& rec, std::size_t target_len, FitMode mode);

// Patch grid [C, N, P] for a record already fitted to cfg.input_len.
Tensor<float> patchify(const SignalRecord& rec, const HyperConfig& cfg);

// normalize -> fit -> patchify, the canonical model input path.
Tensor<float> prepare_patches(const SignalRecord& rec, const HyperConfig& cfg,
                              FitMode mode = FitMode::pad_right_zero, double eps = 1e-5);

// -- dataset container -------------------------------------------------------

// Records plus the sidecar manifest content. `classes` names the label space
// (empty for unlabeled corpora); `scenario_json` is an optional raw JSON
// object stored verbatim in the manifest (used by the synthetic generator).
struct Dataset {
    std::vector<SignalRecord> records;
    std::vector<std::string> classes;
    std::string scenario_json;

    std::size_t size() const { return records.size(); }
    bool labeled() const;
};

// Binary container (little-endian): magic "WFDS", version 1, f32 payload of
// count x channels x length. Labels and metadata go to `<path>.manifest.json`.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::string manifest_path_for(const std::string& dataset_path);

}  // namespace wfm
