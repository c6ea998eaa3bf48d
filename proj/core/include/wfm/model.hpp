#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wfm/config.hpp"
#include "wfm/errors.hpp"
#include "wfm/numerics.hpp"
#include "wfm/rng.hpp"
#include "wfm/tensor.hpp"

namespace wfm {

inline constexpr const char* kInitSchemeId = "uniform-fanavg-v1";

template <typename T>
struct NamedTensor {
    const char* name;
    Tensor<T>* tensor;
};

template <typename T>
struct NamedTensorView {
    const char* name;
    const Tensor<T>* tensor;
};

// All trainable weights. The two-layer patch encoder and the reconstruction
// matrix are shared across every channel and patch; exactly one copy exists.
// The classification head is optional (absent during pre-training).
template <typename T>
struct ModelParams {
    Tensor<T> enc_w1;   // [D, P]
    Tensor<T> enc_b1;   // [D]
    Tensor<T> enc_w2;   // [D, D]
    Tensor<T> enc_b2;   // [D]
    Tensor<T> recon_w;  // [P, D]
    Tensor<T> cls_w;    // [num_classes, C*D], empty when no head
    Tensor<T> cls_b;    // [num_classes]

    bool has_classifier() const { return !cls_w.empty(); }

    std::size_t hidden_dim() const { return enc_w1.dim(0); }
    std::size_t patch_len() const { return enc_w1.dim(1); }
    std::size_t num_classes() const { return has_classifier() ? cls_w.dim(0) : 0; }

    std::vector<NamedTensor<T>> tensors() {
        std::vector<NamedTensor<T>> out = {
            {"enc_w1", &enc_w1}, {"enc_b1", &enc_b1}, {"enc_w2", &enc_w2},
            {"enc_b2", &enc_b2}, {"recon_w", &recon_w},
        };
        if (has_classifier()) {
            out.push_back({"cls_w", &cls_w});
            out.push_back({"cls_b", &cls_b});
        }
        return out;
    }

    std::vector<NamedTensorView<T>> tensors() const {
        auto& self = const_cast<ModelParams&>(*this);
        std::vector<NamedTensorView<T>> out;
        for (auto nt : self.tensors()) out.push_back({nt.name, nt.tensor});
        return out;
    }

    // Scalars actually stored, counted by traversal.
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (auto nt : tensors()) n += nt.tensor->size();
        return n;
    }

    // Zero-filled gradients (or accumulator) with matching shapes.
    ModelParams zeros_like() const {
        ModelParams g;
        g.enc_w1 = Tensor<T>(enc_w1.shape());
        g.enc_b1 = Tensor<T>(enc_b1.shape());
        g.enc_w2 = Tensor<T>(enc_w2.shape());
        g.enc_b2 = Tensor<T>(enc_b2.shape());
        g.recon_w = Tensor<T>(recon_w.shape());
        if (has_classifier()) {
            g.cls_w = Tensor<T>(cls_w.shape());
            g.cls_b = Tensor<T>(cls_b.shape());
        }
        return g;
    }
};

// Closed-form trainable parameter count: trunk P*D + D + D*D + D + D*P, plus
// C*D*num_classes + num_classes when the classification head is included.
inline std::size_t param_count(const HyperConfig& cfg, bool include_cls = false,
                               std::size_t num_classes = 0) {
    const std::size_t p = cfg.patch_len;
    const std::size_t d = cfg.hidden_dim;
    std::size_t n = p * d + d + d * d + d + d * p;
    if (include_cls) n += cfg.channels * d * num_classes + num_classes;
    return n;
}

namespace detail {

template <typename T>
void init_uniform_fan(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<T>(rng.uniform(-a, a));
    }
}

}  // namespace detail

// Fan-averaged uniform init, biases zero. Each matrix draws from its own
// derived stream, so the trunk is identical with or without a head.
template <typename T>
ModelParams<T> init_params(const HyperConfig& cfg, std::optional<std::size_t> num_classes,
                           Rng rng) {
    cfg.validate();
    const std::size_t p = cfg.patch_len;
    const std::size_t d = cfg.hidden_dim;
    ModelParams<T> params;
    params.enc_w1 = Tensor<T>({d, p});
    params.enc_b1 = Tensor<T>({d});
    params.enc_w2 = Tensor<T>({d, d});
    params.enc_b2 = Tensor<T>({d});
    params.recon_w = Tensor<T>({p, d});
    detail::init_uniform_fan(params.enc_w1, p, d, rng.split(0));
    detail::init_uniform_fan(params.enc_w2, d, d, rng.split(1));
    detail::init_uniform_fan(params.recon_w, d, p, rng.split(2));
    if (num_classes.has_value()) {
        if (*num_classes < 2) {
            throw ConfigError("init_params: classification head needs >= 2 classes");
        }
        const std::size_t feat = cfg.channels * d;
        params.cls_w = Tensor<T>({*num_classes, feat});
        params.cls_b = Tensor<T>({*num_classes});
        detail::init_uniform_fan(params.cls_w, feat, *num_classes, rng.split(3));
    }
    return params;
}

// Adds (or replaces) a classification head sized for the given channel count,
// fan-initialized weights and zero bias. The trunk is untouched.
template <typename T>
void attach_classifier(ModelParams<T>& params, std::size_t channels, std::size_t num_classes,
                       Rng rng) {
    if (num_classes < 2) {
        throw ConfigError("attach_classifier: need >= 2 classes, got " +
                          std::to_string(num_classes));
    }
    const std::size_t feat = channels * params.hidden_dim();
    params.cls_w = Tensor<T>({num_classes, feat});
    params.cls_b = Tensor<T>({num_classes});
    detail::init_uniform_fan(params.cls_w, feat, num_classes, rng.split(3));
}

// First-layer pre-activations and both layer outputs for a patch grid.
// z1 = relu(W1 x + b1) feeds the contrastive loss, z2 = W2 z1 + b2 feeds
// reconstruction. Each (channel, patch) row is mapped independently.
template <typename T>
struct EncoderActivations {
    Tensor<T> h1;  // [C, N, D] pre-activation of layer 1
    Tensor<T> z1;  // [C, N, D]
    Tensor<T> z2;  // [C, N, D]
};

template <typename T>
void encode_into(const Tensor<T>& patches, const ModelParams<T>& params,
                 EncoderActivations<T>& acts) {
    if (patches.rank() != 3) {
        throw DimensionError("encode: expected patches [C, N, P], got " +
                             patches.shape_string());
    }
    const std::size_t rows = patches.dim(0) * patches.dim(1);
    const std::size_t p = patches.dim(2);
    const std::size_t d = params.hidden_dim();
    if (p != params.patch_len()) {
        throw DimensionError("encode: patch length " + std::to_string(p) +
                             " does not match encoder input " +
                             std::to_string(params.patch_len()));
    }
    const std::vector<std::size_t> out_shape = {patches.dim(0), patches.dim(1), d};
    if (acts.h1.shape() != out_shape) {
        acts.h1 = Tensor<T>(out_shape);
        acts.z1 = Tensor<T>(out_shape);
        acts.z2 = Tensor<T>(out_shape);
    }
    affine_rows(patches.data(), rows, p, params.enc_w1.data(), d, params.enc_b1.data(),
                acts.h1.data());
    for (std::size_t i = 0; i < acts.h1.size(); ++i) {
        acts.z1[i] = acts.h1[i] > T(0) ? acts.h1[i] : T(0);
    }
    affine_rows(acts.z1.data(), rows, d, params.enc_w2.data(), d, params.enc_b2.data(),
                acts.z2.data());
}

template <typename T>
EncoderActivations<T> encode(const Tensor<T>& patches, const ModelParams<T>& params) {
    EncoderActivations<T> acts;
    encode_into(patches, params, acts);
    return acts;
}

// Patch-wise reconstruction x_hat = W z2, no bias.
template <typename T>
void reconstruct_into(const Tensor<T>& z2, const ModelParams<T>& params, Tensor<T>& xhat) {
    if (z2.rank() != 3 || z2.dim(2) != params.hidden_dim()) {
        throw DimensionError("reconstruct: expected z2 [C, N, D] with D=" +
                             std::to_string(params.hidden_dim()) + ", got " +
                             z2.shape_string());
    }
    const std::vector<std::size_t> out_shape = {z2.dim(0), z2.dim(1), params.patch_len()};
    if (xhat.shape() != out_shape) xhat = Tensor<T>(out_shape);
    affine_rows(z2.data(), z2.dim(0) * z2.dim(1), z2.dim(2), params.recon_w.data(),
                params.patch_len(), static_cast<const T*>(nullptr), xhat.data());
}

template <typename T>
Tensor<T> reconstruct(const Tensor<T>& z2, const ModelParams<T>& params) {
    Tensor<T> xhat;
    reconstruct_into(z2, params, xhat);
    return xhat;
}

// Cached intermediates of one classification forward, kept for backprop.
template <typename T>
struct ClassifyCache {
    Tensor<T> features;               // [C*D] pooled (pre-dropout)
    Tensor<T> dropped;                // [C*D] post-dropout input to the linear layer
    std::vector<std::uint32_t> pool_route;  // [C*D] winning patch index per feature
    std::vector<std::uint8_t> keep;   // [C*D] dropout keep mask (all 1 in eval)
    double keep_scale = 1.0;          // 1/(1-p) during training, 1 otherwise
};

// Classification head: per-channel global max-pool over patches, channel
// concatenation, inverted dropout (training only), then a linear layer.
template <typename T>
void classify_into(const Tensor<T>& z2, const ModelParams<T>& params, double dropout_p,
                   Rng* rng, bool training, Tensor<T>& logits, ClassifyCache<T>* cache) {
    if (!params.has_classifier()) {
        throw ConfigError("classify: model has no classification head");
    }
    if (z2.rank() != 3 || z2.dim(2) != params.hidden_dim()) {
        throw DimensionError("classify: expected z2 [C, N, D], got " + z2.shape_string());
    }
    const std::size_t channels = z2.dim(0);
    const std::size_t n_patches = z2.dim(1);
    const std::size_t d = z2.dim(2);
    const std::size_t feat_dim = channels * d;
    if (params.cls_w.dim(1) != feat_dim) {
        throw DimensionError("classify: head expects " + std::to_string(params.cls_w.dim(1)) +
                             " features, got " + std::to_string(feat_dim));
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw ArgumentError("classify: dropout_p must lie in [0, 1)");
    }

    ClassifyCache<T> local;
    ClassifyCache<T>& c = cache ? *cache : local;
    if (c.features.size() != feat_dim) {
        c.features = Tensor<T>({feat_dim});
        c.dropped = Tensor<T>({feat_dim});
        c.pool_route.assign(feat_dim, 0);
        c.keep.assign(feat_dim, 1);
    }

    for (std::size_t ch = 0; ch < channels; ++ch) {
        global_maxpool_rows(z2.data() + ch * n_patches * d, n_patches, d,
                            c.features.data() + ch * d, c.pool_route.data() + ch * d);
    }

    const bool drop = training && dropout_p > 0.0;
    if (drop && !rng) {
        throw ArgumentError("classify: training-mode dropout needs an rng");
    }
    c.keep_scale = drop ? 1.0 / (1.0 - dropout_p) : 1.0;
    for (std::size_t i = 0; i < feat_dim; ++i) {
        const bool keep = !drop || rng->next_double() >= dropout_p;
        c.keep[i] = keep ? 1 : 0;
        c.dropped[i] = keep ? static_cast<T>(c.features[i] * c.keep_scale) : T(0);
    }

    const std::size_t k = params.cls_w.dim(0);
    if (logits.size() != k) logits = Tensor<T>({k});
    affine_rows(c.dropped.data(), 1, feat_dim, params.cls_w.data(), k, params.cls_b.data(),
                logits.data());
}

template <typename T>
Tensor<T> classify(const Tensor<T>& z2, const ModelParams<T>& params, double dropout_p = 0.0,
                   Rng* rng = nullptr, bool training = false) {
    Tensor<T> logits;
    classify_into(z2, params, dropout_p, rng, training, logits,
                  static_cast<ClassifyCache<T>*>(nullptr));
    return logits;
}

}  // namespace wfm
