#pragma once

#include <cstddef>
#include <string>

#include "wfm/errors.hpp"

namespace wfm {

// Model/pipeline hyperparameters: input length L, patch length P, stride S,
// channel count C, hidden dim D. Defaults follow the reference setup
// (4096/128/32, two channels, hidden 64, 50% masking).
struct HyperConfig {
    std::size_t input_len = 4096;
    std::size_t patch_len = 128;
    std::size_t stride = 32;
    std::size_t channels = 2;
    std::size_t hidden_dim = 64;
    double mask_ratio = 0.5;

    std::size_t num_patches() const {
        return (input_len - patch_len) / stride + 1;
    }

    void validate() const {
        if (patch_len == 0 || patch_len > input_len) {
            throw ConfigError("HyperConfig: require 0 < patch_len <= input_len, got P=" +
                              std::to_string(patch_len) + " L=" + std::to_string(input_len));
        }
        if (stride == 0 || stride > patch_len) {
            throw ConfigError("HyperConfig: require 1 <= stride <= patch_len, got S=" +
                              std::to_string(stride) + " P=" + std::to_string(patch_len));
        }
        if (hidden_dim == 0) throw ConfigError("HyperConfig: hidden_dim must be >= 1");
        if (channels == 0) throw ConfigError("HyperConfig: channels must be >= 1");
        if (mask_ratio != 0.5) {
            throw ConfigError("HyperConfig: mask_ratio is fixed at 0.5");
        }
        if (num_patches() < 2) {
            throw ConfigError("HyperConfig: need at least 2 patches, (L,P,S)=(" +
                              std::to_string(input_len) + "," + std::to_string(patch_len) +
                              "," + std::to_string(stride) + ") gives " +
                              std::to_string(num_patches()));
        }
    }

    bool operator==(const HyperConfig& o) const {
        return input_len == o.input_len && patch_len == o.patch_len && stride == o.stride &&
               channels == o.channels && hidden_dim == o.hidden_dim &&
               mask_ratio == o.mask_ratio;
    }
};

}  // namespace wfm
