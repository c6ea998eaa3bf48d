#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wfm/config.hpp"
#include "wfm/data.hpp"
#include "wfm/errors.hpp"
#include "wfm/model.hpp"
#include "wfm/rng.hpp"
#include "wfm/ssl.hpp"
#include "wfm/tensor.hpp"

namespace wfm {

enum class Strategy { LP, FN, LP_FN };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    Strategy strategy = Strategy::LP_FN;
    std::size_t lp_epochs = 10;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    std::size_t threads = 1;
    double dropout = 0.2;
    double holdout_fraction = 0.2;
    SslOptions ssl;

    // lp_epochs == epochs degenerates LP_FN to pure LP and is allowed.
    void validate() const;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment estimates aligned one-to-one with params.tensors() order. Step
// counts are per tensor, so a parameter first trained in a later stage (the
// trunk under LP_FN) gets fresh bias correction from its own first step.
struct OptimizerState {
    AdamConfig adam;
    std::vector<std::string> names;
    std::vector<Tensor<float>> m;
    std::vector<Tensor<float>> v;
    std::vector<std::uint64_t> t;

    bool empty() const { return names.empty(); }
};

OptimizerState make_optimizer_state(const ModelParams<float>& params, AdamConfig adam = {});

// Bias-corrected Adam update in place. trainable, when given, holds one flag
// per tensor in params.tensors() order; frozen tensors keep their bits and
// their moments. lr == 0 leaves every parameter unchanged. Non-finite
// gradient entries raise NumericError naming the tensor.
void adam_step(ModelParams<float>& params, const ModelParams<float>& grads,
               OptimizerState& state, double lr,
               const std::vector<std::uint8_t>* trainable = nullptr);

struct Checkpoint {
    HyperConfig cfg;
    ModelParams<float> params;
    bool has_opt = false;
    OptimizerState opt;
    std::uint64_t seed = 0;
    // Next epoch index to run; a checkpoint written after epoch e holds e+1.
    std::uint64_t epoch = 0;
    std::uint64_t loss_digest = 0;
    std::string rng_algorithm = Rng::kAlgorithmId;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct EpochState {
    std::size_t next_epoch = 0;
    float loss = 0.0f;
    std::uint64_t loss_digest = 0;
};

using EpochHook =
    std::function<void(const EpochState&, const ModelParams<float>&, const OptimizerState&)>;

struct PretrainResult {
    ModelParams<float> params;
    OptimizerState opt;
    std::vector<float> loss_curve;
    std::uint64_t loss_digest = 0;
};

// Self-supervised pre-training: seeded shuffled mini-batches, the masked
// reconstruction + hierarchical contrastive objective, Adam. Deterministic in
// (corpus, cfg, tcfg) for any thread count. resume continues a checkpointed
// run bit-exactly; hook fires after every epoch.
PretrainResult pretrain(const Dataset& corpus, const HyperConfig& cfg, const TrainConfig& tcfg,
                        const Checkpoint* resume = nullptr, const EpochHook& hook = {});

struct FinetuneResult {
    ModelParams<float> params;
    std::vector<float> train_loss;            // per-epoch mean cross-entropy
    std::vector<std::size_t> eval_epochs;     // epochs at which holdout was scored
    std::vector<float> holdout_accuracy;      // aligned with eval_epochs
    float final_accuracy = 0.0f;
    float best_accuracy = 0.0f;
    std::size_t best_epoch = 0;
};

// Supervised fine-tuning of a pre-trained trunk with a fresh classification
// head, stratified 80/20 holdout, cross-entropy loss. LP freezes the trunk,
// FN trains everything, LP_FN runs lp_epochs of LP then switches to FN.
FinetuneResult finetune(const ModelParams<float>& trunk, const Dataset& labeled,
                        const HyperConfig& cfg, const TrainConfig& tcfg);

struct EvalResult {
    double accuracy = 0.0;
    std::size_t num_classes = 0;
    // Row-major [num_classes, num_classes], row = true label, col = argmax
    // prediction (ties toward the lowest class index).
    std::vector<std::size_t> confusion;
};

EvalResult evaluate(const ModelParams<float>& params, const Dataset& labeled,
                    const HyperConfig& cfg);

struct LrPoint {
    double lr = 0.0;
    double raw_loss = 0.0;
    double smooth_loss = 0.0;
};

struct LrRangeResult {
    std::vector<LrPoint> curve;
    double suggestion = 0.0;
    bool aborted = false;
};

// Geometric learning-rate sweep on a fresh model: one mini-batch update per
// step on the self-supervised objective, exponentially smoothed loss, early
// abort once the smoothed loss exceeds 4x its best. The suggestion is the
// geometric midpoint of the steepest descending segment of the smoothed
// curve.
LrRangeResult lr_range_test(const Dataset& corpus, const HyperConfig& cfg, std::uint64_t seed,
                            double lr_min, double lr_max, std::size_t steps,
                            std::size_t batch_size = 64);

}  // namespace wfm
