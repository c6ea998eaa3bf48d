#include "wfm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>
#include <utility>

#include <json.hpp>

namespace wfm {

using nlohmann::json;

namespace {

// Stream ids hung off the run seed. Every random decision of a training run
// is derived from (seed, stream, epoch, batch, sample), so a resumed run and
// a differently-threaded run make identical draws.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamShuffle = 2;
constexpr std::uint64_t kStreamMask = 3;
constexpr std::uint64_t kStreamDropout = 4;
constexpr std::uint64_t kStreamSplit = 10;
constexpr std::uint64_t kStreamHead = 11;

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i-- > 1;) {
        const std::uint64_t j = rng.below(i + 1);
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

std::vector<Tensor<float>> prepare_all(const Dataset& ds, const HyperConfig& cfg) {
    std::vector<Tensor<float>> out;
    out.reserve(ds.records.size());
    for (const SignalRecord& rec : ds.records) out.push_back(prepare_patches(rec, cfg));
    return out;
}

void run_workers(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t, std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t j = 0; j < n; ++j) fn(j, 0);
        return;
    }
    const std::size_t workers = std::min(threads, n);
    std::vector<std::exception_ptr> errs(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t k = 0; k < workers; ++k) {
        pool.emplace_back([&, k] {
            try {
                for (std::size_t j = k; j < n; j += threads) fn(j, k);
            } catch (...) {
                errs[k] = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errs) {
        if (e) std::rethrow_exception(e);
    }
}

void zero_params(ModelParams<float>& p) {
    for (auto nt : p.tensors()) nt.tensor->fill(0.0f);
}

void accumulate_params(ModelParams<float>& into, const ModelParams<float>& from, float scale) {
    auto dst = into.tensors();
    auto src = from.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        for (std::size_t k = 0; k < dst[i].tensor->size(); ++k) {
            (*dst[i].tensor)[k] += scale * (*src[i].tensor)[k];
        }
    }
}

// One mini-batch of the self-supervised objective: per-sample gradients into
// per-sample slots (thread-count independent), reduced in sample order.
// Returns the sum of per-sample totals; grads receives the batch mean.
double ssl_batch(const std::vector<std::size_t>& idx, const std::vector<Tensor<float>>& cache,
                 const ModelParams<float>& params, Rng mask_base, const SslOptions& opts,
                 std::size_t threads, std::vector<ModelParams<float>>& slots,
                 std::vector<SslWorkspace<float>>& ws, std::vector<double>& losses,
                 ModelParams<float>& grads) {
    const std::size_t n = idx.size();
    const std::size_t n_patches = cache.front().dim(1);
    while (slots.size() < n) slots.push_back(params.zeros_like());
    while (ws.size() < std::max<std::size_t>(threads, 1)) ws.emplace_back();
    losses.assign(n, 0.0);
    run_workers(n, threads, [&](std::size_t j, std::size_t worker) {
        zero_params(slots[j]);
        const MaskPair mask = complementary_masks(n_patches, mask_base.split(j));
        const LossBreakdown<float> one =
            sample_objective(cache[idx[j]], params, mask, opts, &slots[j], &ws[worker]);
        losses[j] = static_cast<double>(one.total);
    });
    grads = params.zeros_like();
    const float inv = 1.0f / static_cast<float>(n);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        accumulate_params(grads, slots[j], inv);
        sum += losses[j];
    }
    return sum;
}

}  // namespace

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::LP: return "lp";
        case Strategy::FN: return "fn";
        case Strategy::LP_FN: return "lp_fn";
    }
    return "lp_fn";
}

Strategy strategy_from_name(const std::string& name) {
    std::string low;
    for (char c : name) low.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(c)));
    if (low == "lp") return Strategy::LP;
    if (low == "fn") return Strategy::FN;
    if (low == "lp_fn") return Strategy::LP_FN;
    throw ArgumentError("unknown strategy '" + name + "' (expected lp, fn, or lp_fn)");
}

namespace {

// The subset of TrainConfig that governs any training loop; pre-training
// checks only this, since strategy and holdout fields play no part there.
void check_loop_fields(const TrainConfig& t) {
    if (t.epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (t.batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (!(t.lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
    if (t.eval_every < 1) throw ConfigError("TrainConfig: eval_every must be >= 1");
    if (t.threads < 1) throw ConfigError("TrainConfig: threads must be >= 1");
}

}  // namespace

void TrainConfig::validate() const {
    check_loop_fields(*this);
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("TrainConfig: dropout must lie in [0, 1)");
    if (!(holdout_fraction > 0.0) || !(holdout_fraction < 1.0)) {
        throw ConfigError("TrainConfig: holdout_fraction must lie in (0, 1)");
    }
    if (strategy == Strategy::LP_FN && lp_epochs > epochs) {
        throw ConfigError("TrainConfig: lp_epochs exceeds total epochs");
    }
}

OptimizerState make_optimizer_state(const ModelParams<float>& params, AdamConfig adam) {
    OptimizerState state;
    state.adam = adam;
    for (auto nt : params.tensors()) {
        state.names.emplace_back(nt.name);
        state.m.emplace_back(nt.tensor->shape());
        state.v.emplace_back(nt.tensor->shape());
        state.t.push_back(0);
    }
    return state;
}

void adam_step(ModelParams<float>& params, const ModelParams<float>& grads,
               OptimizerState& state, double lr,
               const std::vector<std::uint8_t>* trainable) {
    if (lr < 0.0) throw ArgumentError("adam_step: negative learning rate");
    auto pts = params.tensors();
    auto gts = grads.tensors();
    if (gts.size() != pts.size() || state.names.size() != pts.size()) {
        throw DimensionError("adam_step: params, grads, and optimizer state disagree on tensor count");
    }
    if (trainable && trainable->size() != pts.size()) {
        throw DimensionError("adam_step: trainable mask length does not match tensor count");
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (state.names[i] != pts[i].name || !pts[i].tensor->same_shape(*gts[i].tensor) ||
            !pts[i].tensor->same_shape(state.m[i])) {
            throw DimensionError(std::string("adam_step: tensor '") + pts[i].name +
                                 "' does not line up with optimizer state");
        }
        if (trainable && !(*trainable)[i]) continue;
        Tensor<float>& theta = *pts[i].tensor;
        const Tensor<float>& g = *gts[i].tensor;
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!std::isfinite(g[k])) {
                throw NumericError(std::string("adam_step: non-finite gradient in tensor '") +
                                   pts[i].name + "' at index " + std::to_string(k));
            }
        }
        state.t[i] += 1;
        const double b1 = state.adam.beta1;
        const double b2 = state.adam.beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t[i]));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t[i]));
        Tensor<float>& m = state.m[i];
        Tensor<float>& v = state.v[i];
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double gk = g[k];
            const double mk = b1 * m[k] + (1.0 - b1) * gk;
            const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
            m[k] = static_cast<float>(mk);
            v[k] = static_cast<float>(vk);
            const double step = lr * (mk / bc1) / (std::sqrt(vk / bc2) + state.adam.eps);
            theta[k] = static_cast<float>(theta[k] - step);
        }
    }
}

PretrainResult pretrain(const Dataset& corpus, const HyperConfig& cfg, const TrainConfig& tcfg,
                        const Checkpoint* resume, const EpochHook& hook) {
    cfg.validate();
    check_loop_fields(tcfg);
    if (corpus.records.empty()) throw ArgumentError("pretrain: empty corpus");
    const std::vector<Tensor<float>> cache = prepare_all(corpus, cfg);
    const std::size_t n = cache.size();
    Rng root(tcfg.seed);

    PretrainResult res;
    std::size_t start_epoch = 0;
    if (resume) {
        if (!(resume->cfg == cfg)) {
            throw ConfigError("pretrain: checkpoint was trained under a different hyperconfig");
        }
        if (resume->seed != tcfg.seed) {
            throw ConfigError("pretrain: checkpoint seed " + std::to_string(resume->seed) +
                              " differs from configured seed " + std::to_string(tcfg.seed));
        }
        if (resume->rng_algorithm != Rng::kAlgorithmId) {
            throw ConfigError("pretrain: checkpoint uses rng algorithm '" +
                              resume->rng_algorithm + "', this build provides '" +
                              Rng::kAlgorithmId + "'");
        }
        res.params = resume->params;
        res.opt = resume->has_opt ? resume->opt : make_optimizer_state(res.params);
        res.loss_digest = resume->loss_digest;
        start_epoch = resume->epoch;
    } else {
        res.params = init_params<float>(cfg, std::nullopt, root.split(kStreamInit));
        res.opt = make_optimizer_state(res.params);
        res.loss_digest = detail::kFnvOffset;
    }

    std::vector<ModelParams<float>> slots;
    std::vector<SslWorkspace<float>> ws;
    std::vector<double> losses;
    ModelParams<float> grads;
    for (std::size_t e = start_epoch; e < tcfg.epochs; ++e) {
        const std::vector<std::size_t> order = shuffled_indices(n, root.split(kStreamShuffle).split(e));
        double epoch_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t at = 0; at < n; at += tcfg.batch_size, ++batch_index) {
            const std::size_t take = std::min(tcfg.batch_size, n - at);
            const std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + take);
            epoch_sum += ssl_batch(idx, cache, res.params,
                                   root.split(kStreamMask).split(e).split(batch_index),
                                   tcfg.ssl, tcfg.threads, slots, ws, losses, grads);
            adam_step(res.params, grads, res.opt, tcfg.lr);
        }
        const float epoch_loss = static_cast<float>(epoch_sum / static_cast<double>(n));
        res.loss_curve.push_back(epoch_loss);
        detail::fnv_update(res.loss_digest, &epoch_loss, sizeof(epoch_loss));
        if (hook) {
            EpochState es;
            es.next_epoch = e + 1;
            es.loss = epoch_loss;
            es.loss_digest = res.loss_digest;
            hook(es, res.params, res.opt);
        }
    }
    return res;
}

namespace {

// Scratch for one fine-tuning worker thread.
struct FtWorkspace {
    EncoderActivations<float> acts;
    ClassifyCache<float> cache;
    Tensor<float> logits;
    Tensor<float> probs;
    Tensor<float> g_z2;
    Tensor<float> g_z1;
    std::vector<float> dlogits;
    std::vector<float> dfeat;
};

// Cross-entropy forward and, when grad is non-null, the backward pass through
// head, dropout, per-channel max-pool and (unless head_only) the encoder.
// Gradients accumulate unscaled into grad.
double classify_sample(const Tensor<float>& patches, const ModelParams<float>& params,
                       int label, double dropout_p, Rng* drop_rng, bool training,
                       bool head_only, ModelParams<float>* grad, FtWorkspace& ws) {
    encode_into(patches, params, ws.acts);
    classify_into(ws.acts.z2, params, dropout_p, drop_rng, training, ws.logits, &ws.cache);
    const std::size_t k = ws.logits.size();
    if (ws.probs.size() != k) ws.probs = Tensor<float>({k});
    stable_softmax_row(ws.logits.data(), k, ws.probs.data());
    const double p_label = std::max(static_cast<double>(ws.probs[label]), 1e-12);
    const double loss = -std::log(p_label);
    if (!grad) return loss;

    const std::size_t channels = patches.dim(0);
    const std::size_t n = patches.dim(1);
    const std::size_t p = patches.dim(2);
    const std::size_t d = params.hidden_dim();
    const std::size_t feat = channels * d;

    ws.dlogits.assign(k, 0.0f);
    for (std::size_t i = 0; i < k; ++i) {
        ws.dlogits[i] = ws.probs[i] - (static_cast<int>(i) == label ? 1.0f : 0.0f);
    }
    for (std::size_t i = 0; i < k; ++i) {
        const float dl = ws.dlogits[i];
        grad->cls_b[i] += dl;
        float* wrow = grad->cls_w.data() + i * feat;
        const float* x = ws.cache.dropped.data();
        for (std::size_t f = 0; f < feat; ++f) wrow[f] += dl * x[f];
    }
    if (head_only) return loss;

    ws.dfeat.assign(feat, 0.0f);
    for (std::size_t f = 0; f < feat; ++f) {
        if (!ws.cache.keep[f]) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            acc += static_cast<double>(ws.dlogits[i]) * params.cls_w[i * feat + f];
        }
        ws.dfeat[f] = static_cast<float>(acc * ws.cache.keep_scale);
    }
    const std::vector<std::size_t> zshape = {channels, n, d};
    if (ws.g_z2.shape() != zshape) ws.g_z2 = Tensor<float>(zshape);
    ws.g_z2.fill(0.0f);
    for (std::size_t f = 0; f < feat; ++f) {
        if (ws.dfeat[f] == 0.0f) continue;
        const std::size_t c = f / d;
        const std::size_t dd = f % d;
        const std::size_t row = ws.cache.pool_route[f];
        ws.g_z2[(c * n + row) * d + dd] += ws.dfeat[f];
    }
    if (ws.g_z1.shape() != zshape) ws.g_z1 = Tensor<float>(zshape);
    ws.g_z1.fill(0.0f);
    const std::size_t rows = channels * n;
    for (std::size_t row = 0; row < rows; ++row) {
        const float* gz2r = ws.g_z2.data() + row * d;
        const float* z1r = ws.acts.z1.data() + row * d;
        float* gz1r = ws.g_z1.data() + row * d;
        for (std::size_t o = 0; o < d; ++o) {
            const float g2 = gz2r[o];
            if (g2 == 0.0f) continue;
            grad->enc_b2[o] += g2;
            float* w2row = grad->enc_w2.data() + o * d;
            const float* w2src = params.enc_w2.data() + o * d;
            for (std::size_t i = 0; i < d; ++i) {
                w2row[i] += g2 * z1r[i];
                gz1r[i] += g2 * w2src[i];
            }
        }
    }
    for (std::size_t row = 0; row < rows; ++row) {
        const float* h1r = ws.acts.h1.data() + row * d;
        const float* gz1r = ws.g_z1.data() + row * d;
        const float* in = patches.data() + row * p;
        for (std::size_t o = 0; o < d; ++o) {
            const float gh = h1r[o] > 0.0f ? gz1r[o] : 0.0f;
            if (gh == 0.0f) continue;
            grad->enc_b1[o] += gh;
            float* w1row = grad->enc_w1.data() + o * p;
            for (std::size_t i = 0; i < p; ++i) w1row[i] += gh * in[i];
        }
    }
    return loss;
}

std::vector<int> collect_labels(const Dataset& ds) {
    std::vector<int> labels;
    labels.reserve(ds.records.size());
    for (const SignalRecord& rec : ds.records) {
        if (!rec.label.has_value()) throw DataError("dataset record has no label");
        if (*rec.label < 0) throw DataError("dataset record has a negative label");
        labels.push_back(*rec.label);
    }
    return labels;
}

double accuracy_on(const ModelParams<float>& params, const std::vector<Tensor<float>>& cache,
                   const std::vector<std::size_t>& idx, const std::vector<int>& labels,
                   FtWorkspace& ws) {
    std::size_t correct = 0;
    for (const std::size_t i : idx) {
        encode_into(cache[i], params, ws.acts);
        classify_into(ws.acts.z2, params, 0.0, static_cast<Rng*>(nullptr), false, ws.logits,
                      &ws.cache);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < ws.logits.size(); ++j) {
            if (ws.logits[j] > ws.logits[arg]) arg = j;
        }
        if (static_cast<int>(arg) == labels[i]) ++correct;
    }
    return idx.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

FinetuneResult finetune(const ModelParams<float>& trunk, const Dataset& labeled,
                        const HyperConfig& cfg, const TrainConfig& tcfg) {
    cfg.validate();
    tcfg.validate();
    if (labeled.records.empty()) throw ArgumentError("finetune: empty dataset");
    if (!labeled.labeled()) throw DataError("finetune: dataset has no labels");
    if (trunk.hidden_dim() != cfg.hidden_dim || trunk.patch_len() != cfg.patch_len) {
        throw ConfigError("finetune: trunk dimensions do not match the hyperconfig");
    }
    const std::vector<int> labels = collect_labels(labeled);
    std::size_t num_classes = labeled.classes.size();
    for (const int l : labels) {
        num_classes = std::max(num_classes, static_cast<std::size_t>(l) + 1);
    }
    if (num_classes < 2) throw DataError("finetune: need >= 2 classes");

    const std::vector<Tensor<float>> cache = prepare_all(labeled, cfg);
    Rng root(tcfg.seed);

    // Stratified holdout: per class, a seeded shuffle; roughly
    // holdout_fraction of each class (at least one record when the class has
    // two or more).
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    Rng split_rng = root.split(kStreamSplit);
    std::vector<std::size_t> train_idx, hold_idx;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t>& members = by_class[c];
        const std::vector<std::size_t> order = shuffled_indices(members.size(), split_rng.split(c));
        std::size_t n_hold = 0;
        if (members.size() >= 2) {
            n_hold = static_cast<std::size_t>(
                std::llround(tcfg.holdout_fraction * static_cast<double>(members.size())));
            n_hold = std::max<std::size_t>(1, std::min(n_hold, members.size() - 1));
        }
        for (std::size_t j = 0; j < members.size(); ++j) {
            (j < n_hold ? hold_idx : train_idx).push_back(members[order[j]]);
        }
    }
    if (train_idx.empty()) throw DataError("finetune: stratified split left no training records");

    FinetuneResult res;
    res.params = trunk;
    attach_classifier(res.params, cfg.channels, num_classes, root.split(kStreamHead));
    OptimizerState opt = make_optimizer_state(res.params);

    auto tensor_names = res.params.tensors();
    std::vector<std::uint8_t> head_mask, full_mask;
    for (auto nt : tensor_names) {
        const bool is_head = std::strncmp(nt.name, "cls_", 4) == 0;
        head_mask.push_back(is_head ? 1 : 0);
        // recon_w has no gradient path through the classifier; leaving it out
        // of the trainable set is bit-equivalent and skips dead updates.
        full_mask.push_back(std::strcmp(nt.name, "recon_w") == 0 ? 0 : 1);
    }

    std::vector<ModelParams<float>> slots;
    std::vector<FtWorkspace> ws;
    std::vector<double> losses;
    ModelParams<float> grads;
    FtWorkspace eval_ws;
    const std::size_t n_train = train_idx.size();
    for (std::size_t e = 0; e < tcfg.epochs; ++e) {
        const bool head_only =
            tcfg.strategy == Strategy::LP ||
            (tcfg.strategy == Strategy::LP_FN && e < tcfg.lp_epochs);
        const std::vector<std::size_t> order =
            shuffled_indices(n_train, root.split(kStreamShuffle).split(e));
        double epoch_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t at = 0; at < n_train; at += tcfg.batch_size, ++batch_index) {
            const std::size_t take = std::min(tcfg.batch_size, n_train - at);
            while (slots.size() < take) slots.push_back(res.params.zeros_like());
            while (ws.size() < std::max<std::size_t>(tcfg.threads, 1)) ws.emplace_back();
            losses.assign(take, 0.0);
            const Rng drop_base = root.split(kStreamDropout).split(e).split(batch_index);
            run_workers(take, tcfg.threads, [&](std::size_t j, std::size_t worker) {
                zero_params(slots[j]);
                const std::size_t sample = train_idx[order[at + j]];
                Rng drop_rng = drop_base.split(j);
                losses[j] = classify_sample(cache[sample], res.params, labels[sample],
                                            tcfg.dropout, &drop_rng, true, head_only,
                                            &slots[j], ws[worker]);
            });
            grads = res.params.zeros_like();
            const float inv = 1.0f / static_cast<float>(take);
            for (std::size_t j = 0; j < take; ++j) {
                accumulate_params(grads, slots[j], inv);
                epoch_sum += losses[j];
            }
            adam_step(res.params, grads, opt, tcfg.lr, head_only ? &head_mask : &full_mask);
        }
        res.train_loss.push_back(static_cast<float>(epoch_sum / static_cast<double>(n_train)));
        if ((e + 1) % tcfg.eval_every == 0 || e + 1 == tcfg.epochs) {
            const float acc =
                static_cast<float>(accuracy_on(res.params, cache, hold_idx, labels, eval_ws));
            res.eval_epochs.push_back(e + 1);
            res.holdout_accuracy.push_back(acc);
        }
    }
    res.final_accuracy = res.holdout_accuracy.back();
    std::size_t best = 0;
    for (std::size_t i = 1; i < res.holdout_accuracy.size(); ++i) {
        if (res.holdout_accuracy[i] > res.holdout_accuracy[best]) best = i;
    }
    res.best_accuracy = res.holdout_accuracy[best];
    res.best_epoch = res.eval_epochs[best];
    return res;
}

EvalResult evaluate(const ModelParams<float>& params, const Dataset& labeled,
                    const HyperConfig& cfg) {
    cfg.validate();
    if (labeled.records.empty()) throw ArgumentError("evaluate: empty dataset");
    if (!labeled.labeled()) throw DataError("evaluate: dataset has no labels");
    if (!params.has_classifier()) throw ConfigError("evaluate: model has no classification head");
    const std::size_t k = params.num_classes();
    EvalResult res;
    res.num_classes = k;
    res.confusion.assign(k * k, 0);
    FtWorkspace ws;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labeled.records.size(); ++i) {
        const SignalRecord& rec = labeled.records[i];
        const int label = *rec.label;
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw DataError("evaluate: label " + std::to_string(label) +
                            " outside the model's " + std::to_string(k) + " classes");
        }
        const Tensor<float> patches = prepare_patches(rec, cfg);
        encode_into(patches, params, ws.acts);
        classify_into(ws.acts.z2, params, 0.0, static_cast<Rng*>(nullptr), false, ws.logits,
                      &ws.cache);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < ws.logits.size(); ++j) {
            if (ws.logits[j] > ws.logits[arg]) arg = j;
        }
        res.confusion[static_cast<std::size_t>(label) * k + arg] += 1;
        if (arg == static_cast<std::size_t>(label)) ++correct;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(labeled.records.size());
    return res;
}

LrRangeResult lr_range_test(const Dataset& corpus, const HyperConfig& cfg, std::uint64_t seed,
                            double lr_min, double lr_max, std::size_t steps,
                            std::size_t batch_size) {
    cfg.validate();
    if (!(lr_min > 0.0) || !(lr_max > lr_min)) {
        throw ArgumentError("lr_range_test: need 0 < lr_min < lr_max");
    }
    if (steps < 2) throw ArgumentError("lr_range_test: need >= 2 steps");
    if (batch_size < 1) throw ArgumentError("lr_range_test: batch_size must be >= 1");
    if (corpus.records.empty()) throw ArgumentError("lr_range_test: empty dataset");

    const std::vector<Tensor<float>> cache = prepare_all(corpus, cfg);
    const std::size_t n = cache.size();
    Rng root(seed);
    ModelParams<float> params = init_params<float>(cfg, std::nullopt, root.split(kStreamInit));
    OptimizerState opt = make_optimizer_state(params);
    const std::vector<std::size_t> order = shuffled_indices(n, root.split(kStreamShuffle).split(0));

    LrRangeResult res;
    std::vector<ModelParams<float>> slots;
    std::vector<SslWorkspace<float>> ws;
    std::vector<double> losses;
    ModelParams<float> grads;
    const SslOptions ssl_opts;
    const double beta = 0.8;
    double ema = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < steps; ++s) {
        const double frac = static_cast<double>(s) / static_cast<double>(steps - 1);
        const double lr = s + 1 == steps ? lr_max : lr_min * std::pow(lr_max / lr_min, frac);
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < std::min(batch_size, n); ++j) {
            idx.push_back(order[(s * batch_size + j) % n]);
        }
        const double sum = ssl_batch(idx, cache, params, root.split(kStreamMask).split(0).split(s),
                                     ssl_opts, 1, slots, ws, losses, grads);
        const double raw = sum / static_cast<double>(idx.size());
        LrPoint point;
        point.lr = lr;
        point.raw_loss = raw;
        if (!std::isfinite(raw)) {
            point.smooth_loss = raw;
            res.curve.push_back(point);
            res.aborted = true;
            break;
        }
        ema = beta * ema + (1.0 - beta) * raw;
        point.smooth_loss = ema / (1.0 - std::pow(beta, static_cast<double>(s + 1)));
        res.curve.push_back(point);
        if (point.smooth_loss > 4.0 * best) {
            res.aborted = true;
            break;
        }
        best = std::min(best, point.smooth_loss);
        adam_step(params, grads, opt, lr);
    }
    if (res.curve.size() < 2) {
        res.suggestion = res.curve.empty() ? lr_min : res.curve.front().lr;
        return res;
    }
    std::size_t steepest = 1;
    double steepest_delta = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < res.curve.size(); ++i) {
        if (!std::isfinite(res.curve[i].smooth_loss)) break;
        const double delta = res.curve[i].smooth_loss - res.curve[i - 1].smooth_loss;
        if (delta < steepest_delta) {
            steepest_delta = delta;
            steepest = i;
        }
    }
    res.suggestion = std::sqrt(res.curve[steepest - 1].lr * res.curve[steepest].lr);
    return res;
}

namespace {

constexpr char kCkptMagic[4] = {'W', 'F', 'C', 'K'};
constexpr std::uint16_t kCkptVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

json shape_json(const std::vector<std::size_t>& shape) {
    json arr = json::array();
    for (const std::size_t d : shape) arr.push_back(d);
    return arr;
}

struct DirEntry {
    std::string name;
    std::vector<std::size_t> shape;
    const Tensor<float>* tensor;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::vector<DirEntry> dir;
    for (auto nt : ckpt.params.tensors()) {
        dir.push_back({nt.name, nt.tensor->shape(), nt.tensor});
    }
    if (ckpt.has_opt) {
        for (std::size_t i = 0; i < ckpt.opt.names.size(); ++i) {
            dir.push_back({"opt.m." + ckpt.opt.names[i], ckpt.opt.m[i].shape(), &ckpt.opt.m[i]});
            dir.push_back({"opt.v." + ckpt.opt.names[i], ckpt.opt.v[i].shape(), &ckpt.opt.v[i]});
        }
    }

    json header;
    header["hyperconfig"] = {
        {"input_len", ckpt.cfg.input_len},   {"patch_len", ckpt.cfg.patch_len},
        {"stride", ckpt.cfg.stride},         {"channels", ckpt.cfg.channels},
        {"hidden_dim", ckpt.cfg.hidden_dim}, {"mask_ratio", ckpt.cfg.mask_ratio},
    };
    header["rng"] = {{"algorithm", ckpt.rng_algorithm}};
    header["provenance"] = {
        {"seed", ckpt.seed}, {"epoch", ckpt.epoch}, {"loss_digest", ckpt.loss_digest}};
    json opt_json;
    opt_json["present"] = ckpt.has_opt;
    if (ckpt.has_opt) {
        opt_json["beta1"] = ckpt.opt.adam.beta1;
        opt_json["beta2"] = ckpt.opt.adam.beta2;
        opt_json["eps"] = ckpt.opt.adam.eps;
        json steps = json::object();
        for (std::size_t i = 0; i < ckpt.opt.names.size(); ++i) {
            steps[ckpt.opt.names[i]] = ckpt.opt.t[i];
        }
        opt_json["t"] = steps;
    }
    header["optimizer"] = opt_json;

    json tensors = json::array();
    std::size_t offset = 0;
    for (const DirEntry& e : dir) {
        tensors.push_back(
            {{"name", e.name}, {"shape", shape_json(e.shape)}, {"offset", offset}});
        offset += e.tensor->size() * sizeof(float);
    }
    header["tensors"] = tensors;

    const std::string header_text = header.dump();
    std::string blob;
    blob.append(kCkptMagic, 4);
    put_u16(blob, kCkptVersion);
    put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;
    for (const DirEntry& e : dir) {
        blob.append(reinterpret_cast<const char*>(e.tensor->data()),
                    e.tensor->size() * sizeof(float));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open for writing", path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("save_checkpoint: write failed", path);
}

namespace {

std::uint64_t header_u64(const json& j, const char* section, const char* key) {
    if (!j.contains(section) || !j[section].contains(key)) {
        throw FormatError(std::string("checkpoint header missing ") + section + "." + key, 10);
    }
    return j[section][key].get<std::uint64_t>();
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open", path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (blob.size() < 10) throw FormatError("checkpoint truncated before header length", 0);
    if (std::memcmp(blob.data(), kCkptMagic, 4) != 0) {
        throw FormatError("bad checkpoint magic (expected \"WFCK\")", 0);
    }
    const std::uint16_t version = static_cast<std::uint8_t>(blob[4]) |
                                  (static_cast<std::uint16_t>(static_cast<std::uint8_t>(blob[5])) << 8);
    if (version != kCkptVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    std::uint32_t header_len = 0;
    for (int i = 0; i < 4; ++i) {
        header_len |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(blob[6 + i])) << (8 * i);
    }
    if (blob.size() < 10 + static_cast<std::size_t>(header_len)) {
        throw FormatError("checkpoint header length exceeds file size", 6);
    }
    json header;
    try {
        header = json::parse(blob.substr(10, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), 10);
    }

    Checkpoint ckpt;
    ckpt.cfg.input_len = header_u64(header, "hyperconfig", "input_len");
    ckpt.cfg.patch_len = header_u64(header, "hyperconfig", "patch_len");
    ckpt.cfg.stride = header_u64(header, "hyperconfig", "stride");
    ckpt.cfg.channels = header_u64(header, "hyperconfig", "channels");
    ckpt.cfg.hidden_dim = header_u64(header, "hyperconfig", "hidden_dim");
    ckpt.cfg.mask_ratio = header["hyperconfig"].value("mask_ratio", 0.5);
    ckpt.cfg.validate();
    if (!header.contains("rng") || !header["rng"].contains("algorithm")) {
        throw FormatError("checkpoint header missing rng.algorithm", 10);
    }
    ckpt.rng_algorithm = header["rng"]["algorithm"].get<std::string>();
    ckpt.seed = header_u64(header, "provenance", "seed");
    ckpt.epoch = header_u64(header, "provenance", "epoch");
    ckpt.loss_digest = header_u64(header, "provenance", "loss_digest");

    if (!header.contains("tensors") || !header["tensors"].is_array()) {
        throw FormatError("checkpoint header missing tensor directory", 10);
    }
    const std::size_t payload_base = 10 + header_len;
    std::vector<std::pair<std::string, Tensor<float>>> loaded;
    for (const json& entry : header["tensors"]) {
        const std::string name = entry.at("name").get<std::string>();
        std::vector<std::size_t> shape;
        for (const json& d : entry.at("shape")) shape.push_back(d.get<std::size_t>());
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t count = Tensor<float>::product(shape);
        const std::size_t begin = payload_base + offset;
        if (begin + count * sizeof(float) > blob.size()) {
            throw FormatError("checkpoint payload truncated for tensor '" + name + "'", begin);
        }
        Tensor<float> t(shape);
        std::memcpy(t.data(), blob.data() + begin, count * sizeof(float));
        loaded.emplace_back(name, std::move(t));
    }
    auto take = [&](const std::string& name, Tensor<float>& into, bool required) {
        for (auto& [n, t] : loaded) {
            if (n == name) {
                into = t;
                return true;
            }
        }
        if (required) {
            throw FormatError("checkpoint tensor directory lacks '" + name + "'", 10);
        }
        return false;
    };
    take("enc_w1", ckpt.params.enc_w1, true);
    take("enc_b1", ckpt.params.enc_b1, true);
    take("enc_w2", ckpt.params.enc_w2, true);
    take("enc_b2", ckpt.params.enc_b2, true);
    take("recon_w", ckpt.params.recon_w, true);
    Tensor<float> cls_w, cls_b;
    const bool has_w = take("cls_w", cls_w, false);
    const bool has_b = take("cls_b", cls_b, false);
    if (has_w != has_b) {
        throw FormatError("checkpoint has a partial classification head", 10);
    }
    if (has_w) {
        ckpt.params.cls_w = std::move(cls_w);
        ckpt.params.cls_b = std::move(cls_b);
    }
    const std::vector<std::size_t> w1_shape = {ckpt.cfg.hidden_dim, ckpt.cfg.patch_len};
    if (ckpt.params.enc_w1.shape() != w1_shape) {
        throw FormatError("checkpoint enc_w1 shape disagrees with its hyperconfig", 10);
    }

    ckpt.has_opt = header["optimizer"].value("present", false);
    if (ckpt.has_opt) {
        ckpt.opt.adam.beta1 = header["optimizer"].value("beta1", 0.9);
        ckpt.opt.adam.beta2 = header["optimizer"].value("beta2", 0.999);
        ckpt.opt.adam.eps = header["optimizer"].value("eps", 1e-8);
        for (auto nt : ckpt.params.tensors()) {
            ckpt.opt.names.emplace_back(nt.name);
            Tensor<float> m, v;
            take("opt.m." + std::string(nt.name), m, true);
            take("opt.v." + std::string(nt.name), v, true);
            if (!m.same_shape(*nt.tensor) || !v.same_shape(*nt.tensor)) {
                throw FormatError(std::string("checkpoint optimizer moments for '") + nt.name +
                                      "' have the wrong shape",
                                  10);
            }
            ckpt.opt.m.push_back(std::move(m));
            ckpt.opt.v.push_back(std::move(v));
            std::uint64_t t = 0;
            if (header["optimizer"].contains("t") &&
                header["optimizer"]["t"].contains(nt.name)) {
                t = header["optimizer"]["t"][nt.name].get<std::uint64_t>();
            }
            ckpt.opt.t.push_back(t);
        }
    }
    return ckpt;
}

}  // namespace wfm
