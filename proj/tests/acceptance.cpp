// Release gate: nine checks covering parameter accounting, gradient
// correctness, objective properties, data preparation, transfer to an
// unseen class, schedule ordering, convergence, latency, and bit-level
// reproducibility. Each prints one [PASS]/[FAIL] line; the process exits
// nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "wfm/bench.hpp"
#include "wfm/ssl.hpp"
#include "wfm/synth.hpp"
#include "wfm/train.hpp"

using namespace wfm;
namespace fs = std::filesystem;

namespace {

// --- pinned tolerances and limits -------------------------------------------
constexpr double kGradRelTol = 1e-4;       // analytic vs central differences
constexpr double kProbSumTol = 1e-6;       // contrastive probabilities sum to 1
constexpr double kClosedFormTol = 1e-6;    // uniform-embedding level loss vs ln(2N-1)
constexpr double kNormMeanTol = 1e-5;      // per-channel mean after normalization
constexpr double kNormVarTol = 1e-3;       // per-channel variance after normalization
constexpr double kHoldoutAccMin = 0.90;    // transfer experiment, all classes
constexpr double kExcludedRecallMin = 0.85;  // class never seen in pre-training
constexpr double kLossRatioMax = 0.7;      // epoch-20 loss vs epoch-1 loss
constexpr double kLatencyMeanMsMax = 5.0;  // single-sample full pipeline
constexpr double kGradSeconds = 30.0;
constexpr double kObjectiveSeconds = 10.0;
constexpr double kPatchSeconds = 5.0;
constexpr double kTransferSeconds = 600.0;
constexpr double kScheduleSeconds = 600.0;
constexpr double kLatencySeconds = 60.0;
constexpr double kReproSeconds = 900.0;

int g_failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int index, const char* name, bool ok, const std::string& detail, double secs) {
    std::printf("[%s] %d %s: %s (%.1fs)\n", ok ? "PASS" : "FAIL", index, name, detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

template <typename T>
bool bits_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

bool params_equal(const ModelParams<float>& a, const ModelParams<float>& b) {
    auto ta = a.tensors();
    auto tb = b.tensors();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!bits_equal(*ta[i].tensor, *tb[i].tensor)) return false;
    }
    return true;
}

bool trunk_equal(const ModelParams<float>& a, const ModelParams<float>& b) {
    return bits_equal(a.enc_w1, b.enc_w1) && bits_equal(a.enc_b1, b.enc_b1) &&
           bits_equal(a.enc_w2, b.enc_w2) && bits_equal(a.enc_b2, b.enc_b2) &&
           bits_equal(a.recon_w, b.recon_w);
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, ap);
    va_end(ap);
    return std::string(buf);
}

// Shared state across checks 5-7: one transfer experiment feeds three
// criteria.
struct TransferOutcome {
    bool ran = false;
    PretrainResult pretrained;
    FinetuneResult tuned;
    double holdout = 0.0;
    double test_accuracy = 0.0;
    double excluded_recall = 0.0;
    double first_loss = 0.0;
    double last_loss = 0.0;
    HyperConfig cfg;
    Dataset ft_corpus;
};

TransferOutcome g_transfer;

// --- 1: parameter accounting ------------------------------------------------
void check_param_counts() {
    const auto t0 = std::chrono::steady_clock::now();
    HyperConfig cfg;  // defaults: input 4096, patch 128, stride 32, width 64
    const std::size_t base = param_count(cfg);

    HyperConfig narrow = cfg;
    narrow.hidden_dim = 2;
    HyperConfig wide = cfg;
    wide.hidden_dim = 512;

    // independent tally straight from the tensor shapes
    const auto params = init_params<float>(cfg, std::nullopt, Rng(0));
    std::size_t from_tensors = 0;
    for (auto nt : params.tensors()) from_tensors += nt.tensor->size();

    const bool ok = base == 20608 && param_count(narrow) == 520 &&
                    param_count(wide) == 394240 && from_tensors == base;
    report(1, "trunk parameter counts", ok,
           fmt("width 64 -> %zu, width 2 -> %zu, width 512 -> %zu, tensor tally %zu", base,
               param_count(narrow), param_count(wide), from_tensors),
           seconds_since(t0));
}

// --- 2: gradient correctness ------------------------------------------------
void check_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    HyperConfig cfg;
    cfg.input_len = 64;
    cfg.patch_len = 16;
    cfg.stride = 8;
    cfg.channels = 2;
    cfg.hidden_dim = 8;
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GradCheckReport rep = grad_check_report(cfg, seed);
        worst = std::max(worst, rep.max_rel_err);
        checked += rep.checked;
    }
    const double secs = seconds_since(t0);
    const bool ok = worst < kGradRelTol && checked > 0 && secs < kGradSeconds;
    report(2, "analytic vs numeric gradients", ok,
           fmt("10 seeds, %zu coordinates, max relative error %.3g (tol %.0e)", checked, worst,
               kGradRelTol),
           secs);
}

// --- 3: objective properties ------------------------------------------------
void check_objective_properties() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string why;

    // probabilities over the 2N-1 other rows form a distribution
    Rng rng(100);
    double worst_sum_err = 0.0;
    for (int rep = 0; rep < 100 && ok; ++rep) {
        const std::size_t n = 2 + rng.below(6);
        const std::size_t d = 1 + rng.below(5);
        Tensor<double> z({2, 2 * n, d});
        Rng stream = rng.split(rep);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = 1.5 * stream.normal();
        const std::size_t c = rng.below(2);
        const std::size_t a = rng.below(2 * n);
        double sum = 0.0;
        for (std::size_t s = 0; s < 2 * n; ++s) {
            if (s != a) sum += contrastive_probs(z, c, a, s);
        }
        worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));
    }
    if (worst_sum_err >= kProbSumTol) {
        ok = false;
        why = fmt("probability sums drift by %.3g", worst_sum_err);
    }

    // identical embeddings hit the closed form exactly
    double worst_closed = 0.0;
    for (std::size_t half : {2ul, 4ul, 31ul}) {
        Tensor<double> z({2, 2 * half, 3});
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.25;
        worst_closed = std::max(
            worst_closed, std::abs(contrastive_loss_level(z) - std::log(2.0 * half - 1.0)));
    }
    if (ok && worst_closed >= kClosedFormTol) {
        ok = false;
        why = fmt("uniform-embedding loss off closed form by %.3g", worst_closed);
    }

    // reconstruction error is zero exactly when visible targets match
    if (ok) {
        Tensor<double> x({1, 4, 3});
        Rng xs(101);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = xs.normal();
        const MaskPair mask = complementary_masks(4, Rng(102));
        Tensor<double> xh1 = x, xh2 = x;
        if (recon_loss(x, xh1, xh2, mask) != 0.0) {
            ok = false;
            why = "matching reconstructions scored nonzero";
        } else {
            xh1[0] += mask.visible1(0) ? 1.0 : 0.0;
            xh2[0] += mask.visible1(0) ? 0.0 : 1.0;
            if (recon_loss(x, xh1, xh2, mask) <= 0.0) {
                ok = false;
                why = "a visible mismatch scored zero";
            }
        }
    }

    // 1000 complementary pairs partition every patch set
    std::size_t masks_checked = 0;
    if (ok) {
        Rng ms(103);
        for (int i = 0; i < 1000 && ok; ++i) {
            const std::size_t n = 2 + ms.below(199);  // 2..200
            const MaskPair mask = complementary_masks(n, ms.split(i));
            std::size_t vis = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (mask.visible1(j) == mask.visible2(j)) {
                    ok = false;
                    why = "mask views overlap";
                }
                vis += mask.visible1(j) ? 1 : 0;
            }
            if (ok && vis != n / 2) {
                ok = false;
                why = fmt("view 1 holds %zu of %zu patches", vis, n);
            }
            ++masks_checked;
        }
    }

    const double secs = seconds_since(t0);
    if (ok && secs >= kObjectiveSeconds) {
        ok = false;
        why = "over time budget";
    }
    if (ok) {
        why = fmt("100 probability sets (max drift %.2g), closed form within %.2g, "
                  "%zu complementary pairs",
                  worst_sum_err, worst_closed, masks_checked);
    }
    report(3, "objective unit properties", ok, why, secs);
}

// --- 4: patching and normalization ------------------------------------------
void check_patching() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string why;

    HyperConfig cfg;  // defaults: 4096 / 128 / 32

    // brute-force slide as the independent window counter
    std::size_t windows = 0;
    for (std::size_t start = 0; start + cfg.patch_len <= cfg.input_len; start += cfg.stride) {
        ++windows;
    }
    const std::size_t n = cfg.num_patches();
    if (n != 125 || windows != n) {
        ok = false;
        why = fmt("default geometry yields %zu windows (slide count %zu), expected 125", n,
                  windows);
    }

    if (ok) {
        SignalRecord rec;
        rec.samples = Tensor<float>({2, cfg.input_len});
        Rng rs(104);
        for (std::size_t i = 0; i < rec.samples.size(); ++i) {
            rec.samples[i] = static_cast<float>(rs.normal() * 3.0 + 1.0);
        }
        const Tensor<float> patches = prepare_patches(rec, cfg, FitMode::pad_right_zero);
        if (patches.dim(0) != 2 || patches.dim(1) != 125 || patches.dim(2) != cfg.patch_len) {
            ok = false;
            why = "patch tensor has wrong shape " + patches.shape_string();
        }

        // windows must be verbatim slices of the normalized signal
        const SignalRecord norm = instance_normalize(rec);
        for (std::size_t c = 0; ok && c < 2; ++c) {
            double mean = 0.0, var = 0.0;
            for (std::size_t t = 0; t < cfg.input_len; ++t) {
                mean += norm.samples[c * cfg.input_len + t];
            }
            mean /= static_cast<double>(cfg.input_len);
            for (std::size_t t = 0; t < cfg.input_len; ++t) {
                const double d = norm.samples[c * cfg.input_len + t] - mean;
                var += d * d;
            }
            var /= static_cast<double>(cfg.input_len);
            if (std::abs(mean) > kNormMeanTol || std::abs(var - 1.0) > kNormVarTol) {
                ok = false;
                why = fmt("channel %zu normalizes to mean %.2g var %.4f", c, mean, var);
            }
            for (std::size_t w = 0; ok && w < 125; ++w) {
                const float* want = norm.samples.data() + c * cfg.input_len + w * cfg.stride;
                const float* got = patches.data() + (c * 125 + w) * cfg.patch_len;
                if (std::memcmp(want, got, cfg.patch_len * sizeof(float)) != 0) {
                    ok = false;
                    why = fmt("window %zu of channel %zu is not a verbatim slice", w, c);
                }
            }
        }

        // short records pad with zeros on the right, original samples intact
        if (ok) {
            SignalRecord shorter;
            shorter.samples = Tensor<float>({2, 1000});
            for (std::size_t i = 0; i < shorter.samples.size(); ++i) {
                shorter.samples[i] = static_cast<float>(rs.normal());
            }
            const SignalRecord fitted = fit_length(shorter, 1024, FitMode::pad_right_zero);
            for (std::size_t c = 0; ok && c < 2; ++c) {
                if (std::memcmp(fitted.samples.data() + c * 1024,
                                shorter.samples.data() + c * 1000, 1000 * sizeof(float)) != 0) {
                    ok = false;
                    why = "padding disturbed the original samples";
                }
                for (std::size_t t = 1000; ok && t < 1024; ++t) {
                    if (fitted.samples[c * 1024 + t] != 0.0f) {
                        ok = false;
                        why = "pad region is not zero";
                    }
                }
            }
        }
    }

    const double secs = seconds_since(t0);
    if (ok && secs >= kPatchSeconds) {
        ok = false;
        why = "over time budget";
    }
    if (ok) why = "125 windows, verbatim slices, unit-variance channels, clean padding";
    report(4, "patching and normalization", ok, why, secs);
}

// --- 5: transfer to a class absent from pre-training ------------------------
void check_transfer() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string why;
    const fs::path dir_pre = fs::temp_directory_path() / "wfm_accept_pre";
    const fs::path dir_ft = fs::temp_directory_path() / "wfm_accept_ft";
    try {
        HyperConfig cfg;
        cfg.input_len = 1024;
        cfg.patch_len = 64;
        cfg.stride = 32;
        cfg.channels = 2;
        cfg.hidden_dim = 32;

        SynthSpec spec;
        spec.kinds = {SynthKind::tone, SynthKind::bpsk, SynthKind::qpsk, SynthKind::chirp};
        spec.excluded_from_pretrain = {SynthKind::chirp};
        spec.per_class = 500;
        spec.length = 1024;
        spec.snr_db = 10.0;
        spec.seed = 7;
        const CorpusPaths big = gen_corpus(spec, dir_pre.string());
        SynthSpec small = spec;
        small.per_class = 200;
        const CorpusPaths tasks = gen_corpus(small, dir_ft.string());

        const Dataset pre = load_dataset(big.pretrain);
        const Dataset ft = load_dataset(tasks.finetune);
        const Dataset te = load_dataset(tasks.test);

        TrainConfig ptc;
        ptc.epochs = 20;
        ptc.batch_size = 64;
        ptc.lr = 1e-3;
        ptc.seed = 1;
        const PretrainResult pr = pretrain(pre, cfg, ptc);

        TrainConfig ftc;
        ftc.epochs = 60;
        ftc.lp_epochs = 10;
        ftc.strategy = Strategy::LP_FN;
        ftc.batch_size = 64;
        ftc.lr = 7e-4;
        ftc.seed = 1;
        ftc.dropout = 0.2;
        ftc.eval_every = 5;
        const FinetuneResult fr = finetune(pr.params, ft, cfg, ftc);
        const EvalResult ev = evaluate(fr.params, te, cfg);

        // recall of the class pre-training never saw
        std::size_t excluded_label = 0;
        for (std::size_t i = 0; i < ft.classes.size(); ++i) {
            if (ft.classes[i] == "chirp") excluded_label = i;
        }
        std::size_t row_total = 0;
        for (std::size_t j = 0; j < ev.num_classes; ++j) {
            row_total += ev.confusion[excluded_label * ev.num_classes + j];
        }
        const double excluded_recall =
            row_total ? static_cast<double>(
                            ev.confusion[excluded_label * ev.num_classes + excluded_label]) /
                            static_cast<double>(row_total)
                      : 0.0;

        g_transfer.ran = true;
        g_transfer.pretrained = pr;
        g_transfer.tuned = fr;
        g_transfer.holdout = fr.final_accuracy;
        g_transfer.test_accuracy = ev.accuracy;
        g_transfer.excluded_recall = excluded_recall;
        g_transfer.first_loss = pr.loss_curve.front();
        g_transfer.last_loss = pr.loss_curve.back();
        g_transfer.cfg = cfg;
        g_transfer.ft_corpus = ft;

        ok = fr.final_accuracy >= kHoldoutAccMin && excluded_recall >= kExcludedRecallMin;
        why = fmt("holdout %.4f (min %.2f), test %.4f, held-out-class recall %.4f (min %.2f)",
                  fr.final_accuracy, kHoldoutAccMin, ev.accuracy, excluded_recall,
                  kExcludedRecallMin);
    } catch (const std::exception& e) {
        ok = false;
        why = std::string("exception: ") + e.what();
    }
    fs::remove_all(dir_pre);
    fs::remove_all(dir_ft);
    const double secs = seconds_since(t0);
    if (ok && secs >= kTransferSeconds) {
        ok = false;
        why += " but over time budget";
    }
    report(5, "transfer to a class unseen in pre-training", ok, why, secs);
}

// --- 6: probe-then-tune at least matches pure probing ------------------------
void check_schedule_ordering() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string why = "transfer experiment unavailable";
    if (g_transfer.ran) {
        try {
            TrainConfig lpc;
            lpc.epochs = 60;
            lpc.strategy = Strategy::LP;
            lpc.batch_size = 64;
            lpc.lr = 7e-4;
            lpc.seed = 1;
            lpc.dropout = 0.2;
            lpc.eval_every = 5;
            const FinetuneResult lp =
                finetune(g_transfer.pretrained.params, g_transfer.ft_corpus, g_transfer.cfg, lpc);
            const bool frozen = trunk_equal(lp.params, g_transfer.pretrained.params);
            ok = frozen && g_transfer.tuned.final_accuracy >= lp.final_accuracy;
            why = fmt("probe-then-tune %.4f vs probe %.4f, probe trunk %s",
                      g_transfer.tuned.final_accuracy, lp.final_accuracy,
                      frozen ? "bit-identical" : "MODIFIED");
        } catch (const std::exception& e) {
            ok = false;
            why = std::string("exception: ") + e.what();
        }
    }
    const double secs = seconds_since(t0);
    if (ok && secs >= kScheduleSeconds) {
        ok = false;
        why += " but over time budget";
    }
    report(6, "probe-then-tune at least matches probing", ok, why, secs);
}

// --- 7: pre-training converges ------------------------------------------------
void check_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string why = "transfer experiment unavailable";
    if (g_transfer.ran && g_transfer.first_loss > 0.0) {
        const double ratio = g_transfer.last_loss / g_transfer.first_loss;
        ok = ratio < kLossRatioMax;
        why = fmt("epoch-1 loss %.4f, epoch-20 loss %.4f, ratio %.3f (max %.1f)",
                  g_transfer.first_loss, g_transfer.last_loss, ratio, kLossRatioMax);
    }
    report(7, "pre-training convergence", ok, why, seconds_since(t0));
}

// --- 8: single-sample latency -------------------------------------------------
void check_latency() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string why;
    try {
        HyperConfig cfg;  // default deployment geometry
        const auto params = init_params<float>(cfg, 4, Rng(0));
        const BenchReport rep = bench_inference(params, cfg, 10, 5000, 1, 0);
        ok = rep.warmup_iters == 10 && rep.measured_iters == 5000 &&
             rep.full.mean_ms < kLatencyMeanMsMax;
        why = fmt("%zu warmup + %zu timed, full mean %.3fms p50 %.3fms p95 %.3fms (max %.1fms)",
                  rep.warmup_iters, rep.measured_iters, rep.full.mean_ms, rep.full.p50_ms,
                  rep.full.p95_ms, kLatencyMeanMsMax);
        if (rep.clock_warning) why += " [coarse clock]";
    } catch (const std::exception& e) {
        ok = false;
        why = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (ok && secs >= kLatencySeconds) {
        ok = false;
        why += " but over time budget";
    }
    report(8, "single-sample inference latency", ok, why, secs);
}

// --- 9: determinism and persistence -------------------------------------------
void check_reproducibility() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string why;
    const fs::path dir = fs::temp_directory_path() / "wfm_accept_repro";
    try {
        fs::remove_all(dir);

        HyperConfig cfg;
        cfg.input_len = 256;
        cfg.patch_len = 64;
        cfg.stride = 32;
        cfg.channels = 2;
        cfg.hidden_dim = 16;

        SynthSpec spec;
        spec.per_class = 30;
        spec.length = 256;
        spec.seed = 11;
        const CorpusPaths paths = gen_corpus(spec, dir.string());
        const Dataset pre = load_dataset(paths.pretrain);
        const Dataset ft = load_dataset(paths.finetune);
        const Dataset te = load_dataset(paths.test);

        // one full pipeline, twice, at different thread counts
        auto pipeline = [&](std::size_t threads, const std::string& tag) {
            TrainConfig ptc;
            ptc.epochs = 4;
            ptc.batch_size = 16;
            ptc.lr = 1e-3;
            ptc.seed = 21;
            ptc.threads = threads;
            const PretrainResult pr = pretrain(pre, cfg, ptc);

            Checkpoint ckpt;
            ckpt.cfg = cfg;
            ckpt.params = pr.params;
            ckpt.has_opt = true;
            ckpt.opt = pr.opt;
            ckpt.seed = ptc.seed;
            ckpt.epoch = ptc.epochs;
            ckpt.loss_digest = pr.loss_digest;
            const std::string ckpt_path = (dir / (tag + ".wfck")).string();
            save_checkpoint(ckpt, ckpt_path);

            TrainConfig ftc;
            ftc.epochs = 6;
            ftc.lp_epochs = 2;
            ftc.strategy = Strategy::LP_FN;
            ftc.batch_size = 16;
            ftc.lr = 1e-3;
            ftc.seed = 21;
            ftc.threads = threads;
            const FinetuneResult fr = finetune(pr.params, ft, cfg, ftc);
            const EvalResult ev = evaluate(fr.params, te, cfg);
            return std::tuple<PretrainResult, FinetuneResult, EvalResult, std::string>(
                pr, fr, ev, ckpt_path);
        };

        const auto [pr_a, fr_a, ev_a, path_a] = pipeline(1, "a");
        const auto [pr_b, fr_b, ev_b, path_b] = pipeline(3, "b");

        if (read_bytes(path_a) != read_bytes(path_b)) {
            ok = false;
            why = "checkpoint files differ between runs";
        } else if (pr_a.loss_curve != pr_b.loss_curve || pr_a.loss_digest != pr_b.loss_digest) {
            ok = false;
            why = "pre-training metrics differ between runs";
        } else if (fr_a.train_loss != fr_b.train_loss ||
                   fr_a.holdout_accuracy != fr_b.holdout_accuracy) {
            ok = false;
            why = "fine-tuning metrics differ between runs";
        } else if (ev_a.accuracy != ev_b.accuracy || ev_a.confusion != ev_b.confusion) {
            ok = false;
            why = "evaluation differs between runs";
        }

        // round trip preserves every bit
        if (ok) {
            const Checkpoint back = load_checkpoint(path_a);
            if (!params_equal(back.params, pr_a.params)) {
                ok = false;
                why = "checkpoint round trip changed parameter bits";
            } else if (back.opt.t != pr_a.opt.t) {
                ok = false;
                why = "checkpoint round trip changed optimizer step counts";
            } else {
                for (std::size_t i = 0; ok && i < pr_a.opt.m.size(); ++i) {
                    if (!bits_equal(back.opt.m[i], pr_a.opt.m[i]) ||
                        !bits_equal(back.opt.v[i], pr_a.opt.v[i])) {
                        ok = false;
                        why = "checkpoint round trip changed optimizer moments";
                    }
                }
            }
        }

        // resuming from epoch 2 matches the straight 4-epoch run exactly
        if (ok) {
            TrainConfig half;
            half.epochs = 2;
            half.batch_size = 16;
            half.lr = 1e-3;
            half.seed = 21;
            const PretrainResult first = pretrain(pre, cfg, half);
            Checkpoint mid;
            mid.cfg = cfg;
            mid.params = first.params;
            mid.has_opt = true;
            mid.opt = first.opt;
            mid.seed = half.seed;
            mid.epoch = 2;
            mid.loss_digest = first.loss_digest;
            TrainConfig full = half;
            full.epochs = 4;
            const PretrainResult rest = pretrain(pre, cfg, full, &mid);
            if (!params_equal(rest.params, pr_a.params) ||
                rest.loss_digest != pr_a.loss_digest ||
                rest.loss_curve.size() != 2 || rest.loss_curve[0] != pr_a.loss_curve[2] ||
                rest.loss_curve[1] != pr_a.loss_curve[3]) {
                ok = false;
                why = "resumed run diverged from the uninterrupted one";
            }
        }

        if (ok) {
            why = fmt("thread counts 1 and 3 agree bit-for-bit; round trip and resume exact "
                      "(pipeline loss %.4f -> %.4f, eval %.3f)",
                      pr_a.loss_curve.front(), pr_a.loss_curve.back(), ev_a.accuracy);
        }
    } catch (const std::exception& e) {
        ok = false;
        why = std::string("exception: ") + e.what();
    }
    fs::remove_all(dir);
    const double secs = seconds_since(t0);
    if (ok && secs >= kReproSeconds) {
        ok = false;
        why += " but over time budget";
    }
    report(9, "determinism and persistence", ok, why, secs);
}

}  // namespace

int main() {
    std::printf("release gate: 9 checks\n");
    check_param_counts();
    check_gradients();
    check_objective_properties();
    check_patching();
    check_transfer();
    check_schedule_ordering();
    check_convergence();
    check_latency();
    check_reproducibility();
    if (g_failures == 0) {
        std::printf("all checks passed\n");
        return 0;
    }
    std::printf("%d check(s) failed\n", g_failures);
    return 1;
}
