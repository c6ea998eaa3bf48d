#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wfm/bench.hpp"
#include "wfm/data.hpp"
#include "wfm/model.hpp"
#include "wfm/synth.hpp"
#include "wfm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flat merged view of hyperparameters, training knobs, and run-level paths.
// Precedence: command-line flag > config file > built-in default.
struct RunConfig {
    wfm::HyperConfig hyper;
    wfm::TrainConfig train;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out_dir = "out";
    std::string strategy = "lp_fn";
};

const std::vector<std::string> kConfigKeys = {
    "input_len",  "patch_len",  "stride",     "channels",   "hidden_dim",
    "mask_ratio", "epochs",     "batch_size", "lr",         "strategy",
    "lp_epochs",  "eval_every", "dropout",    "holdout_fraction",
    "seed",       "threads",    "out_dir",
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    std::ifstream in(path);
    if (!in) throw wfm::IoError("cannot open config file", path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw wfm::FormatError(std::string("config file is not valid JSON: ") + e.what(), 0);
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
            throw wfm::ConfigError("config file has unknown key '" + key + "'");
        }
    }
    rc.hyper.input_len = j.value("input_len", rc.hyper.input_len);
    rc.hyper.patch_len = j.value("patch_len", rc.hyper.patch_len);
    rc.hyper.stride = j.value("stride", rc.hyper.stride);
    rc.hyper.channels = j.value("channels", rc.hyper.channels);
    rc.hyper.hidden_dim = j.value("hidden_dim", rc.hyper.hidden_dim);
    rc.hyper.mask_ratio = j.value("mask_ratio", rc.hyper.mask_ratio);
    rc.train.epochs = j.value("epochs", rc.train.epochs);
    rc.train.batch_size = j.value("batch_size", rc.train.batch_size);
    rc.train.lr = j.value("lr", rc.train.lr);
    rc.strategy = j.value("strategy", rc.strategy);
    rc.train.lp_epochs = j.value("lp_epochs", rc.train.lp_epochs);
    rc.train.eval_every = j.value("eval_every", rc.train.eval_every);
    rc.train.dropout = j.value("dropout", rc.train.dropout);
    rc.train.holdout_fraction = j.value("holdout_fraction", rc.train.holdout_fraction);
    rc.seed = j.value("seed", rc.seed);
    rc.threads = j.value("threads", rc.threads);
    rc.out_dir = j.value("out_dir", rc.out_dir);
    return rc;
}

json run_config_json(const RunConfig& rc) {
    json j;
    j["input_len"] = rc.hyper.input_len;
    j["patch_len"] = rc.hyper.patch_len;
    j["stride"] = rc.hyper.stride;
    j["channels"] = rc.hyper.channels;
    j["hidden_dim"] = rc.hyper.hidden_dim;
    j["mask_ratio"] = rc.hyper.mask_ratio;
    j["epochs"] = rc.train.epochs;
    j["batch_size"] = rc.train.batch_size;
    j["lr"] = rc.train.lr;
    j["strategy"] = rc.strategy;
    j["lp_epochs"] = rc.train.lp_epochs;
    j["eval_every"] = rc.train.eval_every;
    j["dropout"] = rc.train.dropout;
    j["holdout_fraction"] = rc.train.holdout_fraction;
    j["seed"] = rc.seed;
    j["threads"] = rc.threads;
    j["out_dir"] = rc.out_dir;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw wfm::IoError("cannot open for writing", path);
    out << text;
    if (!out) throw wfm::IoError("write failed", path);
}

// Echo the fully merged config into the output directory before any work.
void prepare_out_dir(const RunConfig& rc) {
    std::error_code ec;
    fs::create_directories(rc.out_dir, ec);
    if (ec) throw wfm::IoError("cannot create output directory", rc.out_dir);
    write_text((fs::path(rc.out_dir) / "effective_config.json").string(),
               run_config_json(rc).dump(2) + "\n");
}

std::string grouped(std::size_t n) {
    std::string digits = std::to_string(n);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i && (digits.size() - i) % 3 == 0) out.push_back(',');
        out.push_back(digits[i]);
    }
    return out;
}

std::vector<wfm::SynthKind> parse_kinds(const std::string& csv) {
    std::vector<wfm::SynthKind> kinds;
    std::string item;
    std::istringstream ss(csv);
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) kinds.push_back(wfm::synth_kind_from_name(item));
    }
    return kinds;
}

wfm::TrainConfig train_config_from(const RunConfig& rc) {
    wfm::TrainConfig t = rc.train;
    t.seed = rc.seed;
    t.threads = rc.threads;
    t.strategy = wfm::strategy_from_name(rc.strategy);
    return t;
}

void save_params_checkpoint(const wfm::ModelParams<float>& params,
                            const wfm::OptimizerState& opt, bool has_opt,
                            const wfm::HyperConfig& cfg, std::uint64_t seed, std::size_t epoch,
                            std::uint64_t loss_digest, const std::string& path) {
    wfm::Checkpoint ckpt;
    ckpt.cfg = cfg;
    ckpt.params = params;
    ckpt.has_opt = has_opt;
    if (has_opt) ckpt.opt = opt;
    ckpt.seed = seed;
    ckpt.epoch = epoch;
    ckpt.loss_digest = loss_digest;
    wfm::save_checkpoint(ckpt, path);
}

int cmd_gen(const RunConfig& rc, const std::string& kinds_csv, const std::string& exclude_csv,
            std::size_t per_class, double snr_db, std::size_t length) {
    wfm::SynthSpec spec;
    if (!kinds_csv.empty()) spec.kinds = parse_kinds(kinds_csv);
    spec.excluded_from_pretrain = parse_kinds(exclude_csv);
    spec.per_class = per_class;
    spec.snr_db = snr_db;
    spec.length = length;
    spec.seed = rc.seed;
    spec.validate();
    prepare_out_dir(rc);
    const wfm::CorpusPaths paths = wfm::gen_corpus(spec, rc.out_dir);
    std::printf("pretrain: %s\nfinetune: %s\ntest: %s\n", paths.pretrain.c_str(),
                paths.finetune.c_str(), paths.test.c_str());
    return 0;
}

int cmd_pretrain(const RunConfig& rc, const std::string& data_path,
                 const std::string& resume_path) {
    rc.hyper.validate();
    const wfm::TrainConfig tcfg = train_config_from(rc);
    prepare_out_dir(rc);
    const wfm::Dataset corpus = wfm::load_dataset(data_path);
    std::optional<wfm::Checkpoint> resume;
    std::size_t first_epoch = 0;
    if (!resume_path.empty()) {
        resume = wfm::load_checkpoint(resume_path);
        first_epoch = resume->epoch;
    }
    const wfm::PretrainResult res =
        wfm::pretrain(corpus, rc.hyper, tcfg, resume ? &*resume : nullptr);
    std::string metrics;
    for (std::size_t i = 0; i < res.loss_curve.size(); ++i) {
        json line;
        line["epoch"] = first_epoch + i + 1;  // 1-based: the n-th completed epoch
        line["loss"] = res.loss_curve[i];
        metrics += line.dump() + "\n";
    }
    write_text((fs::path(rc.out_dir) / "pretrain_metrics.jsonl").string(), metrics);
    const std::string ckpt_path = (fs::path(rc.out_dir) / "pretrain.wfck").string();
    save_params_checkpoint(res.params, res.opt, true, rc.hyper, rc.seed, tcfg.epochs,
                           res.loss_digest, ckpt_path);
    std::printf("checkpoint: %s\n", ckpt_path.c_str());
    if (!res.loss_curve.empty()) {
        std::printf("epochs this run: %zu  first loss: %.6f  last loss: %.6f\n",
                    res.loss_curve.size(), res.loss_curve.front(), res.loss_curve.back());
    }
    return 0;
}

int cmd_finetune(const RunConfig& rc, const std::string& data_path,
                 const std::string& trunk_path) {
    const wfm::TrainConfig tcfg = train_config_from(rc);
    tcfg.validate();
    const wfm::Checkpoint trunk = wfm::load_checkpoint(trunk_path);
    RunConfig effective = rc;
    effective.hyper = trunk.cfg;  // the trunk's geometry is authoritative
    prepare_out_dir(effective);
    const wfm::Dataset labeled = wfm::load_dataset(data_path);
    const wfm::FinetuneResult res = wfm::finetune(trunk.params, labeled, trunk.cfg, tcfg);

    std::string metrics;
    std::size_t eval_at = 0;
    for (std::size_t e = 0; e < res.train_loss.size(); ++e) {
        json line;
        line["epoch"] = e + 1;  // 1-based, matching eval_epochs
        line["loss"] = res.train_loss[e];
        if (eval_at < res.eval_epochs.size() && res.eval_epochs[eval_at] == e + 1) {
            line["accuracy"] = res.holdout_accuracy[eval_at];
            ++eval_at;
        }
        metrics += line.dump() + "\n";
    }
    json summary;
    summary["final_accuracy"] = res.final_accuracy;
    summary["best_accuracy"] = res.best_accuracy;
    summary["best_epoch"] = res.best_epoch;
    metrics += summary.dump() + "\n";
    write_text((fs::path(rc.out_dir) / "finetune_metrics.jsonl").string(), metrics);

    const std::string ckpt_path = (fs::path(rc.out_dir) / "finetune.wfck").string();
    save_params_checkpoint(res.params, wfm::OptimizerState{}, false, trunk.cfg, rc.seed,
                           tcfg.epochs, 0, ckpt_path);
    std::printf("checkpoint: %s\n", ckpt_path.c_str());
    std::printf("final_accuracy=%.4f best_accuracy=%.4f best_epoch=%zu\n",
                res.final_accuracy, res.best_accuracy, res.best_epoch);
    return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& data_path, const std::string& ckpt_path) {
    const wfm::Checkpoint ckpt = wfm::load_checkpoint(ckpt_path);
    const wfm::Dataset labeled = wfm::load_dataset(data_path);
    const wfm::EvalResult res = wfm::evaluate(ckpt.params, labeled, ckpt.cfg);
    RunConfig effective = rc;
    effective.hyper = ckpt.cfg;
    prepare_out_dir(effective);

    json out;
    out["accuracy"] = res.accuracy;
    out["num_classes"] = res.num_classes;
    json rows = json::array();
    for (std::size_t r = 0; r < res.num_classes; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < res.num_classes; ++c) {
            row.push_back(res.confusion[r * res.num_classes + c]);
        }
        rows.push_back(row);
    }
    out["confusion"] = rows;
    write_text((fs::path(rc.out_dir) / "eval.json").string(), out.dump(2) + "\n");

    std::printf("accuracy=%.4f over %zu records\n", res.accuracy, labeled.size());
    std::printf("confusion (row = true class, col = predicted):\n");
    for (std::size_t r = 0; r < res.num_classes; ++r) {
        std::printf("  ");
        for (std::size_t c = 0; c < res.num_classes; ++c) {
            std::printf("%6zu", res.confusion[r * res.num_classes + c]);
        }
        std::printf("\n");
    }
    return 0;
}

int cmd_lr_find(const RunConfig& rc, const std::string& data_path, double lr_min, double lr_max,
                std::size_t steps) {
    rc.hyper.validate();
    prepare_out_dir(rc);
    const wfm::Dataset corpus = wfm::load_dataset(data_path);
    const wfm::LrRangeResult res = wfm::lr_range_test(corpus, rc.hyper, rc.seed, lr_min, lr_max,
                                                      steps, rc.train.batch_size);
    std::string csv = "lr,raw_loss,smooth_loss\n";
    for (const wfm::LrPoint& p : res.curve) {
        char line[128];
        std::snprintf(line, sizeof(line), "%.8g,%.8g,%.8g\n", p.lr, p.raw_loss, p.smooth_loss);
        csv += line;
    }
    write_text((fs::path(rc.out_dir) / "lr_curve.csv").string(), csv);
    std::printf("steps run: %zu%s\n", res.curve.size(), res.aborted ? " (aborted on divergence)" : "");
    std::printf("suggested_lr=%.8g\n", res.suggestion);
    return 0;
}

int cmd_bench(const RunConfig& rc, const std::string& ckpt_path, std::size_t warmup,
              std::size_t iters, std::size_t batch) {
    wfm::ModelParams<float> params;
    wfm::HyperConfig cfg = rc.hyper;
    if (!ckpt_path.empty()) {
        const wfm::Checkpoint ckpt = wfm::load_checkpoint(ckpt_path);
        params = ckpt.params;
        cfg = ckpt.cfg;
    } else {
        cfg.validate();
        params = wfm::init_params<float>(cfg, std::nullopt, wfm::Rng(rc.seed).split(1));
    }
    RunConfig effective = rc;
    effective.hyper = cfg;
    prepare_out_dir(effective);
    const wfm::BenchReport report = wfm::bench_inference(params, cfg, warmup, iters, batch, rc.seed);
    write_text((fs::path(rc.out_dir) / "bench.json").string(), report.to_json() + "\n");
    if (report.clock_warning) {
        std::fprintf(stderr, "warning: monotonic clock resolution coarser than 10 us\n");
    }
    std::printf("mean=%.3fms p50=%.3fms p95=%.3fms n=%zu warmup=%zu\n", report.full.mean_ms,
                report.full.p50_ms, report.full.p95_ms, report.measured_iters,
                report.warmup_iters);
    return 0;
}

int sweep_param_counts(const RunConfig& rc) {
    std::printf("hidden_dim,trunk_params\n");
    for (std::size_t d = 2; d <= 512; d *= 2) {
        wfm::HyperConfig cfg = rc.hyper;
        cfg.hidden_dim = d;
        std::printf("%zu,%zu\n", d, wfm::param_count(cfg));
    }
    return 0;
}

int cmd_inspect(const RunConfig& rc, const std::string& path, bool sweep) {
    if (sweep) return sweep_param_counts(rc);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw wfm::IoError("cannot open", path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    in.close();
    if (std::memcmp(magic, "WFCK", 4) == 0) {
        const wfm::Checkpoint ckpt = wfm::load_checkpoint(path);
        std::printf("checkpoint: %s\n", path.c_str());
        std::printf("hyperconfig: input_len=%zu patch_len=%zu stride=%zu channels=%zu "
                    "hidden_dim=%zu mask_ratio=%g\n",
                    ckpt.cfg.input_len, ckpt.cfg.patch_len, ckpt.cfg.stride, ckpt.cfg.channels,
                    ckpt.cfg.hidden_dim, ckpt.cfg.mask_ratio);
        std::printf("rng: %s\nseed: %llu\nepochs completed: %zu\n", ckpt.rng_algorithm.c_str(),
                    static_cast<unsigned long long>(ckpt.seed), ckpt.epoch);
        std::printf("optimizer state: %s\n", ckpt.has_opt ? "present" : "absent");
        for (auto nt : ckpt.params.tensors()) {
            std::printf("  %-8s %s\n", nt.name, nt.tensor->shape_string().c_str());
        }
        std::printf("trunk params: %s\n", grouped(wfm::param_count(ckpt.cfg)).c_str());
        if (ckpt.params.has_classifier()) {
            const std::size_t head = ckpt.params.cls_w.size() + ckpt.params.cls_b.size();
            std::printf("classifier: %zu classes (+%s params)\n", ckpt.params.num_classes(),
                        grouped(head).c_str());
        }
        return 0;
    }
    if (std::memcmp(magic, "WFDS", 4) == 0) {
        const wfm::Dataset ds = wfm::load_dataset(path);
        std::printf("dataset: %s\n", path.c_str());
        std::printf("records: %zu  channels: %zu  length: %zu\n", ds.size(),
                    ds.size() ? ds.records.front().channels() : 0,
                    ds.size() ? ds.records.front().length() : 0);
        std::string classes;
        for (std::size_t i = 0; i < ds.classes.size(); ++i) {
            classes += (i ? ", " : "") + ds.classes[i];
        }
        std::printf("classes: %s\n", classes.empty() ? "(none)" : classes.c_str());
        std::printf("labeled: %s\n", ds.labeled() ? "yes" : "no");
        if (!ds.scenario_json.empty()) std::printf("scenario: %s\n", ds.scenario_json.c_str());
        return 0;
    }
    throw wfm::FormatError("unrecognized file magic (expected WFCK or WFDS)", 0);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wireless foundation model trainer: self-supervised pre-training, "
                 "fine-tuning, evaluation, and benchmarking for I/Q signal classification"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string out_dir;
    app.add_option("--config", config_path, "JSON config file; flags override its values");
    app.add_option("--seed", seed, "Root seed for every random draw");
    app.add_option("--threads", threads, "Worker threads (results are thread-count independent)");
    app.add_option("--out", out_dir, "Output directory");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate synthetic pre-train/fine-tune/test datasets");
    gen->fallthrough();
    std::string kinds_csv, exclude_csv;
    std::size_t per_class = 100, length = 1024;
    double snr_db = 10.0;
    gen->add_option("--kinds", kinds_csv,
                    "Comma-separated kinds (tone,bpsk,qpsk,chirp,cir_decay,noise)");
    gen->add_option("--exclude", exclude_csv, "Kinds excluded from the pre-train corpus");
    gen->add_option("--per-class", per_class, "Records per kind per dataset");
    gen->add_option("--snr", snr_db, "Signal-to-noise ratio in dB");
    gen->add_option("--length", length, "Samples per record");

    // shared training flags
    std::string data_path, trunk_path, resume_path, ckpt_path, strategy_flag;
    std::size_t epochs = 0, batch_size = 0, lp_epochs = 0, eval_every = 0;
    double lr = 0.0, dropout = -1.0, holdout = 0.0;
    std::size_t input_len = 0, patch_len = 0, stride = 0, channels = 0, hidden_dim = 0;
    double mask_ratio = -1.0;
    auto add_hyper_flags = [&](CLI::App* sub) {
        sub->add_option("--input-len", input_len, "Model input length in samples");
        sub->add_option("--patch-len", patch_len, "Patch length");
        sub->add_option("--stride", stride, "Patch stride");
        sub->add_option("--channels", channels, "Input channels");
        sub->add_option("--hidden-dim", hidden_dim, "Encoder width D");
        sub->add_option("--mask-ratio", mask_ratio, "Masked fraction of patches");
    };

    auto* pre = app.add_subcommand("pretrain", "Self-supervised pre-training");
    pre->fallthrough();
    pre->add_option("--data", data_path, "Unlabeled dataset file")->required();
    pre->add_option("--epochs", epochs, "Training epochs");
    pre->add_option("--batch-size", batch_size, "Mini-batch size");
    pre->add_option("--lr", lr, "Adam learning rate");
    pre->add_option("--resume", resume_path, "Checkpoint to continue from");
    add_hyper_flags(pre);

    auto* fin = app.add_subcommand("finetune", "Supervised fine-tuning of a pre-trained trunk");
    fin->fallthrough();
    fin->add_option("--data", data_path, "Labeled dataset file")->required();
    fin->add_option("--trunk", trunk_path, "Pre-trained checkpoint")->required();
    fin->add_option("--strategy", strategy_flag, "lp, fn, or lp-fn");
    fin->add_option("--task-lr,--lr", lr, "Adam learning rate for this task");
    fin->add_option("--epochs", epochs, "Training epochs");
    fin->add_option("--lp-epochs", lp_epochs, "Probing epochs before full fine-tune (lp-fn)");
    fin->add_option("--batch-size", batch_size, "Mini-batch size");
    fin->add_option("--eval-every", eval_every, "Holdout evaluation period in epochs");
    fin->add_option("--dropout", dropout, "Dropout on pooled features during training");
    fin->add_option("--holdout", holdout, "Held-out fraction per class");

    auto* ev = app.add_subcommand("eval", "Evaluate a fine-tuned checkpoint on a labeled dataset");
    ev->fallthrough();
    ev->add_option("--data", data_path, "Labeled dataset file")->required();
    ev->add_option("--checkpoint", ckpt_path, "Fine-tuned checkpoint")->required();

    auto* lrf = app.add_subcommand("lr-find", "Learning-rate range test on the pre-train objective");
    lrf->fallthrough();
    double lr_min = 1e-5, lr_max = 1.0;
    std::size_t lr_steps = 40;
    lrf->add_option("--data", data_path, "Unlabeled dataset file")->required();
    lrf->add_option("--lr-min", lr_min, "Lower end of the sweep");
    lrf->add_option("--lr-max", lr_max, "Upper end of the sweep");
    lrf->add_option("--steps", lr_steps, "Sweep steps");
    lrf->add_option("--batch-size", batch_size, "Mini-batch size");
    add_hyper_flags(lrf);

    auto* ben = app.add_subcommand("bench", "Inference latency benchmark");
    ben->fallthrough();
    std::size_t warmup = 10, iters = 5000, bench_batch = 1;
    ben->add_option("--checkpoint", ckpt_path, "Checkpoint to measure (fresh model when absent)");
    ben->add_option("--warmup", warmup, "Untimed warm-up iterations");
    ben->add_option("--iters", iters, "Timed iterations");
    ben->add_option("--batch", bench_batch, "Samples per timed iteration");
    add_hyper_flags(ben);

    auto* ins = app.add_subcommand("inspect", "Describe a checkpoint or dataset file");
    ins->fallthrough();
    std::string inspect_path;
    bool sweep = false;
    ins->add_option("path", inspect_path, "Checkpoint or dataset file");
    ins->add_flag("--sweep", sweep, "Print trunk parameter counts for hidden_dim 2..512 as CSV");
    add_hyper_flags(ins);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig rc = load_run_config(config_path);
        if (app.count("--seed")) rc.seed = seed;
        if (app.count("--threads")) rc.threads = threads;
        if (app.count("--out")) rc.out_dir = out_dir;
        auto take = [](CLI::App* sub, const char* flag) { return sub->count(flag) > 0; };
        // finetune carries no geometry flags; the trunk checkpoint decides
        for (CLI::App* sub : {pre, lrf, ben, ins}) {
            if (!sub->parsed()) continue;
            if (take(sub, "--input-len")) rc.hyper.input_len = input_len;
            if (take(sub, "--patch-len")) rc.hyper.patch_len = patch_len;
            if (take(sub, "--stride")) rc.hyper.stride = stride;
            if (take(sub, "--channels")) rc.hyper.channels = channels;
            if (take(sub, "--hidden-dim")) rc.hyper.hidden_dim = hidden_dim;
            if (take(sub, "--mask-ratio")) rc.hyper.mask_ratio = mask_ratio;
        }
        // lr-find has no --epochs/--lr of its own, only the sweep bounds
        for (CLI::App* sub : {pre, fin}) {
            if (!sub->parsed()) continue;
            if (take(sub, "--epochs")) rc.train.epochs = epochs;
            if (take(sub, "--lr")) rc.train.lr = lr;
        }
        for (CLI::App* sub : {pre, fin, lrf}) {
            if (!sub->parsed()) continue;
            if (take(sub, "--batch-size")) rc.train.batch_size = batch_size;
        }
        if (fin->parsed()) {
            if (take(fin, "--strategy")) rc.strategy = strategy_flag;
            if (take(fin, "--lp-epochs")) rc.train.lp_epochs = lp_epochs;
            if (take(fin, "--eval-every")) rc.train.eval_every = eval_every;
            if (take(fin, "--dropout")) rc.train.dropout = dropout;
            if (take(fin, "--holdout")) rc.train.holdout_fraction = holdout;
        }

        if (gen->parsed()) return cmd_gen(rc, kinds_csv, exclude_csv, per_class, snr_db, length);
        if (pre->parsed()) return cmd_pretrain(rc, data_path, resume_path);
        if (fin->parsed()) return cmd_finetune(rc, data_path, trunk_path);
        if (ev->parsed()) return cmd_eval(rc, data_path, ckpt_path);
        if (lrf->parsed()) return cmd_lr_find(rc, data_path, lr_min, lr_max, lr_steps);
        if (ben->parsed()) return cmd_bench(rc, ckpt_path, warmup, iters, bench_batch);
        if (ins->parsed()) return cmd_inspect(rc, inspect_path, sweep);
        std::fprintf(stderr, "error: no subcommand\n");
        return 1;
    } catch (const wfm::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const wfm::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const wfm::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
