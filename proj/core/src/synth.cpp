#include "wfm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

namespace wfm {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Waveform kinds draw their shape parameters first; noise draws come last so
// a clean rerun at snr = inf reproduces the signal exactly.
void fill_tone(float* i_ch, float* q_ch, std::size_t n, Rng& rng) {
    const double f = rng.uniform(0.029, 0.034);
    for (std::size_t t = 0; t < n; ++t) {
        const double ph = 2.0 * kPi * f * static_cast<double>(t);
        i_ch[t] = static_cast<float>(std::cos(ph));
        q_ch[t] = static_cast<float>(std::sin(ph));
    }
}

void fill_psk(float* i_ch, float* q_ch, std::size_t n, Rng& rng, bool quadrature) {
    const std::size_t sps = 8 + static_cast<std::size_t>(rng.below(9));
    const float a = quadrature ? static_cast<float>(1.0 / std::sqrt(2.0)) : 1.0f;
    float si = 0.0f, sq = 0.0f;
    for (std::size_t t = 0; t < n; ++t) {
        if (t % sps == 0) {
            const std::uint64_t bits = rng.next_u64();
            si = (bits & 1) ? a : -a;
            sq = quadrature ? ((bits & 2) ? a : -a) : 0.0f;
        }
        i_ch[t] = si;
        q_ch[t] = sq;
    }
}

void fill_chirp(float* i_ch, float* q_ch, std::size_t n, Rng& rng) {
    constexpr double kPeriod = 256.0;
    const double f0 = rng.uniform(0.010, 0.012);
    const double f1 = rng.uniform(0.080, 0.090);
    for (std::size_t t = 0; t < n; ++t) {
        const double tau = static_cast<double>(t % static_cast<std::size_t>(kPeriod));
        const double ph = 2.0 * kPi * (f0 * tau + (f1 - f0) * tau * tau / (2.0 * kPeriod));
        i_ch[t] = static_cast<float>(std::cos(ph));
        q_ch[t] = static_cast<float>(std::sin(ph));
    }
}

void fill_cir(float* i_ch, std::size_t n, Rng& rng) {
    const std::size_t delay = static_cast<std::size_t>(rng.below(32));
    const std::size_t spacing = 32 + static_cast<std::size_t>(rng.below(33));
    std::size_t k = 0;
    for (std::size_t t = delay; t < n; t += spacing, ++k) {
        i_ch[t] = static_cast<float>(std::exp(-0.5 * static_cast<double>(k)));
    }
}

}  // namespace

const char* synth_kind_name(SynthKind kind) {
    switch (kind) {
        case SynthKind::tone: return "tone";
        case SynthKind::bpsk: return "bpsk";
        case SynthKind::qpsk: return "qpsk";
        case SynthKind::chirp: return "chirp";
        case SynthKind::cir_decay: return "cir_decay";
        case SynthKind::noise: return "noise";
    }
    throw ArgumentError("unknown synth kind");
}

SynthKind synth_kind_from_name(const std::string& name) {
    for (const SynthKind k : {SynthKind::tone, SynthKind::bpsk, SynthKind::qpsk, SynthKind::chirp,
                              SynthKind::cir_decay, SynthKind::noise}) {
        if (name == synth_kind_name(k)) return k;
    }
    throw ArgumentError("unknown synth kind '" + name + "'");
}

void SynthSpec::validate() const {
    if (length < 16) throw ConfigError("SynthSpec: length must be >= 16");
    if (kinds.size() < 2) throw ConfigError("SynthSpec: need >= 2 kinds for classification");
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        for (std::size_t j = i + 1; j < kinds.size(); ++j) {
            if (kinds[i] == kinds[j]) {
                throw ConfigError(std::string("SynthSpec: duplicate kind '") +
                                  synth_kind_name(kinds[i]) + "'");
            }
        }
    }
    std::size_t excluded = 0;
    for (const SynthKind e : excluded_from_pretrain) {
        if (std::find(kinds.begin(), kinds.end(), e) == kinds.end()) {
            throw ConfigError(std::string("SynthSpec: excluded kind '") + synth_kind_name(e) +
                              "' is not in kinds");
        }
        ++excluded;
    }
    if (excluded >= kinds.size()) {
        throw ConfigError("SynthSpec: all kinds excluded from pre-training");
    }
}

SignalRecord gen_signal(SynthKind kind, std::size_t length, double snr_db, Rng rng) {
    if (length < 16) throw ArgumentError("gen_signal: length must be >= 16");
    SignalRecord rec;
    rec.samples = Tensor<float>({2, length});
    rec.source_kind = SourceKind::synthetic;
    float* i_ch = rec.samples.data();
    float* q_ch = rec.samples.data() + length;

    bool single_channel = false;
    switch (kind) {
        case SynthKind::tone: fill_tone(i_ch, q_ch, length, rng); break;
        case SynthKind::bpsk: fill_psk(i_ch, q_ch, length, rng, false); break;
        case SynthKind::qpsk: fill_psk(i_ch, q_ch, length, rng, true); break;
        case SynthKind::chirp: fill_chirp(i_ch, q_ch, length, rng); break;
        case SynthKind::cir_decay:
            fill_cir(i_ch, length, rng);
            single_channel = true;
            rec.source_kind = SourceKind::cir;
            break;
        case SynthKind::noise:
            for (std::size_t t = 0; t < 2 * length; ++t) {
                rec.samples[t] = static_cast<float>(rng.normal());
            }
            return rec;
        default: throw ArgumentError("gen_signal: unknown kind");
    }

    if (std::isinf(snr_db)) return rec;
    double power = 0.0;
    const std::size_t live = single_channel ? length : 2 * length;
    for (std::size_t t = 0; t < live; ++t) {
        power += static_cast<double>(rec.samples[t]) * rec.samples[t];
    }
    power /= static_cast<double>(live);
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    for (std::size_t t = 0; t < live; ++t) {
        rec.samples[t] = static_cast<float>(rec.samples[t] + sigma * rng.normal());
    }
    return rec;
}

CorpusPaths gen_corpus(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("gen_corpus: cannot create output directory", out_dir);

    std::vector<SynthKind> pretrain_kinds;
    for (const SynthKind k : spec.kinds) {
        if (std::find(spec.excluded_from_pretrain.begin(), spec.excluded_from_pretrain.end(), k) ==
            spec.excluded_from_pretrain.end()) {
            pretrain_kinds.push_back(k);
        }
    }

    json scenario;
    scenario["excluded"] = json::array();
    for (const SynthKind k : spec.excluded_from_pretrain) {
        scenario["excluded"].push_back(synth_kind_name(k));
    }
    scenario["snr_db"] = spec.snr_db;
    scenario["seed"] = spec.seed;
    const std::string scenario_text = scenario.dump();

    const Rng root(spec.seed);
    auto build = [&](const std::vector<SynthKind>& kinds, bool labeled, Rng stream) {
        Dataset ds;
        ds.scenario_json = scenario_text;
        // class names only accompany labels; an unlabeled corpus stays bare
        if (labeled) {
            for (const SynthKind k : kinds) ds.classes.emplace_back(synth_kind_name(k));
        }
        std::size_t index = 0;
        for (std::size_t c = 0; c < kinds.size(); ++c) {
            for (std::size_t r = 0; r < spec.per_class; ++r, ++index) {
                SignalRecord rec =
                    gen_signal(kinds[c], spec.length, spec.snr_db, stream.split(index));
                if (labeled) rec.label = static_cast<int>(c);
                ds.records.push_back(std::move(rec));
            }
        }
        return ds;
    };

    CorpusPaths paths;
    paths.pretrain = (std::filesystem::path(out_dir) / "pretrain.wfds").string();
    paths.finetune = (std::filesystem::path(out_dir) / "finetune.wfds").string();
    paths.test = (std::filesystem::path(out_dir) / "test.wfds").string();
    save_dataset(build(pretrain_kinds, false, root.split(0)), paths.pretrain);
    save_dataset(build(spec.kinds, true, root.split(1)), paths.finetune);
    save_dataset(build(spec.kinds, true, root.split(2)), paths.test);
    return paths;
}

}  // namespace wfm
