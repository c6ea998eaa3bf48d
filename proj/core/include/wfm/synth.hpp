#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wfm/data.hpp"
#include "wfm/errors.hpp"
#include "wfm/rng.hpp"

namespace wfm {

// Six seeded waveform families covering the task families the model is meant
// to span: narrowband modulation (tone, bpsk, qpsk), long-range sweeps
// (chirp), channel impulse responses (cir_decay), and a pure-noise rejection
// class.
enum class SynthKind { tone, bpsk, qpsk, chirp, cir_decay, noise };

const char* synth_kind_name(SynthKind kind);
SynthKind synth_kind_from_name(const std::string& name);

struct SynthSpec {
    std::vector<SynthKind> kinds = {SynthKind::tone, SynthKind::bpsk, SynthKind::qpsk,
                                    SynthKind::chirp};
    std::size_t per_class = 100;
    double snr_db = 10.0;
    std::size_t length = 4096;
    std::uint64_t seed = 0;
    std::vector<SynthKind> excluded_from_pretrain;

    // >= 2 distinct kinds, length >= 16, every excluded kind present in
    // kinds, and at least one kind left for pre-training.
    void validate() const;
};

// One I/Q record of the given family. All waveform parameters are drawn from
// rng before any noise, so the same rng at snr_db = inf yields the clean
// signal underneath a finite-snr record. Noise is white Gaussian with
// variance set so mean signal power / noise variance matches snr_db; the
// noise kind ignores snr_db and is unit Gaussian on both channels.
SignalRecord gen_signal(SynthKind kind, std::size_t length, double snr_db, Rng rng);

struct CorpusPaths {
    std::string pretrain;
    std::string finetune;
    std::string test;
};

// Three dataset files under out_dir from disjoint rng streams: an unlabeled
// pre-train corpus without the excluded kinds, and labeled fine-tune and test
// sets over all kinds. Each manifest records the scenario (excluded kinds,
// snr, seed).
CorpusPaths gen_corpus(const SynthSpec& spec, const std::string& out_dir);

}  // namespace wfm
