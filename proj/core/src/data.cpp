#include "wfm/data.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace wfm {

using json = nlohmann::json;

const char* source_kind_name(SourceKind kind) {
    switch (kind) {
        case SourceKind::iq: return "iq";
        case SourceKind::cir: return "cir";
        case SourceKind::synthetic: return "synthetic";
    }
    return "synthetic";
}

SourceKind source_kind_from_name(const std::string& name) {
    if (name == "iq") return SourceKind::iq;
    if (name == "cir") return SourceKind::cir;
    if (name == "synthetic") return SourceKind::synthetic;
    throw ArgumentError("unknown source_kind '" + name + "'");
}

SignalRecord instance_normalize(const SignalRecord& rec, double eps) {
    const std::size_t c = rec.channels();
    const std::size_t len = rec.length();
    if (len < 2) {
        throw LengthError("instance_normalize: each channel needs >= 2 samples, got " +
                          std::to_string(len));
    }
    SignalRecord out = rec;
    for (std::size_t ch = 0; ch < c; ++ch) {
        instance_normalize_channel(rec.samples.data() + ch * len, len, eps,
                                   out.samples.data() + ch * len);
    }
    return out;
}

SignalRecord fit_length(const SignalRecord& rec, std::size_t target_len, FitMode mode) {
    const std::size_t c = rec.channels();
    const std::size_t len = rec.length();
    if (len == target_len) return rec;

    SignalRecord out = rec;
    out.samples = Tensor<float>({c, target_len});
    if (mode == FitMode::pad_right_zero) {
        if (len > target_len) {
            throw LengthError("fit_length: cannot pad " + std::to_string(len) +
                              " samples down to " + std::to_string(target_len));
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            std::memcpy(out.samples.data() + ch * target_len, rec.samples.data() + ch * len,
                        len * sizeof(float));
        }
    } else {
        if (len < 2) {
            throw LengthError("fit_length: upsample needs >= 2 source samples, got " +
                              std::to_string(len));
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            linear_resample(rec.samples.data() + ch * len, len,
                            out.samples.data() + ch * target_len, target_len);
        }
    }
    return out;
}

Tensor<float> patchify(const SignalRecord& rec, const HyperConfig& cfg) {
    if (rec.length() != cfg.input_len) {
        throw LengthError("patchify: record length " + std::to_string(rec.length()) +
                          " does not match configured input length " +
                          std::to_string(cfg.input_len));
    }
    Tensor<float> patches({rec.channels(), cfg.num_patches(), cfg.patch_len});
    patchify_signal(rec.samples.data(), rec.channels(), rec.length(), cfg, patches.data());
    return patches;
}

Tensor<float> prepare_patches(const SignalRecord& rec, const HyperConfig& cfg, FitMode mode,
                              double eps) {
    if (rec.channels() != cfg.channels) {
        throw DimensionError("prepare_patches: record has " + std::to_string(rec.channels()) +
                             " channels, model expects " + std::to_string(cfg.channels));
    }
    return patchify(fit_length(instance_normalize(rec, eps), cfg.input_len, mode), cfg);
}

bool Dataset::labeled() const {
    if (records.empty()) return false;
    for (const auto& r : records) {
        if (!r.label.has_value()) return false;
    }
    return true;
}

std::string manifest_path_for(const std::string& dataset_path) {
    return dataset_path + ".manifest.json";
}

namespace {

constexpr char kMagic[4] = {'W', 'F', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, std::size_t offset,
                const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw FormatError(std::string("dataset truncated while reading ") + what, offset);
    }
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    std::size_t channels = 0;
    std::size_t length = 0;
    if (!ds.records.empty()) {
        channels = ds.records.front().channels();
        length = ds.records.front().length();
        for (const auto& r : ds.records) {
            if (r.channels() != channels || r.length() != length) {
                throw DataError("save_dataset: records must share channel count and length");
            }
        }
        const bool first_labeled = ds.records.front().label.has_value();
        for (const auto& r : ds.records) {
            if (r.label.has_value() != first_labeled) {
                throw DataError("save_dataset: labels must be present on all records or none");
            }
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_dataset: cannot open for writing", path);

    const std::uint16_t chan16 = static_cast<std::uint16_t>(channels);
    const std::uint32_t len32 = static_cast<std::uint32_t>(length);
    const std::uint32_t count32 = static_cast<std::uint32_t>(ds.records.size());
    write_bytes(out, kMagic, 4);
    write_bytes(out, &kVersion, 2);
    write_bytes(out, &kDtypeF32, 1);
    write_bytes(out, &chan16, 2);
    write_bytes(out, &len32, 4);
    write_bytes(out, &count32, 4);
    for (const auto& r : ds.records) {
        write_bytes(out, r.samples.data(), r.samples.size() * sizeof(float));
    }
    if (!out) throw IoError("save_dataset: write failed", path);
    out.close();

    json manifest;
    manifest["classes"] = ds.classes;
    if (!ds.records.empty() && ds.records.front().label.has_value()) {
        std::vector<int> labels;
        labels.reserve(ds.records.size());
        for (const auto& r : ds.records) labels.push_back(*r.label);
        manifest["labels"] = labels;
    }
    std::vector<double> rates;
    std::vector<std::string> kinds;
    rates.reserve(ds.records.size());
    kinds.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        rates.push_back(r.sample_rate_hz);
        kinds.push_back(source_kind_name(r.source_kind));
    }
    manifest["sample_rate_hz"] = rates;
    manifest["source_kind"] = kinds;
    if (!ds.scenario_json.empty()) {
        manifest["scenario"] = json::parse(ds.scenario_json);
    }

    const std::string mpath = manifest_path_for(path);
    std::ofstream mout(mpath, std::ios::trunc);
    if (!mout) throw IoError("save_dataset: cannot open manifest for writing", mpath);
    mout << manifest.dump(2) << "\n";
    if (!mout) throw IoError("save_dataset: manifest write failed", mpath);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_dataset: cannot open", path);

    char magic[4];
    read_bytes(in, magic, 4, 0, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("dataset magic mismatch, expected \"WFDS\"", 0);
    }
    std::uint16_t version = 0;
    read_bytes(in, &version, 2, 4, "version");
    if (version != kVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(version), 4);
    }
    std::uint8_t dtype = 0;
    read_bytes(in, &dtype, 1, 6, "dtype");
    if (dtype != kDtypeF32) {
        throw FormatError("unsupported dtype code " + std::to_string(dtype), 6);
    }
    std::uint16_t channels = 0;
    std::uint32_t length = 0;
    std::uint32_t count = 0;
    read_bytes(in, &channels, 2, 7, "channel count");
    read_bytes(in, &length, 4, 9, "length");
    read_bytes(in, &count, 4, 13, "record count");

    Dataset ds;
    ds.records.reserve(count);
    const std::size_t rec_floats = static_cast<std::size_t>(channels) * length;
    std::size_t offset = 17;
    for (std::uint32_t i = 0; i < count; ++i) {
        SignalRecord rec;
        rec.samples = Tensor<float>({channels, length});
        read_bytes(in, rec.samples.data(), rec_floats * sizeof(float), offset, "payload");
        offset += rec_floats * sizeof(float);
        ds.records.push_back(std::move(rec));
    }

    const std::string mpath = manifest_path_for(path);
    std::ifstream min(mpath);
    if (min) {
        json manifest;
        try {
            min >> manifest;
        } catch (const json::exception& e) {
            throw FormatError(std::string("manifest parse error: ") + e.what(), 0);
        }
        if (manifest.contains("classes")) {
            ds.classes = manifest["classes"].get<std::vector<std::string>>();
        }
        if (manifest.contains("labels")) {
            const auto labels = manifest["labels"].get<std::vector<int>>();
            if (labels.size() != ds.records.size()) {
                throw DataError("manifest labels count " + std::to_string(labels.size()) +
                                " does not match record count " +
                                std::to_string(ds.records.size()));
            }
            for (std::size_t i = 0; i < labels.size(); ++i) ds.records[i].label = labels[i];
        }
        if (manifest.contains("sample_rate_hz")) {
            const auto rates = manifest["sample_rate_hz"].get<std::vector<double>>();
            for (std::size_t i = 0; i < rates.size() && i < ds.records.size(); ++i) {
                ds.records[i].sample_rate_hz = rates[i];
            }
        }
        if (manifest.contains("source_kind")) {
            const auto kinds = manifest["source_kind"].get<std::vector<std::string>>();
            for (std::size_t i = 0; i < kinds.size() && i < ds.records.size(); ++i) {
                try {
                    ds.records[i].source_kind = source_kind_from_name(kinds[i]);
                } catch (const ArgumentError&) {
                    throw DataError("manifest names unknown source_kind '" + kinds[i] +
                                    "' for record " + std::to_string(i));
                }
            }
        }
        if (manifest.contains("scenario")) {
            ds.scenario_json = manifest["scenario"].dump();
        }
    }
    return ds;
}

}  // namespace wfm
