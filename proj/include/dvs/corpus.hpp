#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvs/matrix.hpp"

namespace dvs {

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RawSample {
    std::string id;
    std::string source;
    int label = 0;  // 0 = non-vulnerable, 1 = vulnerable
};

struct SplitRatios {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

struct CorpusSplit {
    std::vector<std::string> train, validation, test;
    std::uint64_t seed = 0;

    bool operator==(const CorpusSplit&) const = default;
};

/// Reads a JSONL corpus with fields `func` and `target`; `id` defaults to
/// the 1-based line number. Malformed lines raise CorpusError naming the line.
std::vector<RawSample> load_corpus(const std::string& path);
std::vector<RawSample> load_corpus_text(const std::string& text, const std::string& origin);

/// Deterministic shuffled split using largest-remainder apportionment of
/// the ratios. With stratify=true the split is applied per label class.
CorpusSplit split_corpus(const std::vector<RawSample>& samples, SplitRatios ratios,
                         std::uint64_t seed, bool stratify = false);

std::string export_split(const CorpusSplit& s);
CorpusSplit import_split_json(const std::string& json_text);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double validation_accuracy = 0.0;

    bool operator==(const EpochStats&) const = default;
};

/// Versioned model snapshot: JSON header (config, metrics history, tensor
/// directory) followed by a little-endian float64 payload with a checksum.
/// Tensor content is owned generically so the container does not depend on
/// the model layer.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    int format_version = kFormatVersion;
    nlohmann::json config = nlohmann::json::object();
    std::vector<EpochStats> metrics_history;
    std::vector<std::pair<std::string, Matrix>> tensors;

    const Matrix& tensor(const std::string& name) const;
    bool operator==(const Checkpoint&) const = default;
};

/// Atomic (write-temp-then-rename) checkpoint save.
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dvs
