#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvs/corpus.hpp"
#include "dvs/graphs.hpp"
#include "dvs/grsa.hpp"
#include "dvs/numerics.hpp"
#include "dvs/pls.hpp"

namespace dvs {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Representation { AST, CFG, DFG, PLS };

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    std::size_t l_max = 512;
    bool use_ast = true;
    bool use_cfg = true;
    bool use_dfg = true;
    bool use_pls = true;

    GrsaConfig grsa;
    std::size_t conv_kernels = 32;
    std::size_t conv_width = 3;
    std::size_t hidden = 64;
    std::size_t vocab_min_count = 1;
    SplitRatios ratios;
    bool stratify = false;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Returns config with the named representation disabled; refuses to drop
/// the last enabled one.
TrainConfig ablate(TrainConfig config, Representation drop);

struct ModelParams {
    GrsaParams grsa;
    Matrix conv_kernels;  // n_k x (width * d_fuse)
    Matrix conv_bias;     // 1 x n_k
    Matrix w1, b1;        // pooled -> hidden
    Matrix w2, b2;        // hidden -> 2 logits
    Matrix embedding;     // vocab x d_emb (0x0 with a precomputed provider)

    bool operator==(const ModelParams&) const = default;

    /// Fixed parameter-group ordering used for flattening, checkpoints and
    /// the Adam state.
    std::vector<std::pair<std::string, Matrix*>> groups();
    std::vector<std::pair<std::string, const Matrix*>> groups() const;
    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);
};

ModelParams init_params(const TrainConfig& config, std::size_t vocab_size);

/// Preprocessed per-sample inputs: MetaPath'd token-level graph matrices
/// plus the embedding matrix.
struct SampleInputs {
    std::string id;
    int label = 0;
    Matrix s_ast, s_cfg, s_dfg;  // L x L
    EmbeddingMatrix emb;
};

SampleInputs preprocess(const RawSample& sample, const EmbeddingProvider& provider,
                        const TrainConfig& config);

/// Re-read embedding rows from the live trainable table (no-op for
/// precomputed embeddings, where token_rows are all -1).
void refresh_embedding(SampleInputs& x, const Matrix& table);
SampleInputs inputs_from_bundle(const GraphBundle& bundle, const RawSample& sample,
                                const EmbeddingProvider& provider, const TrainConfig& config);

struct ForwardCache {
    GrsaCache grsa;
    EmbeddingMatrix emb_used;
    Matrix fused;
    Matrix conv;  // post-bias, pre-pool
    std::vector<std::size_t> argmax;
    std::vector<double> pooled, h1pre, h1, logits, probs;
};

/// Probability that the sample is vulnerable (class 1).
double forward(const SampleInputs& x, const ModelParams& params, const TrainConfig& config,
               ForwardCache* cache = nullptr);

/// Mean binary cross-entropy with probabilities clamped away from {0,1}.
double cross_entropy(const std::vector<double>& p, const std::vector<int>& y);

struct ModelGrads {
    GrsaGrads grsa;
    Matrix conv_kernels, conv_bias, w1, b1, w2, b2, embedding;

    std::vector<double> flatten() const;
};

ModelGrads zero_grads(const ModelParams& params);

/// Gradient of the mean cross-entropy of one sample batch member; scale is
/// typically 1/batch. Accumulates into grads.
void backward(const ModelParams& params, const TrainConfig& config,
              const ForwardCache& cache, int label, double scale, ModelGrads& grads);

/// Batch loss + gradients in one pass.
double batch_loss_and_grads(const std::vector<const SampleInputs*>& batch,
                            const ModelParams& params, const TrainConfig& config,
                            ModelGrads* grads);

struct Metrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    bool precision_defined = true, recall_defined = true, f1_defined = true;
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
nlohmann::json metrics_to_json(const Metrics& m);
std::string metrics_table(const Metrics& m);

struct TrainResult {
    Checkpoint best;           // best-validation snapshot
    Checkpoint final_state;    // params + optimizer after the last epoch
    std::vector<EpochStats> history;
    Vocabulary vocab;
};

/// Deterministic mini-batch Adam training. The provider's trainable table,
/// when used, is backed by params.embedding.
TrainResult train(const std::vector<RawSample>& samples, const CorpusSplit& split,
                  const TrainConfig& config,
                  const std::optional<std::string>& embeddings_path = std::nullopt,
                  const std::string& cache_dir = "", bool use_cache = false);

Metrics evaluate(const ModelParams& params, const TrainConfig& config,
                 const std::vector<SampleInputs>& samples);

/// Checkpoint packing: parameters, optimizer state and vocabulary.
Checkpoint make_checkpoint(const ModelParams& params, const TrainConfig& config,
                           const AdamState& adam, const Vocabulary& vocab,
                           const std::vector<EpochStats>& history);
void unpack_checkpoint(const Checkpoint& ck, ModelParams& params, TrainConfig& config,
                       AdamState& adam, Vocabulary& vocab);

}  // namespace dvs
