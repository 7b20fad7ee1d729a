#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dvs/lexer.hpp"
#include "dvs/matrix.hpp"

namespace dvs {

struct PlsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Token vocabulary for the trainable embedding table. Index 0 is UNK;
/// the rest are ordered by (frequency desc, text asc) over the training
/// split only.
struct Vocabulary {
    std::vector<std::string> tokens;  // tokens[0] == "<unk>"
    std::unordered_map<std::string, int> index;

    std::size_t size() const { return tokens.size(); }
    int lookup(const std::string& text) const {
        auto it = index.find(text);
        return it == index.end() ? 0 : it->second;
    }
};

Vocabulary build_vocab(const std::vector<TokenStream>& train_streams, std::size_t min_count);

std::string export_vocab(const Vocabulary& v);
Vocabulary import_vocab_json(const std::string& json_text);

/// L x d contextual token representations with padding bookkeeping.
/// token_rows holds the embedding-table row per position (-1 for padding
/// or for precomputed embeddings) so gradients can be scattered back.
struct EmbeddingMatrix {
    Matrix values;               // L x d
    std::vector<bool> pad_mask;  // true = real token
    std::vector<int> token_rows;
};

enum class ProviderKind { TrainableTable, PrecomputedFile };

/// Source of token embeddings. The trainable table references a matrix
/// owned by the model parameters; the precomputed provider serves per-id
/// matrices loaded from an .emb container.
struct EmbeddingProvider {
    ProviderKind kind = ProviderKind::TrainableTable;
    const Vocabulary* vocab = nullptr;
    const Matrix* table = nullptr;  // vocab.size() x d
    std::map<std::string, Matrix> precomputed;
    std::size_t d = 0;
};

/// Row t is the embedding of token t; rows past the stream length are zero
/// and masked out.
EmbeddingMatrix embed(const TokenStream& ts, const EmbeddingProvider& provider,
                      const std::string& sample_id, std::size_t l);

/// Precomputed-embedding container: JSON index plus little-endian float64
/// blocks, one L x d matrix per sample id.
void save_embedding_file(const std::map<std::string, Matrix>& per_sample,
                         const std::string& path);
std::map<std::string, Matrix> load_embedding_file(const std::string& path);

EmbeddingProvider make_precomputed_provider(const std::string& path);

}  // namespace dvs
