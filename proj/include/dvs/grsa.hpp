#pragma once

#include <cstddef>
#include <vector>

#include "dvs/matrix.hpp"
#include "dvs/pls.hpp"

namespace dvs {

struct GrsaConfig {
    std::size_t heads_pls = 4;
    std::size_t heads_graph = 2;  // shared by AST, CFG, DFG
    std::size_t d_model = 64;
    std::size_t d_fuse = 128;
    std::size_t d_emb = 64;
    std::size_t seq_len = 512;

    void validate() const;
};

/// Per-representation input projections plus the shared post-concat map.
/// Head projections are realized by the column-split convention.
struct GrsaParams {
    Matrix w_in_ast;  // L x d_model
    Matrix w_in_cfg;  // L x d_model
    Matrix w_in_dfg;  // L x d_model
    Matrix w_in_pls;  // d_emb x d_model
    Matrix w_out;     // 4*d_model x d_fuse

    bool operator==(const GrsaParams&) const = default;
};

/// softmax(Q K^T / sqrt(d_k)) V with masked key columns forced to zero
/// weight and padded query rows zeroed.
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            const std::vector<bool>& mask);

struct HeadCache {
    Matrix attn;  // L x L row-stochastic weights
};

struct SelfAttendCache {
    Matrix x;  // input
    Matrix z;  // projected input
    std::vector<HeadCache> heads;
};

/// Multi-head self-attention over one representation: project, split the
/// columns into `heads` blocks, attend each with Q=K=V, concatenate.
Matrix self_attend(const Matrix& x, std::size_t heads, const Matrix& w_in,
                   const std::vector<bool>& mask, SelfAttendCache* cache = nullptr);

/// Backward through self_attend. Accumulates into dw_in; returns dX.
Matrix self_attend_backward(const SelfAttendCache& cache, std::size_t heads,
                            const Matrix& w_in, const std::vector<bool>& mask,
                            const Matrix& d_out, Matrix& dw_in);

struct GrsaCache {
    SelfAttendCache ast, cfg, dfg, pls;
    Matrix concat;  // L x 4*d_model
};

struct GrsaGrads {
    Matrix w_in_ast, w_in_cfg, w_in_dfg, w_in_pls, w_out;
};

/// Fuse the three token-level graph matrices and the embedding matrix into
/// one L x d_fuse representation.
Matrix grsa_encode(const Matrix& s_ast, const Matrix& s_cfg, const Matrix& s_dfg,
                   const EmbeddingMatrix& p, const GrsaParams& params,
                   const GrsaConfig& config, GrsaCache* cache = nullptr);

/// Backward through grsa_encode; returns the gradient w.r.t. the embedding
/// matrix (graph inputs are constants).
Matrix grsa_backward(const GrsaCache& cache, const GrsaParams& params,
                     const GrsaConfig& config, const std::vector<bool>& mask,
                     const Matrix& d_fused, GrsaGrads& grads);

GrsaGrads zero_grsa_grads(const GrsaParams& params);

}  // namespace dvs
