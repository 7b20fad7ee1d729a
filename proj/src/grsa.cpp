#include "dvs/grsa.hpp"

#include <cmath>
#include <limits>

namespace dvs {

namespace {

Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t c1) {
    Matrix out(m.rows(), c1 - c0);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = c0; c < c1; ++c) out(r, c - c0) = m(r, c);
    return out;
}

void paste_cols(Matrix& dst, const Matrix& src, std::size_t c0) {
    for (std::size_t r = 0; r < src.rows(); ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) dst(r, c0 + c) = src(r, c);
}

/// Masked row softmax of Q K^T / sqrt(d_k). Returns the attention weight
/// matrix; rows for masked queries and fully-masked rows are all zero.
Matrix attention_weights(const Matrix& q, const Matrix& k, const std::vector<bool>& mask) {
    if (q.cols() != k.cols() || q.rows() != k.rows())
        throw ShapeError("attention: Q/K shape mismatch");
    if (q.cols() == 0) throw ShapeError("attention: d_k = 0");
    if (mask.size() != q.rows()) throw ShapeError("attention: mask length mismatch");
    const std::size_t l = q.rows();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix a(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        if (!mask[i]) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < l; ++j) {
            if (!mask[j]) continue;
            double s = 0.0;
            for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
            s *= inv_scale;
            a(i, j) = s;
            mx = std::max(mx, s);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double sum = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
            if (!mask[j]) { a(i, j) = 0.0; continue; }
            a(i, j) = std::exp(a(i, j) - mx);
            sum += a(i, j);
        }
        for (std::size_t j = 0; j < l; ++j) a(i, j) /= sum;
    }
    return a;
}

}  // namespace

void GrsaConfig::validate() const {
    if (heads_pls < 1 || heads_graph < 1) throw ShapeError("GRSA: head counts must be >= 1");
    if (d_model % heads_pls != 0 || d_model % heads_graph != 0)
        throw ShapeError("GRSA: d_model " + std::to_string(d_model) +
                         " not divisible by head counts");
    if (d_model < 1 || d_fuse < 1 || seq_len < 1) throw ShapeError("GRSA: zero dimension");
}

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            const std::vector<bool>& mask) {
    if (v.rows() != k.rows()) throw ShapeError("attention: K/V row mismatch");
    Matrix a = attention_weights(q, k, mask);
    return matmul(a, v);
}

Matrix self_attend(const Matrix& x, std::size_t heads, const Matrix& w_in,
                   const std::vector<bool>& mask, SelfAttendCache* cache) {
    if (x.cols() != w_in.rows())
        throw ShapeError("self_attend: input width " + std::to_string(x.cols()) +
                         " != projection rows " + std::to_string(w_in.rows()));
    const std::size_t d_model = w_in.cols();
    if (d_model % heads != 0) throw ShapeError("self_attend: d_model not divisible by heads");
    const std::size_t d_k = d_model / heads;

    Matrix z = matmul(x, w_in);
    Matrix out(x.rows(), d_model);
    if (cache) {
        cache->x = x;
        cache->z = z;
        cache->heads.assign(heads, {});
    }
    for (std::size_t h = 0; h < heads; ++h) {
        Matrix zh = slice_cols(z, h * d_k, (h + 1) * d_k);
        Matrix a = attention_weights(zh, zh, mask);
        paste_cols(out, matmul(a, zh), h * d_k);
        if (cache) cache->heads[h].attn = std::move(a);
    }
    return out;
}

Matrix self_attend_backward(const SelfAttendCache& cache, std::size_t heads,
                            const Matrix& w_in, const std::vector<bool>& mask,
                            const Matrix& d_out, Matrix& dw_in) {
    const std::size_t d_model = w_in.cols();
    const std::size_t d_k = d_model / heads;
    const std::size_t l = cache.z.rows();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_k));

    Matrix dz(l, d_model);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix zh = slice_cols(cache.z, h * d_k, (h + 1) * d_k);
        const Matrix dh = slice_cols(d_out, h * d_k, (h + 1) * d_k);
        const Matrix& a = cache.heads[h].attn;

        Matrix dv = matmul(transpose(a), dh);
        Matrix da = matmul(dh, transpose(zh));
        // softmax backward, rows independent; masked entries have a == 0
        Matrix ds(l, l);
        for (std::size_t i = 0; i < l; ++i) {
            if (!mask[i]) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < l; ++j) dot += da(i, j) * a(i, j);
            for (std::size_t j = 0; j < l; ++j) ds(i, j) = a(i, j) * (da(i, j) - dot);
        }
        Matrix dq = scale(matmul(ds, zh), inv_scale);
        Matrix dk = scale(matmul(transpose(ds), zh), inv_scale);
        for (std::size_t r = 0; r < l; ++r)
            for (std::size_t c = 0; c < d_k; ++c)
                dz(r, h * d_k + c) += dq(r, c) + dk(r, c) + dv(r, c);
    }
    add_in_place(dw_in, matmul(transpose(cache.x), dz));
    return matmul(dz, transpose(w_in));
}

Matrix grsa_encode(const Matrix& s_ast, const Matrix& s_cfg, const Matrix& s_dfg,
                   const EmbeddingMatrix& p, const GrsaParams& params,
                   const GrsaConfig& config, GrsaCache* cache) {
    config.validate();
    const std::size_t l = p.values.rows();
    if (s_ast.rows() != l || s_cfg.rows() != l || s_dfg.rows() != l ||
        s_ast.cols() != l || s_cfg.cols() != l || s_dfg.cols() != l)
        throw ShapeError("grsa_encode: representations disagree on L");

    const std::vector<bool>& mask = p.pad_mask;
    Matrix h_ast = self_attend(s_ast, config.heads_graph, params.w_in_ast, mask,
                               cache ? &cache->ast : nullptr);
    Matrix h_cfg = self_attend(s_cfg, config.heads_graph, params.w_in_cfg, mask,
                               cache ? &cache->cfg : nullptr);
    Matrix h_dfg = self_attend(s_dfg, config.heads_graph, params.w_in_dfg, mask,
                               cache ? &cache->dfg : nullptr);
    Matrix h_pls = self_attend(p.values, config.heads_pls, params.w_in_pls, mask,
                               cache ? &cache->pls : nullptr);

    Matrix concat(l, 4 * config.d_model);
    paste_cols(concat, h_ast, 0);
    paste_cols(concat, h_cfg, config.d_model);
    paste_cols(concat, h_dfg, 2 * config.d_model);
    paste_cols(concat, h_pls, 3 * config.d_model);
    if (cache) cache->concat = concat;
    return matmul(concat, params.w_out);
}

Matrix grsa_backward(const GrsaCache& cache, const GrsaParams& params,
                     const GrsaConfig& config, const std::vector<bool>& mask,
                     const Matrix& d_fused, GrsaGrads& grads) {
    add_in_place(grads.w_out, matmul(transpose(cache.concat), d_fused));
    Matrix d_concat = matmul(d_fused, transpose(params.w_out));

    const std::size_t dm = config.d_model;
    self_attend_backward(cache.ast, config.heads_graph, params.w_in_ast, mask,
                         slice_cols(d_concat, 0, dm), grads.w_in_ast);
    self_attend_backward(cache.cfg, config.heads_graph, params.w_in_cfg, mask,
                         slice_cols(d_concat, dm, 2 * dm), grads.w_in_cfg);
    self_attend_backward(cache.dfg, config.heads_graph, params.w_in_dfg, mask,
                         slice_cols(d_concat, 2 * dm, 3 * dm), grads.w_in_dfg);
    return self_attend_backward(cache.pls, config.heads_pls, params.w_in_pls, mask,
                                slice_cols(d_concat, 3 * dm, 4 * dm), grads.w_in_pls);
}

GrsaGrads zero_grsa_grads(const GrsaParams& params) {
    GrsaGrads g;
    g.w_in_ast = Matrix(params.w_in_ast.rows(), params.w_in_ast.cols());
    g.w_in_cfg = Matrix(params.w_in_cfg.rows(), params.w_in_cfg.cols());
    g.w_in_dfg = Matrix(params.w_in_dfg.rows(), params.w_in_dfg.cols());
    g.w_in_pls = Matrix(params.w_in_pls.rows(), params.w_in_pls.cols());
    g.w_out = Matrix(params.w_out.rows(), params.w_out.cols());
    return g;
}

}  // namespace dvs
