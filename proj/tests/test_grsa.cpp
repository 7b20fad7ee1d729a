#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dvs/grsa.hpp"
#include "dvs/numerics.hpp"

using namespace dvs;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lim = 1.0) {
    std::uniform_real_distribution<double> dist(-lim, lim);
    Matrix m(r, c);
    for (double& v : m.raw()) v = dist(rng);
    return m;
}

// independent long-double reference for masked scaled dot-product attention
Matrix attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v,
                        const std::vector<bool>& mask) {
    const std::size_t l = q.rows(), d = q.cols();
    const long double inv = 1.0L / sqrtl(static_cast<long double>(d));
    Matrix out(l, v.cols());
    for (std::size_t i = 0; i < l; ++i) {
        if (!mask[i]) continue;
        std::vector<long double> w(l, 0.0L);
        long double mx = -1e30L;
        for (std::size_t j = 0; j < l; ++j) {
            if (!mask[j]) continue;
            long double s = 0.0L;
            for (std::size_t c = 0; c < d; ++c)
                s += static_cast<long double>(q(i, c)) * k(j, c);
            w[j] = s * inv;
            mx = std::max(mx, w[j]);
        }
        long double sum = 0.0L;
        for (std::size_t j = 0; j < l; ++j) {
            if (!mask[j]) continue;
            w[j] = expl(w[j] - mx);
            sum += w[j];
        }
        for (std::size_t j = 0; j < l; ++j) {
            if (!mask[j]) continue;
            for (std::size_t c = 0; c < v.cols(); ++c)
                out(i, c) += static_cast<double>(w[j] / sum * v(j, c));
        }
    }
    return out;
}

GrsaParams random_grsa_params(const GrsaConfig& cfg, std::size_t l, std::mt19937_64& rng) {
    GrsaParams p;
    p.w_in_ast = random_matrix(l, cfg.d_model, rng, 0.5);
    p.w_in_cfg = random_matrix(l, cfg.d_model, rng, 0.5);
    p.w_in_dfg = random_matrix(l, cfg.d_model, rng, 0.5);
    p.w_in_pls = random_matrix(cfg.d_emb, cfg.d_model, rng, 0.5);
    p.w_out = random_matrix(4 * cfg.d_model, cfg.d_fuse, rng, 0.5);
    return p;
}

std::vector<Matrix*> param_list(GrsaParams& p) {
    return {&p.w_in_ast, &p.w_in_cfg, &p.w_in_dfg, &p.w_in_pls, &p.w_out};
}

}  // namespace

TEST_CASE("single-token attention returns its value row") {
    Matrix q(1, 1, {0.7}), k(1, 1, {-2.0}), v(1, 2, {3.0, -4.0});
    Matrix out = scaled_dot_attention(q, k, v, {true});
    CHECK(out(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(out(0, 1) == doctest::Approx(-4.0).epsilon(1e-14));
}

TEST_CASE("identical keys give the uniform mean of values") {
    // all key rows equal -> every score ties -> softmax uniform
    Matrix q(3, 2, {1, 0, 0, 1, 2, 2});
    Matrix k(3, 2, {5, 5, 5, 5, 5, 5});
    Matrix v(3, 1, {1, 2, 6});
    Matrix out = scaled_dot_attention(q, k, v, {true, true, true});
    for (std::size_t i = 0; i < 3; ++i) CHECK(out(i, 0) == doctest::Approx(3.0).epsilon(1e-13));
}

TEST_CASE("attention matches the high-precision oracle") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t l = 2 + rng() % 7, d = 1 + rng() % 5, dv = 1 + rng() % 4;
        Matrix q = random_matrix(l, d, rng, 2.0);
        Matrix k = random_matrix(l, d, rng, 2.0);
        Matrix v = random_matrix(l, dv, rng, 2.0);
        std::vector<bool> mask(l, true);
        for (std::size_t i = 0; i < l; ++i) mask[i] = rng() % 4 != 0;
        Matrix got = scaled_dot_attention(q, k, v, mask);
        Matrix ref = attention_oracle(q, k, v, mask);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got.raw()[i] - ref.raw()[i]) < 1e-12);
        // padded query rows are exactly zero
        for (std::size_t i = 0; i < l; ++i)
            if (!mask[i])
                for (std::size_t c = 0; c < dv; ++c) CHECK(got(i, c) == 0.0);
    }
}

TEST_CASE("padded key content cannot influence real queries") {
    std::mt19937_64 rng(47);
    Matrix q = random_matrix(4, 3, rng);
    Matrix k = random_matrix(4, 3, rng);
    Matrix v = random_matrix(4, 2, rng);
    const std::vector<bool> mask = {true, true, false, false};
    Matrix base = scaled_dot_attention(q, k, v, mask);
    // blow up the masked rows; nothing may change
    for (std::size_t j = 2; j < 4; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
            k(j, c) = 1e6;
            if (c < 2) v(j, c) = -1e6;
        }
    Matrix perturbed = scaled_dot_attention(q, k, v, mask);
    CHECK(base == perturbed);
}

TEST_CASE("fully masked input attends to nothing") {
    Matrix x(3, 3);
    Matrix out = scaled_dot_attention(x, x, x, {false, false, false});
    for (double v : out.raw()) CHECK(v == 0.0);
}

TEST_CASE("attention shape errors") {
    Matrix q(2, 3), k(2, 2), v(2, 2);
    CHECK_THROWS_AS(scaled_dot_attention(q, k, v, {true, true}), ShapeError);
    Matrix k2(2, 3), v2(3, 2);
    CHECK_THROWS_AS(scaled_dot_attention(q, k2, v2, {true, true}), ShapeError);
    CHECK_THROWS_AS(scaled_dot_attention(q, k2, Matrix(2, 2), {true}), ShapeError);
}

TEST_CASE("one-head self-attention degenerates to plain attention") {
    std::mt19937_64 rng(53);
    Matrix x = random_matrix(5, 4, rng);
    Matrix w = random_matrix(4, 6, rng);
    const std::vector<bool> mask = {true, true, true, false, false};
    Matrix got = self_attend(x, 1, w, mask);
    Matrix z = matmul(x, w);
    Matrix ref = scaled_dot_attention(z, z, z, mask);
    REQUIRE(got.rows() == ref.rows());
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(got.raw()[i] == doctest::Approx(ref.raw()[i]).epsilon(1e-13));
}

TEST_CASE("two heads equal manual column-split attention") {
    std::mt19937_64 rng(59);
    Matrix x = random_matrix(6, 5, rng);
    Matrix w = random_matrix(5, 8, rng);
    const std::vector<bool> mask(6, true);
    Matrix got = self_attend(x, 2, w, mask);
    Matrix z = matmul(x, w);
    for (std::size_t h = 0; h < 2; ++h) {
        Matrix zh(6, 4);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 4; ++c) zh(r, c) = z(r, h * 4 + c);
        Matrix head = scaled_dot_attention(zh, zh, zh, mask);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                CHECK(got(r, h * 4 + c) == doctest::Approx(head(r, c)).epsilon(1e-13));
    }
    CHECK_THROWS_AS(self_attend(x, 3, w, mask), ShapeError);  // 8 % 3 != 0
}

TEST_CASE("zero inputs encode to zero") {
    GrsaConfig cfg{2, 2, 4, 6, 3, 5};
    std::mt19937_64 rng(61);
    GrsaParams params = random_grsa_params(cfg, 5, rng);
    EmbeddingMatrix p;
    p.values = Matrix(5, 3);
    p.pad_mask = {true, true, true, false, false};
    p.token_rows.assign(5, -1);
    Matrix fused = grsa_encode(Matrix(5, 5), Matrix(5, 5), Matrix(5, 5), p, params, cfg);
    REQUIRE(fused.rows() == 5);
    REQUIRE(fused.cols() == 6);
    for (double v : fused.raw()) CHECK(v == 0.0);
}

TEST_CASE("encoder composition matches manual per-representation assembly") {
    GrsaConfig cfg{2, 2, 4, 7, 4, 6};
    const std::size_t l = 6;
    std::mt19937_64 rng(67);
    GrsaParams params = random_grsa_params(cfg, l, rng);
    Matrix s_ast = random_matrix(l, l, rng);
    Matrix s_cfg = random_matrix(l, l, rng);
    Matrix s_dfg = random_matrix(l, l, rng);
    EmbeddingMatrix p;
    p.values = random_matrix(l, cfg.d_emb, rng);
    p.pad_mask = {true, true, true, true, false, false};
    p.token_rows.assign(l, -1);

    Matrix fused = grsa_encode(s_ast, s_cfg, s_dfg, p, params, cfg);

    Matrix concat(l, 4 * cfg.d_model);
    const Matrix parts[4] = {
        self_attend(s_ast, cfg.heads_graph, params.w_in_ast, p.pad_mask),
        self_attend(s_cfg, cfg.heads_graph, params.w_in_cfg, p.pad_mask),
        self_attend(s_dfg, cfg.heads_graph, params.w_in_dfg, p.pad_mask),
        self_attend(p.values, cfg.heads_pls, params.w_in_pls, p.pad_mask),
    };
    for (int b = 0; b < 4; ++b)
        for (std::size_t r = 0; r < l; ++r)
            for (std::size_t c = 0; c < cfg.d_model; ++c)
                concat(r, b * cfg.d_model + c) = parts[b](r, c);
    Matrix expect = matmul(concat, params.w_out);
    REQUIRE(fused.rows() == expect.rows());
    for (std::size_t i = 0; i < fused.size(); ++i)
        CHECK(fused.raw()[i] == doctest::Approx(expect.raw()[i]).epsilon(1e-12));
}

TEST_CASE("analytic gradients agree with finite differences") {
    GrsaConfig cfg{2, 2, 4, 5, 3, 6};
    const std::size_t l = 6;
    std::mt19937_64 rng(71);
    GrsaParams params = random_grsa_params(cfg, l, rng);
    const Matrix s_ast = random_matrix(l, l, rng);
    const Matrix s_cfg = random_matrix(l, l, rng);
    const Matrix s_dfg = random_matrix(l, l, rng);
    EmbeddingMatrix p;
    p.values = random_matrix(l, cfg.d_emb, rng);
    p.pad_mask = {true, true, true, true, true, false};
    p.token_rows.assign(l, -1);
    // fixed random linear readout of the fused output as the scalar loss
    const Matrix readout = random_matrix(l, cfg.d_fuse, rng);

    auto flatten = [&](GrsaParams& gp, const Matrix* extra) {
        std::vector<double> flat;
        for (Matrix* m : param_list(gp))
            flat.insert(flat.end(), m->raw().begin(), m->raw().end());
        if (extra) flat.insert(flat.end(), extra->raw().begin(), extra->raw().end());
        return flat;
    };
    auto loss = [&](const std::vector<double>& flat) {
        GrsaParams gp = params;
        EmbeddingMatrix pe = p;
        std::size_t off = 0;
        for (Matrix* m : param_list(gp)) {
            std::copy(flat.begin() + off, flat.begin() + off + m->size(), m->raw().begin());
            off += m->size();
        }
        std::copy(flat.begin() + off, flat.end(), pe.values.raw().begin());
        Matrix fused = grsa_encode(s_ast, s_cfg, s_dfg, pe, gp, cfg);
        double s = 0.0;
        for (std::size_t i = 0; i < fused.size(); ++i) s += fused.raw()[i] * readout.raw()[i];
        return s;
    };

    GrsaCache cache;
    grsa_encode(s_ast, s_cfg, s_dfg, p, params, cfg, &cache);
    GrsaGrads grads = zero_grsa_grads(params);
    Matrix d_emb = grsa_backward(cache, params, cfg, p.pad_mask, readout, grads);

    std::vector<double> analytic;
    for (Matrix* m : {&grads.w_in_ast, &grads.w_in_cfg, &grads.w_in_dfg, &grads.w_in_pls,
                      &grads.w_out})
        analytic.insert(analytic.end(), m->raw().begin(), m->raw().end());
    analytic.insert(analytic.end(), d_emb.raw().begin(), d_emb.raw().end());

    const double err = grad_check(loss, flatten(params, &p.values), analytic, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("config validation") {
    GrsaConfig bad{3, 2, 8, 16, 8, 4};  // 8 % 3 != 0
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    GrsaConfig zero{1, 1, 0, 4, 4, 4};
    CHECK_THROWS_AS(zero.validate(), ShapeError);
    GrsaConfig ok{4, 2, 8, 16, 8, 4};
    CHECK_NOTHROW(ok.validate());
}
