#include <doctest.h>

#include <cmath>
#include <random>

#include "dvs/matrix.hpp"
#include "dvs/numerics.hpp"

using namespace dvs;

namespace {

// independent long-double softmax used as the reference
std::vector<double> softmax_oracle(const std::vector<double>& row) {
    long double mx = row[0];
    for (double v : row) mx = std::max<long double>(mx, v);
    long double sum = 0.0L;
    std::vector<long double> e;
    for (double v : row) {
        e.push_back(expl(static_cast<long double>(v) - mx));
        sum += e.back();
    }
    std::vector<double> out;
    for (long double v : e) out.push_back(static_cast<double>(v / sum));
    return out;
}

// naive triple-loop convolution
Matrix conv_oracle(const Matrix& x, const Matrix& k, std::size_t width, std::size_t stride) {
    const std::size_t d = x.cols();
    const std::size_t out_len = (x.rows() - width) / stride + 1;
    Matrix out(out_len, k.rows());
    for (std::size_t p = 0; p < out_len; ++p)
        for (std::size_t f = 0; f < k.rows(); ++f)
            for (std::size_t w = 0; w < width; ++w)
                for (std::size_t c = 0; c < d; ++c)
                    out(p, f) += x(p * stride + w, c) * k(f, w * d + c);
    return out;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Matrix m(r, c);
    for (double& v : m.raw()) v = dist(rng);
    return m;
}

}  // namespace

TEST_CASE("matmul identity") {
    std::mt19937_64 rng(1);
    Matrix b = random_matrix(3, 4, rng);
    CHECK(matmul(Matrix::identity(3), b) == b);
}

TEST_CASE("matmul hand example") {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 1, {0, 1});
    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == doctest::Approx(2));
    CHECK(c(1, 0) == doctest::Approx(4));
}

TEST_CASE("matmul shape mismatch") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("softmax symmetric row") {
    Matrix a(1, 2, {0, 0});
    Matrix s = softmax_rows(a);
    CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(s(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("softmax large values do not overflow") {
    Matrix a(1, 2, {1000.0, 0.0});
    Matrix s = softmax_rows(a);
    CHECK(std::isfinite(s(0, 0)));
    CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax matches high-precision oracle; rows sum to 1") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix a = random_matrix(4, 5, rng);
        Matrix s = softmax_rows(a);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            std::vector<double> row;
            for (std::size_t j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
            auto ref = softmax_oracle(row);
            double sum = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) {
                CHECK(std::fabs(s(i, j) - ref[j]) < 1e-12);
                CHECK(s(i, j) > 0.0);
                CHECK(s(i, j) < 1.0);
                sum += s(i, j);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
    // fixed row [1,2,3]
    Matrix a(1, 3, {1, 2, 3});
    Matrix s = softmax_rows(a);
    auto ref = softmax_oracle({1, 2, 3});
    for (int j = 0; j < 3; ++j) CHECK(std::fabs(s(0, j) - ref[j]) < 1e-12);
}

TEST_CASE("conv1d width-1 is a per-position linear map") {
    std::mt19937_64 rng(11);
    Matrix x = random_matrix(6, 3, rng);
    Matrix k = random_matrix(2, 3, rng);
    Matrix out = conv1d(x, k, 1, 1);
    CHECK(out.rows() == 6);
    for (std::size_t p = 0; p < 6; ++p)
        for (std::size_t f = 0; f < 2; ++f) {
            double acc = 0;
            for (std::size_t c = 0; c < 3; ++c) acc += x(p, c) * k(f, c);
            CHECK(out(p, f) == doctest::Approx(acc).epsilon(1e-14));
        }
}

TEST_CASE("conv1d length formula") {
    Matrix x(5, 2);
    Matrix k(1, 6);
    CHECK(conv1d(x, k, 3, 1).rows() == 3);
    CHECK_THROWS_AS(conv1d(Matrix(2, 2), Matrix(1, 6), 3, 1), ShapeError);
}

TEST_CASE("conv1d matches brute-force oracle") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = 4 + rng() % 8;
        const std::size_t d = 1 + rng() % 4;
        const std::size_t width = 1 + rng() % std::min<std::size_t>(len, 3);
        const std::size_t stride = 1 + rng() % 2;
        Matrix x = random_matrix(len, d, rng);
        Matrix k = random_matrix(1 + rng() % 4, width * d, rng);
        Matrix got = conv1d(x, k, width, stride);
        Matrix ref = conv_oracle(x, k, width, stride);
        REQUIRE(got.rows() == ref.rows());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got.raw()[i] - ref.raw()[i]) < 1e-12);
    }
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    std::vector<double> p = {1.0, -2.0, 3.0};
    AdamState st(3, 1e-3);
    adam_step(p, {0, 0, 0}, st);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
    CHECK(p[2] == 3.0);
    CHECK(st.step == 1);
}

TEST_CASE("adam first step uses bias correction") {
    // with constant gradient g the first update is exactly -lr * g/|g|
    // (up to epsilon): mhat = g, vhat = g^2
    std::vector<double> p = {0.0};
    AdamState st(1, 0.01);
    adam_step(p, {0.5}, st);
    const double expected = -0.01 * 0.5 / (std::sqrt(0.25) + st.epsilon);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam constant gradient approaches sign-structured steps") {
    // closed form under fixed g: mhat = g, vhat = g^2 for all t, so every
    // update is -lr * sign-magnitude g/|g| (modulo epsilon)
    std::vector<double> p = {0.0, 0.0};
    AdamState st(2, 1e-3);
    const std::vector<double> g = {2.0, -0.25};
    for (int t = 0; t < 100; ++t) adam_step(p, g, st);
    CHECK(p[0] == doctest::Approx(-100 * 1e-3).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(+100 * 1e-3).epsilon(1e-6));
}

TEST_CASE("grad_check on quadratic") {
    std::vector<double> p = {0.3, -1.2, 2.0};
    auto f = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return s;
    };
    std::vector<double> g = {2 * p[0], 2 * p[1], 2 * p[2]};
    CHECK(grad_check(f, p, g, 1e-5) < 1e-8);

    // deliberately doubled gradient: |2a - a| / (|a|+|2a|) = 1/3
    std::vector<double> wrong = {4 * p[0], 4 * p[1], 4 * p[2]};
    CHECK(grad_check(f, p, wrong, 1e-5) == doctest::Approx(1.0 / 3.0).epsilon(1e-4));
}
