#include "dvs/matrix.hpp"

#include <cmath>

namespace dvs {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::check_finite(const std::string& what) const {
    for (double v : data_)
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite value in " + what);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: (" + std::to_string(a.rows()) + "," + std::to_string(a.cols()) +
                         ") x (" + std::to_string(b.rows()) + "," + std::to_string(b.cols()) + ")");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.raw()[i] += b.raw()[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.raw()) v *= s;
    return c;
}

void add_in_place(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add_in_place: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.raw()[i] += b.raw()[i];
}

Matrix softmax_rows(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double e = std::exp(a(i, j) - mx);
            out(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= sum;
    }
    return out;
}

std::size_t conv1d_out_len(std::size_t len, std::size_t width, std::size_t stride) {
    if (width > len) throw ShapeError("conv1d: kernel wider than sequence");
    if (stride < 1) throw ShapeError("conv1d: stride must be >= 1");
    return (len - width) / stride + 1;
}

Matrix conv1d(const Matrix& x, const Matrix& kernels, std::size_t width, std::size_t stride) {
    const std::size_t d = x.cols();
    if (kernels.cols() != width * d)
        throw ShapeError("conv1d: kernel width " + std::to_string(kernels.cols()) +
                         " != " + std::to_string(width * d));
    const std::size_t out_len = conv1d_out_len(x.rows(), width, stride);
    Matrix out(out_len, kernels.rows());
    for (std::size_t p = 0; p < out_len; ++p) {
        const std::size_t base = p * stride;
        for (std::size_t k = 0; k < kernels.rows(); ++k) {
            double acc = 0.0;
            for (std::size_t w = 0; w < width; ++w)
                for (std::size_t c = 0; c < d; ++c)
                    acc += x(base + w, c) * kernels(k, w * d + c);
            out(p, k) = acc;
        }
    }
    return out;
}

}  // namespace dvs
