#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvs {

/// Dense row-major matrix of doubles. The only numeric container used by the
/// pipeline; all shapes are desk-scale so no sparse storage is provided.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool operator==(const Matrix& o) const = default;

    /// Throws if any entry is NaN or infinite. Called at module boundaries.
    void check_finite(const std::string& what) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// C = A * B with sequential row-major accumulation (deterministic order).
Matrix matmul(const Matrix& a, const Matrix& b);

/// B = A^T.
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);

/// Row-wise softmax with per-row max subtraction. Rows of the result sum to 1.
Matrix softmax_rows(const Matrix& a);

/// Valid (no padding) 1-D convolution along the row axis of x (L x d).
/// Each kernel is one row of `kernels` with width*d coefficients laid out
/// position-major; output is out_len x n_kernels.
Matrix conv1d(const Matrix& x, const Matrix& kernels, std::size_t width, std::size_t stride);

/// Output length of conv1d for the given geometry.
std::size_t conv1d_out_len(std::size_t len, std::size_t width, std::size_t stride);

}  // namespace dvs
