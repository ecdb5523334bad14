#pragma once

#include <span>
#include <vector>

namespace robedit {

// Dense row-major float32 matrix. All reductions over its elements
// (matmul dot products, norms, MSE) accumulate in double.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);
    Matrix(int rows, int cols, std::vector<float> data);

    static Matrix identity(int n);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    float at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    std::span<float> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
    std::span<const float> row(int r) const {
        return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
    }

    std::vector<float>& data() noexcept { return data_; }
    const std::vector<float>& data() const noexcept { return data_; }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const noexcept;

    bool operator==(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<float> data_;
};

// result[i][j] = sum_k a[i][k] * b[k][j], double accumulation.
Matrix matmul(const Matrix& a, const Matrix& b);

// Per-row softmax with max-subtraction; rows sum to 1 within 1e-5.
Matrix row_softmax(const Matrix& a);

// Elementwise x * Phi(x) with the exact Gaussian CDF (erf-based).
Matrix gelu(const Matrix& x);

Matrix transpose(const Matrix& a);

// Sum over all elements of (a - b)^2, double accumulation.
double squared_distance(std::span<const float> a, std::span<const float> b);

double frobenius_norm(const Matrix& a);

}  // namespace robedit
