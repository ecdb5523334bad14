#include "robedit/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "robedit/errors.hpp"

namespace robedit {

namespace {

void check_finite(const Matrix& m, const char* op) {
    if (!m.all_finite()) {
        throw NumericError(std::string(op) + " produced a non-finite value");
    }
}

}  // namespace

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * static_cast<size_t>(cols), 0.0f) {
    if (rows < 0 || cols < 0) {
        throw DimensionError("matrix dimensions must be non-negative");
    }
}

Matrix::Matrix(int rows, int cols, std::vector<float> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 0 || cols < 0 || data_.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols)) {
        throw DimensionError("matrix data length does not match rows x cols");
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        m.at(i, i) = 1.0f;
    }
    return m;
}

bool Matrix::all_finite() const noexcept {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    const int n = a.cols();
    for (int i = 0; i < a.rows(); ++i) {
        std::span<const float> arow = a.row(i);
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                acc += static_cast<double>(arow[k]) * static_cast<double>(b.at(k, j));
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    check_finite(out, "matmul");
    return out;
}

Matrix row_softmax(const Matrix& a) {
    if (!a.all_finite()) {
        throw NumericError("row_softmax: input contains non-finite values");
    }
    Matrix out(a.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i) {
        std::span<const float> in = a.row(i);
        std::span<float> o = out.row(i);
        double mx = in[0];
        for (float v : in) {
            mx = std::max(mx, static_cast<double>(v));
        }
        double sum = 0.0;
        for (int j = 0; j < a.cols(); ++j) {
            const double e = std::exp(static_cast<double>(in[j]) - mx);
            o[j] = static_cast<float>(e);
            sum += e;
        }
        for (int j = 0; j < a.cols(); ++j) {
            o[j] = static_cast<float>(o[j] / sum);
        }
    }
    check_finite(out, "row_softmax");
    return out;
}

Matrix gelu(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const double inv_sqrt2 = 0.70710678118654752440;
    for (size_t i = 0; i < x.data().size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = static_cast<float>(v * 0.5 * (1.0 + std::erf(v * inv_sqrt2)));
    }
    check_finite(out, "gelu");
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionError("squared_distance: length mismatch");
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (float v : a.data()) {
        acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(acc);
}

}  // namespace robedit
