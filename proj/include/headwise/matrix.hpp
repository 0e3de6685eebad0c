#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "headwise/error.hpp"

namespace headwise {

// Read-only strided window into row-major float storage.
struct ConstMatrixView {
    const float* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t stride = 0;

    [[nodiscard]] float operator()(std::size_t r, std::size_t c) const { return data[r * stride + c]; }
    [[nodiscard]] const float* row(std::size_t r) const { return data + r * stride; }
};

struct MatrixView {
    float* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t stride = 0;

    [[nodiscard]] float& operator()(std::size_t r, std::size_t c) const { return data[r * stride + c]; }
    [[nodiscard]] float* row(std::size_t r) const { return data + r * stride; }
    operator ConstMatrixView() const { return {data, rows, cols, stride}; }  // NOLINT
};

// Dense row-major fp32 matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw Error(ErrorKind::ShapeMismatch, "matrix data length " + std::to_string(data_.size()) + " != " +
                                                      std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    [[nodiscard]] float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<float> data() noexcept { return data_; }
    [[nodiscard]] std::span<const float> data() const noexcept { return data_; }

    [[nodiscard]] MatrixView view() { return {data_.data(), rows_, cols_, cols_}; }
    [[nodiscard]] ConstMatrixView view() const { return {data_.data(), rows_, cols_, cols_}; }

    [[nodiscard]] ConstMatrixView cols_view(std::size_t begin, std::size_t count) const {
        return {data_.data() + begin, rows_, count, cols_};
    }
    [[nodiscard]] MatrixView cols_view(std::size_t begin, std::size_t count) {
        return {data_.data() + begin, rows_, count, cols_};
    }
    [[nodiscard]] ConstMatrixView rows_view(std::size_t begin, std::size_t count) const {
        return {data_.data() + begin * cols_, count, cols_, cols_};
    }

    [[nodiscard]] static Matrix from_view(ConstMatrixView v) {
        Matrix m(v.rows, v.cols);
        for (std::size_t r = 0; r < v.rows; ++r) {
            std::copy_n(v.row(r), v.cols, m.data_.data() + r * v.cols);
        }
        return m;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// out = a * b[:, col_begin : col_begin + out.cols]. Each output element is a
// fixed-order k-ascending sum, so computing a column subset gives bit-identical
// values to the full product.
inline void matmul_into(ConstMatrixView a, ConstMatrixView b, std::size_t col_begin, MatrixView out) {
    if (a.cols != b.rows || out.rows != a.rows || col_begin + out.cols > b.cols) {
        throw Error(ErrorKind::ShapeMismatch, "matmul " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                                  " * " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
    for (std::size_t i = 0; i < a.rows; ++i) {
        float* o = out.row(i);
        std::fill_n(o, out.cols, 0.0f);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const float aik = a(i, k);
            const float* brow = b.row(k) + col_begin;
            for (std::size_t j = 0; j < out.cols; ++j) {
                o[j] += aik * brow[j];
            }
        }
    }
}

inline Matrix matmul(ConstMatrixView a, ConstMatrixView b) {
    Matrix out(a.rows, b.cols);
    matmul_into(a, b, 0, out.view());
    return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) { return matmul(a.view(), b.view()); }

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::ShapeMismatch, "comparing spans of different length");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
        if (!std::isfinite(d)) {
            return INFINITY;
        }
        worst = std::max(worst, d);
    }
    return worst;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorKind::ShapeMismatch, "comparing matrices of different shape");
    }
    return max_abs_diff(a.data(), b.data());
}

} // namespace headwise
