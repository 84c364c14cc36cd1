#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "implisat/rng.hpp"

namespace implisat {

/// Dense row-major 2-D array of doubles.
///
/// Every network quantity (weights, biases as 1xN rows, batched activations
/// with one sample per row, modulation matrices) is a Matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }
    static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    void fill(double value);

    // Value equality (so -0.0 == 0.0); use bitwise_equal for exact storage checks.
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool bitwise_equal(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix transpose(const Matrix& a);

Matrix hadamard(const Matrix& a, const Matrix& b);

/// Elementwise sum. A 1xN right operand is broadcast across every row of a
/// KxN left operand.
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix map_sin(const Matrix& a);
Matrix map_cos(const Matrix& a);

/// 1xN row of per-column sums, accumulated top to bottom.
Matrix column_sums(const Matrix& a);

/// acc += x (same shape).
void accumulate(Matrix& acc, const Matrix& x);

Matrix uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

}  // namespace implisat
