#include "implisat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "implisat/errors.hpp"
#include "implisat/parallel.hpp"

namespace implisat {

namespace {

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

template <class F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    auto src = a.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = f(src[i]);
    }
    return out;
}

// c[i, :] = sum_p a[i, p] * b[p, :], accumulated in increasing p for every cell.
// Eight doubles; lowers to one AVX-512 register or two AVX2 registers.
using Vec8 = double __attribute__((vector_size(64)));

inline Vec8 load8(const double* p) {
    Vec8 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

// Accumulates an RB x (8*NV) tile of C in registers. Every cell still sums
// its products in increasing p, so tiling leaves results bit-identical to
// the plain triple loop. A is addressed through strides so the same tile
// serves both A*B and A^T*B.
template <std::size_t RB, std::size_t NV>
inline void gemm_tile(const double* a, std::size_t a_row_stride, std::size_t a_inner_stride,
                      const double* b, double* c, std::size_t i0, std::size_t j0,
                      std::size_t inner, std::size_t cols) {
    Vec8 acc[RB][NV] = {};
    for (std::size_t p = 0; p < inner; ++p) {
        const double* brow = b + p * cols + j0;
        Vec8 bv[NV];
        for (std::size_t v = 0; v < NV; ++v) bv[v] = load8(brow + 8 * v);
        for (std::size_t r = 0; r < RB; ++r) {
            const double av = a[(i0 + r) * a_row_stride + p * a_inner_stride];
            for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
        }
    }
    for (std::size_t r = 0; r < RB; ++r) {
        std::memcpy(c + (i0 + r) * cols + j0, &acc[r][0], sizeof(Vec8) * NV);
    }
}

// Scalar tile for the column remainder, same summation order.
template <std::size_t RB>
inline void gemm_tile_scalar(const double* a, std::size_t a_row_stride, std::size_t a_inner_stride,
                             const double* b, double* c, std::size_t i0, std::size_t j,
                             std::size_t inner, std::size_t cols) {
    double acc[RB] = {};
    for (std::size_t p = 0; p < inner; ++p) {
        const double bv = b[p * cols + j];
        for (std::size_t r = 0; r < RB; ++r) {
            acc[r] += a[(i0 + r) * a_row_stride + p * a_inner_stride] * bv;
        }
    }
    for (std::size_t r = 0; r < RB; ++r) c[(i0 + r) * cols + j] = acc[r];
}

template <std::size_t RB>
void gemm_row_block(const double* a, std::size_t ars, std::size_t ais, const double* b, double* c,
                    std::size_t i0, std::size_t inner, std::size_t cols) {
    std::size_t j0 = 0;
    for (; j0 + 16 <= cols; j0 += 16) gemm_tile<RB, 2>(a, ars, ais, b, c, i0, j0, inner, cols);
    for (; j0 + 8 <= cols; j0 += 8) gemm_tile<RB, 1>(a, ars, ais, b, c, i0, j0, inner, cols);
    for (; j0 < cols; ++j0) gemm_tile_scalar<RB>(a, ars, ais, b, c, i0, j0, inner, cols);
}

// C rows [row_begin, row_end) of A*B, where A(i, p) = a[i*ars + p*ais].
void gemm_rows(const double* a, std::size_t ars, std::size_t ais, const double* b, double* c,
               std::size_t row_begin, std::size_t row_end, std::size_t inner, std::size_t cols) {
    std::size_t i = row_begin;
    for (; i + 4 <= row_end; i += 4) gemm_row_block<4>(a, ars, ais, b, c, i, inner, cols);
    for (; i < row_end; ++i) gemm_row_block<1>(a, ars, ais, b, c, i, inner, cols);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("Matrix: ragged initializer");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

std::string Matrix::shape_str() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) &&
           (a.size() == 0 ||
            std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        shape_fail("max_abs_diff", a, b);
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        shape_fail("matmul", a, b);
    }
    Matrix c(a.rows(), b.cols());
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    double* cp = c.data().data();
    const std::size_t inner = a.cols();
    const std::size_t cols = b.cols();
    parallel_for(a.rows(), a.rows() * inner * cols, [&](std::size_t lo, std::size_t hi) {
        gemm_rows(ap, inner, 1, bp, cp, lo, hi, inner, cols);
    });
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        shape_fail("matmul_tn", a, b);
    }
    const std::size_t inner = a.rows();
    const std::size_t out_rows = a.cols();
    const std::size_t cols = b.cols();
    Matrix c(out_rows, cols);
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    double* cp = c.data().data();
    parallel_for(out_rows, inner * out_rows * cols, [&](std::size_t lo, std::size_t hi) {
        gemm_rows(ap, 1, out_rows, bp, cp, lo, hi, inner, cols);
    });
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        shape_fail("matmul_nt", a, b);
    }
    return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        shape_fail("hadamard", a, b);
    }
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        c.data()[i] = a.data()[i] * b.data()[i];
    }
    return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.same_shape(b)) {
        Matrix c(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.size(); ++i) {
            c.data()[i] = a.data()[i] + b.data()[i];
        }
        return c;
    }
    if (b.rows() != 1 || b.cols() != a.cols()) {
        shape_fail("add", a, b);
    }
    Matrix c(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row(r);
        auto dst = c.row(r);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            dst[j] = src[j] + b(0, j);
        }
    }
    return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        shape_fail("subtract", a, b);
    }
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        c.data()[i] = a.data()[i] - b.data()[i];
    }
    return c;
}

Matrix scale(const Matrix& a, double s) {
    return map(a, [s](double v) { return v * s; });
}

Matrix map_sin(const Matrix& a) {
    return map(a, [](double v) { return std::sin(v); });
}

Matrix map_cos(const Matrix& a) {
    return map(a, [](double v) { return std::cos(v); });
}

Matrix column_sums(const Matrix& a) {
    Matrix s(1, a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto src = a.row(r);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            s(0, j) += src[j];
        }
    }
    return s;
}

void accumulate(Matrix& acc, const Matrix& x) {
    if (!acc.same_shape(x)) {
        shape_fail("accumulate", acc, x);
    }
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc.data()[i] += x.data()[i];
    }
}

Matrix uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    if (!(lo < hi)) {
        throw DomainError("uniform: lo must be below hi, got [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + ")");
    }
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

}  // namespace implisat
