#include <cmath>
#include <numbers>

#include "doctest.h"
#include "implisat/errors.hpp"
#include "implisat/parallel.hpp"
#include "implisat/rng.hpp"
#include "implisat/tensor.hpp"

using namespace implisat;

namespace {

Matrix naive_product(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) {
                s += a(i, p) * b(p, j);
            }
            c(i, j) = s;
        }
    }
    return c;
}

}  // namespace

TEST_CASE("matmul small cases") {
    CHECK(matmul(Matrix{{1, 0}, {0, 1}}, Matrix{{3}, {4}}) == Matrix{{3}, {4}});
    CHECK(matmul(Matrix{{1, 2}}, Matrix{{3}, {4}}) == Matrix{{11}});
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    try {
        matmul(Matrix(2, 3), Matrix(4, 5));
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("(2x3)") != std::string::npos);
        CHECK(std::string(e.what()).find("(4x5)") != std::string::npos);
    }
}

TEST_CASE("matmul matches the triple-loop reference") {
    Rng rng(7);
    const Matrix a = uniform(rng, 5, 7, -1, 1);
    const Matrix b = uniform(rng, 7, 3, -1, 1);
    // Both accumulate in increasing inner index, so agreement is exact.
    CHECK(bitwise_equal(matmul(a, b), naive_product(a, b)));
    CHECK(bitwise_equal(matmul_tn(transpose(a), b), naive_product(a, b)));
    CHECK(bitwise_equal(matmul_nt(a, transpose(b)), naive_product(a, b)));
}

TEST_CASE("matmul is associative within 1e-9 relative") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto r = 1 + rng.below(8), k = 1 + rng.below(8), s = 1 + rng.below(8),
                   c = 1 + rng.below(8);
        const Matrix a = uniform(rng, r, k, -2, 2);
        const Matrix b = uniform(rng, k, s, -2, 2);
        const Matrix d = uniform(rng, s, c, -2, 2);
        const Matrix left = matmul(matmul(a, b), d);
        const Matrix right = matmul(a, matmul(b, d));
        double scale_ref = 1.0;
        for (double v : left.data()) scale_ref = std::max(scale_ref, std::abs(v));
        CHECK(max_abs_diff(left, right) <= 1e-9 * scale_ref);
    }
}

TEST_CASE("matmul result is independent of the thread count") {
    Rng rng(3);
    const Matrix a = uniform(rng, 300, 200, -1, 1);
    const Matrix b = uniform(rng, 200, 150, -1, 1);
    set_max_threads(1);
    const Matrix serial = matmul(a, b);
    const Matrix serial_tn = matmul_tn(transpose(a), b);
    set_max_threads(4);
    CHECK(bitwise_equal(serial, matmul(a, b)));
    CHECK(bitwise_equal(serial_tn, matmul_tn(transpose(a), b)));
    set_max_threads(1);
}

TEST_CASE("hadamard") {
    Rng rng(5);
    const Matrix x = uniform(rng, 3, 3, -1, 1);
    const Matrix y = uniform(rng, 3, 3, -1, 1);
    CHECK(hadamard(Matrix::ones(3, 3), x) == x);
    CHECK(hadamard(Matrix::zeros(3, 3), x) == Matrix::zeros(3, 3));
    const Matrix h = hadamard(x, y);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(h(i, j) == x(i, j) * y(i, j));
        }
    }
    CHECK(bitwise_equal(hadamard(x, y), hadamard(y, x)));
    CHECK_THROWS_AS(hadamard(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST_CASE("elementwise maps and broadcasting add") {
    CHECK(map_sin(Matrix::zeros(2, 2)) == Matrix::zeros(2, 2));
    CHECK(map_cos(Matrix::zeros(2, 2)) == Matrix::ones(2, 2));
    CHECK(add(Matrix{{1, 1}, {2, 2}}, Matrix{{10, 20}}) == Matrix{{11, 21}, {12, 22}});
    CHECK(add(Matrix{{1, 1}}, Matrix{{2, 3}}) == Matrix{{3, 4}});
    CHECK_THROWS_AS(add(Matrix(2, 2), Matrix(1, 3)), ShapeError);
    CHECK_THROWS_AS(add(Matrix(2, 2), Matrix(2, 1)), ShapeError);
    CHECK(scale(Matrix{{1, -2}}, 3.0) == Matrix{{3, -6}});
    CHECK(column_sums(Matrix{{1, 2}, {3, 4}}) == Matrix{{4, 6}});
}

TEST_CASE("finiteness sweep flags NaN and Inf") {
    Matrix m = Matrix::ones(2, 2);
    CHECK(all_finite(m));
    m(1, 1) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(all_finite(m));
    m(1, 1) = std::nan("");
    CHECK_FALSE(all_finite(m));
}

TEST_CASE("uniform draws are reproducible and in range") {
    Rng a(42), b(42);
    CHECK(bitwise_equal(uniform(a, 4, 5, -1, 1), uniform(b, 4, 5, -1, 1)));

    Rng rng(2024);
    const double lo = -2.0 * std::numbers::pi, hi = 2.0 * std::numbers::pi;
    const Matrix draws = uniform(rng, 100, 100, lo, hi);
    double sum = 0.0;
    for (double v : draws.data()) {
        CHECK(v >= lo);
        CHECK(v < hi);
        sum += v;
    }
    CHECK(std::abs(sum / 10000.0) < 0.1);
    CHECK_THROWS_AS(uniform(rng, 1, 1, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(uniform(rng, 1, 1, 2.0, 1.0), DomainError);
}

TEST_CASE("rng stream is pinned") {
    // First outputs of xoshiro256** after SplitMix64 seeding of 0; any change
    // to the generator breaks checkpoint and log reproducibility.
    Rng rng(0);
    const std::uint64_t first = rng.next_u64();
    Rng again(0);
    CHECK(again.next_u64() == first);
    CHECK(first == 0x99ec5f36cb75f2b4ULL);
}

TEST_CASE("bounded integers are unbiased in small ranges") {
    Rng rng(9);
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 30000; ++i) {
        ++counts[rng.below(3)];
    }
    for (int c : counts) {
        CHECK(std::abs(c - 10000) < 400);
    }
    CHECK_THROWS_AS(rng.below(0), DomainError);
}
