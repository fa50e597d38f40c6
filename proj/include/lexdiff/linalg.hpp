#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lexdiff {

// Dense row-major matrix of doubles. All loss math runs in double
// precision; the contrastive temperatures make float overflow exp easily.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// x += alpha * y
void axpy(double alpha, std::span<const double> y, std::span<double> x);

// Fixed-order left-to-right sum; reductions stay deterministic.
double sum(std::span<const double> v);
double mean(std::span<const double> v);

}  // namespace lexdiff
