#include "lexdiff/linalg.hpp"

#include <cassert>
#include <cmath>

namespace lexdiff {

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void axpy(double alpha, std::span<const double> y, std::span<double> x) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * y[i];
}

double sum(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

double mean(std::span<const double> v) {
    return v.empty() ? 0.0 : sum(v) / static_cast<double>(v.size());
}

}  // namespace lexdiff
