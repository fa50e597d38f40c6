#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "doctest.h"
#include "lexdiff/linalg.hpp"
#include "lexdiff/objectives.hpp"
#include "lexdiff/util.hpp"

using lexdiff::Matrix;
using lexdiff::Rng;
namespace obj = lexdiff::objectives;

namespace {

Matrix basis_rows(std::size_t p, std::initializer_list<std::size_t> axes) {
    Matrix m(axes.size(), p);
    std::size_t i = 0;
    for (std::size_t axis : axes) m(i++, axis) = 1.0;
    return m;
}

void normalize_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double n = lexdiff::l2_norm(m.row(i));
        for (double& v : m.row(i)) v /= n;
    }
}

Matrix random_unit_rows(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.normal();
    normalize_rows(m);
    return m;
}

// Gram-Schmidt on a random Gaussian matrix; rows orthonormal.
Matrix random_rotation(Rng& rng, std::size_t p) {
    Matrix q(p, p);
    for (double& v : q.data) v = rng.normal();
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double proj = lexdiff::dot(q.row(i), q.row(j));
            lexdiff::axpy(-proj, q.row(j), q.row(i));
        }
        double n = lexdiff::l2_norm(q.row(i));
        REQUIRE(n > 1e-8);
        for (double& v : q.row(i)) v /= n;
    }
    return q;
}

Matrix rotate_rows(const Matrix& m, const Matrix& rot) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            out(i, j) = lexdiff::dot(m.row(i), rot.row(j));
        }
    }
    return out;
}

Matrix rows_from_flat(std::span<const double> flat, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    std::copy(flat.begin(), flat.end(), m.data.begin());
    return m;
}

// Chain a free-vector gradient on unit rows back through row normalization:
// dL/draw = (dL/du - u (u . dL/du)) / |raw|.
Matrix chain_through_normalization(const Matrix& raw, const Matrix& grad_unit) {
    Matrix out(raw.rows, raw.cols);
    for (std::size_t i = 0; i < raw.rows; ++i) {
        double n = lexdiff::l2_norm(raw.row(i));
        std::vector<double> u(raw.cols);
        for (std::size_t j = 0; j < raw.cols; ++j) u[j] = raw(i, j) / n;
        double radial = lexdiff::dot(u, grad_unit.row(i));
        for (std::size_t j = 0; j < raw.cols; ++j) {
            out(i, j) = (grad_unit(i, j) - u[j] * radial) / n;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("regression loss matches hand-computed means") {
    std::vector<double> a{1, 2, 3};
    CHECK(obj::regression_loss(a, a) == 0.0);

    std::vector<double> p2{0, 0}, t2{1, -1};
    CHECK(obj::regression_loss(p2, t2) == doctest::Approx(1.0).epsilon(1e-15));

    std::vector<double> p3{2, -1, 0.5}, t3{1, 0, 0.5};
    CHECK(obj::regression_loss(p3, t3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    CHECK_THROWS(obj::regression_loss(p2, t3));
}

TEST_CASE("regression loss gradient is 2(p-y)/B and accumulates") {
    std::vector<double> p{2, -1, 0.5}, t{1, 0, 0.5};
    std::vector<double> g(3, 0.0);
    double l1 = obj::regression_loss_grad(p, t, g);
    CHECK(l1 == doctest::Approx(2.0 / 3.0));
    CHECK(g[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(-2.0 / 3.0).epsilon(1e-15));
    CHECK(g[2] == 0.0);

    obj::regression_loss_grad(p, t, g);
    CHECK(g[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("cvccl closed forms: single pair, orthonormal pairs at two temperatures") {
    Matrix a1 = basis_rows(3, {0});
    CHECK(std::abs(obj::cvccl_loss(a1, a1, 0.7)) < 1e-12);

    Matrix a = basis_rows(3, {0, 1});
    Matrix b = basis_rows(3, {0, 1});
    double expected_t1 = std::log1p(2.0 / std::exp(1.0));
    CHECK(obj::cvccl_loss(a, b, 1.0) == doctest::Approx(expected_t1).epsilon(1e-12));
    CHECK(expected_t1 == doctest::Approx(0.551445).epsilon(1e-6));

    double expected_t05 = std::log1p(2.0 / std::exp(2.0));
    CHECK(obj::cvccl_loss(a, b, 0.5) == doctest::Approx(expected_t05).epsilon(1e-12));
    CHECK(expected_t05 == doctest::Approx(0.2395448).epsilon(1e-6));
}

TEST_CASE("cvccl rejects non-unit rows and mismatched shapes") {
    Matrix a = basis_rows(3, {0, 1});
    Matrix bad = a;
    bad(0, 0) = 0.9;
    CHECK_THROWS(obj::cvccl_loss(a, bad, 1.0));
    Matrix wrong(3, 3);
    CHECK_THROWS(obj::cvccl_loss(a, wrong, 1.0));
}

TEST_CASE("cvccl is nonnegative and finite at sharp temperature") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix a = random_unit_rows(rng, 4, 6);
        Matrix b = random_unit_rows(rng, 4, 6);
        double l = obj::cvccl_loss(a, b, 0.01);
        CHECK(std::isfinite(l));
        CHECK(l >= 0.0);
    }
    // identical rows give similarity exactly 1: exponent 100 at tau=0.01
    Matrix same = basis_rows(2, {0, 0, 0});
    double l = obj::cvccl_loss(same, same, 0.01);
    CHECK(std::isfinite(l));
}

TEST_CASE("cvccl is invariant under batch permutation and shared rotation") {
    Rng rng(77);
    Matrix a = random_unit_rows(rng, 5, 4);
    Matrix b = random_unit_rows(rng, 5, 4);
    double base = obj::cvccl_loss(a, b, 0.2);

    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Matrix ap(5, 4), bp(5, 4);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            ap(i, j) = a(perm[i], j);
            bp(i, j) = b(perm[i], j);
        }
    }
    CHECK(obj::cvccl_loss(ap, bp, 0.2) == doctest::Approx(base).epsilon(1e-13));

    Matrix rot = random_rotation(rng, 4);
    Matrix ar = rotate_rows(a, rot);
    Matrix br = rotate_rows(b, rot);
    normalize_rows(ar);
    normalize_rows(br);
    CHECK(obj::cvccl_loss(ar, br, 0.2) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("affinity weights match brute force on 1000 random instances") {
    Rng rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t b = 2 + rng.index(6);
        double sigma = 0.2 + rng.real01() * 3.0;
        std::vector<double> y(b);
        for (double& v : y) v = rng.uniform(-5.0, 5.0);
        Matrix w = obj::affinity_weights(y, sigma);
        REQUIRE(w.rows == b);
        REQUIRE(w.cols == b);
        for (std::size_t i = 0; i < b; ++i) {
            CHECK(w(i, i) == 0.0);
            for (std::size_t j = 0; j < b; ++j) {
                if (i == j) continue;
                double gap = y[i] - y[j];
                double ref = std::exp(-gap * gap / (2.0 * sigma * sigma));
                CHECK(std::abs(w(i, j) - ref) < 1e-12);
                CHECK(w(i, j) == w(j, i));
                CHECK(w(i, j) >= 0.0);
                CHECK(w(i, j) <= 1.0);
            }
        }
    }
}

TEST_CASE("affinity worked values at sigma=1") {
    std::vector<double> y{0, 1, 3};
    Matrix w = obj::affinity_weights(y, 1.0);
    CHECK(w(0, 1) == doctest::Approx(0.6065306597126334).epsilon(1e-12));
    CHECK(w(0, 2) == doctest::Approx(0.011108996538242306).epsilon(1e-12));
    CHECK(w(1, 2) == doctest::Approx(0.1353352832366127).epsilon(1e-12));

    std::vector<double> same{2.5, 2.5};
    CHECK(obj::affinity_weights(same, 0.3)(0, 1) == 1.0);
}

TEST_CASE("affinity depends only on |gaps|: shift, negation, matched scaling") {
    std::vector<double> y{0.5, -1.25, 2.0, 0.75};
    Matrix base = obj::affinity_weights(y, 1.5);

    std::vector<double> shifted = y;
    for (double& v : shifted) v += 4.0;  // exactly representable shift
    Matrix ws = obj::affinity_weights(shifted, 1.5);
    for (std::size_t k = 0; k < base.data.size(); ++k) CHECK(ws.data[k] == base.data[k]);

    std::vector<double> negated = y;
    for (double& v : negated) v = -v;
    Matrix wn = obj::affinity_weights(negated, 1.5);
    for (std::size_t k = 0; k < base.data.size(); ++k) CHECK(wn.data[k] == base.data[k]);

    // power-of-two scale factor keeps gap/sigma bit-identical
    std::vector<double> doubled = y;
    for (double& v : doubled) v *= 2.0;
    Matrix wd = obj::affinity_weights(doubled, 3.0);
    for (std::size_t k = 0; k < base.data.size(); ++k) CHECK(wd.data[k] == base.data[k]);
}

TEST_CASE("oscl closed forms: B=2 zero, uniform ln 2, mixed-weight batch") {
    Rng rng(5);
    Matrix u2 = random_unit_rows(rng, 2, 4);
    std::vector<double> y2{0.0, 0.4};
    CHECK(std::abs(obj::oscl_loss(u2, y2, 0.5, 1.0)) < 1e-12);

    Matrix same(3, 4);
    for (std::size_t i = 0; i < 3; ++i) same(i, 1) = 1.0;
    std::vector<double> y3{0.0, 1.0, 2.0};
    CHECK(obj::oscl_loss(same, y3, 1.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // orthonormal rows also give uniform p = 1/2
    Matrix ortho = basis_rows(3, {0, 1, 2});
    CHECK(obj::oscl_loss(ortho, y3, 1.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix mixed = basis_rows(3, {0, 0, 1});
    std::vector<double> yfar{0.0, 0.0, 10.0};
    double near_term = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    double expected = (2.0 * near_term + std::log(2.0)) / 3.0;
    CHECK(obj::oscl_loss(mixed, yfar, 1.0, 1.0) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(0.439890).epsilon(1e-5));
}

TEST_CASE("oscl precondition and degenerate anchors") {
    Matrix u1 = basis_rows(3, {0});
    std::vector<double> y1{0.0};
    CHECK_THROWS(obj::oscl_loss(u1, y1, 1.0, 1.0));

    // every pairwise weight underflows exp: all anchors contribute zero
    Matrix u = basis_rows(3, {0, 1, 2});
    std::vector<double> yhuge{0.0, 1e9, 2e9};
    CHECK(obj::oscl_loss(u, yhuge, 1.0, 1.0) == 0.0);
}

TEST_CASE("oscl is permutation invariant and nonnegative") {
    Rng rng(91);
    Matrix u = random_unit_rows(rng, 6, 5);
    std::vector<double> y{0.1, -0.4, 0.9, 0.3, -1.2, 0.0};
    double base = obj::oscl_loss(u, y, 0.3, 0.8);
    CHECK(base >= 0.0);

    std::vector<std::size_t> perm{5, 2, 0, 4, 1, 3};
    Matrix up(6, 5);
    std::vector<double> yp(6);
    for (std::size_t i = 0; i < 6; ++i) {
        yp[i] = y[perm[i]];
        for (std::size_t j = 0; j < 5; ++j) up(i, j) = u(perm[i], j);
    }
    CHECK(obj::oscl_loss(up, yp, 0.3, 0.8) == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("composite loss is the weighted sum of parts") {
    obj::ObjectiveConfig cfg;
    cfg.lambda_cv = 0.0;
    cfg.lambda_ord = 0.0;
    CHECK(obj::composite_loss({2.5, 7.0, 9.0}, cfg) == 2.5);

    cfg.lambda_cv = 0.1;
    cfg.lambda_ord = 0.2;
    CHECK(obj::composite_loss({1.0, 0.5, 0.25}, cfg) == doctest::Approx(1.10).epsilon(1e-15));
    CHECK(obj::composite_loss({0.0, 0.0, 0.0}, cfg) == 0.0);
}

TEST_CASE("objective config validation") {
    obj::ObjectiveConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.tau_cvccl = 0.0;
    CHECK_THROWS_AS(cfg.validate(), lexdiff::ConfigError);
    cfg = {};
    cfg.sigma = -1.0;
    CHECK_THROWS_AS(cfg.validate(), lexdiff::ConfigError);
    cfg = {};
    cfg.lambda_cv = -0.1;
    CHECK_THROWS_AS(cfg.validate(), lexdiff::ConfigError);
}

TEST_CASE("finite difference harness self-test") {
    auto square = [](std::span<const double> x) { return x[0] * x[0]; };
    std::vector<double> x{3.0};
    std::vector<double> g{6.0};
    CHECK(obj::finite_difference_check(square, x, g, 1e-5) < 1e-9);

    auto constant = [](std::span<const double>) { return 4.2; };
    std::vector<double> gz{0.0};
    CHECK(obj::finite_difference_check(constant, x, gz, 1e-5) == 0.0);

    std::vector<double> fd = obj::central_differences(square, x, 1e-5);
    CHECK(fd[0] == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("cvccl gradient matches central differences through normalization") {
    Rng rng(2024);
    const std::size_t b = 3, p = 4;
    const double tau = 0.05;
    Matrix raw_a(b, p), raw_b(b, p);
    for (double& v : raw_a.data) v = rng.normal();
    for (double& v : raw_b.data) v = rng.normal();

    auto loss_of = [&](std::span<const double> flat) {
        Matrix a = rows_from_flat(flat.subspan(0, b * p), b, p);
        Matrix bb = rows_from_flat(flat.subspan(b * p, b * p), b, p);
        normalize_rows(a);
        normalize_rows(bb);
        return obj::cvccl_loss(a, bb, tau);
    };

    Matrix ua = raw_a, ub = raw_b;
    normalize_rows(ua);
    normalize_rows(ub);
    Matrix ga(b, p), gb(b, p);
    double l = obj::cvccl_loss_grad(ua, ub, tau, ga, gb);
    CHECK(l == doctest::Approx(obj::cvccl_loss(ua, ub, tau)).epsilon(1e-14));

    Matrix ca = chain_through_normalization(raw_a, ga);
    Matrix cb = chain_through_normalization(raw_b, gb);
    std::vector<double> flat(raw_a.data);
    flat.insert(flat.end(), raw_b.data.begin(), raw_b.data.end());
    std::vector<double> analytic(ca.data);
    analytic.insert(analytic.end(), cb.data.begin(), cb.data.end());
    CHECK(obj::finite_difference_check(loss_of, flat, analytic, 1e-5) < 1e-8);
}

TEST_CASE("oscl gradient matches central differences through normalization") {
    Rng rng(512);
    const std::size_t b = 4, p = 3;
    const double tau = 0.1, sigma = 0.7;
    std::vector<double> y{0.2, -0.5, 0.9, 0.1};
    Matrix raw(b, p);
    for (double& v : raw.data) v = rng.normal();

    auto loss_of = [&](std::span<const double> flat) {
        Matrix u = rows_from_flat(flat, b, p);
        normalize_rows(u);
        return obj::oscl_loss(u, y, tau, sigma);
    };

    Matrix u = raw;
    normalize_rows(u);
    Matrix g(b, p);
    double l = obj::oscl_loss_grad(u, y, tau, sigma, g);
    CHECK(l == doctest::Approx(obj::oscl_loss(u, y, tau, sigma)).epsilon(1e-14));

    Matrix chained = chain_through_normalization(raw, g);
    CHECK(obj::finite_difference_check(loss_of, raw.data, chained.data, 1e-5) < 1e-8);
}

TEST_CASE("loss gradients accumulate instead of overwriting") {
    Rng rng(8);
    Matrix a = random_unit_rows(rng, 3, 4);
    Matrix b = random_unit_rows(rng, 3, 4);
    Matrix ga(3, 4), gb(3, 4);
    obj::cvccl_loss_grad(a, b, 0.5, ga, gb);
    Matrix ga2 = ga, gb2 = gb;
    obj::cvccl_loss_grad(a, b, 0.5, ga2, gb2);
    for (std::size_t k = 0; k < ga.data.size(); ++k) {
        CHECK(ga2.data[k] == doctest::Approx(2.0 * ga.data[k]).epsilon(1e-13));
    }

    std::vector<double> y{0.0, 0.7, -0.2};
    Matrix gu(3, 4);
    obj::oscl_loss_grad(a, y, 0.3, 1.0, gu);
    Matrix gu2 = gu;
    obj::oscl_loss_grad(a, y, 0.3, 1.0, gu2);
    for (std::size_t k = 0; k < gu.data.size(); ++k) {
        CHECK(gu2.data[k] == doctest::Approx(2.0 * gu.data[k]).epsilon(1e-13));
    }
}
