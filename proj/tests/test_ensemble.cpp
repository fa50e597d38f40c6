#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexdiff/ensemble.hpp"
#include "lexdiff/linalg.hpp"
#include "lexdiff/util.hpp"

namespace ens = lexdiff::ensemble;
namespace fs = std::filesystem;
using lexdiff::Matrix;
using lexdiff::Rng;

namespace {

fs::path temp_file(const std::string& name) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / ("lexdiff-ens-" + std::to_string(::getpid()) + "-" +
                                                std::to_string(counter++));
    fs::create_directories(dir);
    return dir / name;
}

ens::MetaFeatures single_column_123() {
    ens::MetaFeatures meta;
    meta.ids = {"a", "b", "c"};
    meta.model_names = {"m1"};
    meta.z = Matrix(3, 1);
    meta.z(0, 0) = 1.0;
    meta.z(1, 0) = 2.0;
    meta.z(2, 0) = 3.0;
    return meta;
}

ens::MetaFeatures random_meta(Rng& rng, std::size_t n, std::size_t k) {
    ens::MetaFeatures meta;
    meta.model_names.resize(k);
    for (std::size_t j = 0; j < k; ++j) meta.model_names[j] = "m" + std::to_string(j + 1);
    meta.ids.resize(n);
    meta.z = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        meta.ids[i] = "id-" + std::to_string(i);
        for (std::size_t j = 0; j < k; ++j) meta.z(i, j) = rng.uniform(-1.0, 1.0);
    }
    return meta;
}

// Least-squares oracle: plain batch gradient descent on (w, b) until the
// gradient norm is tiny.
std::pair<std::vector<double>, double> gd_least_squares(const Matrix& z,
                                                        const std::vector<double>& y) {
    std::vector<double> w(z.cols, 0.0);
    double b = 0.0;
    const double lr = 0.05;
    const auto n = static_cast<double>(z.rows);
    for (int iter = 0; iter < 500000; ++iter) {
        std::vector<double> gw(z.cols, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < z.rows; ++i) {
            double resid = lexdiff::dot(z.row(i), w) + b - y[i];
            for (std::size_t j = 0; j < z.cols; ++j) gw[j] += 2.0 * resid * z(i, j) / n;
            gb += 2.0 * resid / n;
        }
        double gnorm = std::sqrt(lexdiff::dot(gw, gw) + gb * gb);
        if (gnorm < 1e-10) break;
        for (std::size_t j = 0; j < z.cols; ++j) w[j] -= lr * gw[j];
        b -= lr * gb;
    }
    return {w, b};
}

double train_mse(const ens::RidgeModel& model, const ens::MetaFeatures& meta,
                 const std::vector<double>& y) {
    std::vector<double> preds = ens::ridge_predict_all(model, meta);
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        acc += (preds[i] - y[i]) * (preds[i] - y[i]);
    }
    return acc / static_cast<double>(preds.size());
}

}  // namespace

TEST_CASE("single-column ridge: exact fit, hand-solved shrinkage, infinite limit") {
    ens::MetaFeatures meta = single_column_123();
    std::vector<double> y{1.0, 2.0, 3.0};

    ens::RidgeModel exact = ens::ridge_fit(meta, y, 0.0);
    CHECK(exact.weights[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(exact.intercept == doctest::Approx(0.0).scale(1).epsilon(1e-12));

    ens::RidgeModel shrunk = ens::ridge_fit(meta, y, 2.0);
    CHECK(shrunk.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(shrunk.intercept == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ens::ridge_predict(shrunk, std::vector<double>{2.0}) ==
          doctest::Approx(2.0).epsilon(1e-12));

    ens::RidgeModel flat = ens::ridge_fit(meta, y, 1e9);
    double ybar = 2.0;
    for (double z : {1.0, 2.0, 3.0}) {
        CHECK(std::abs(ens::ridge_predict(flat, std::vector<double>{z}) - ybar) < 1e-3);
    }
}

TEST_CASE("ridge at alpha zero matches the gradient-descent least-squares oracle") {
    Rng rng(40);
    ens::MetaFeatures meta = random_meta(rng, 50, 3);
    std::vector<double> true_w{0.8, -0.4, 0.3};
    std::vector<double> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        y[i] = lexdiff::dot(meta.z.row(i), true_w) + 0.7 + 0.05 * rng.normal();
    }

    ens::RidgeModel model = ens::ridge_fit(meta, y, 0.0);
    auto [gw, gb] = gd_least_squares(meta.z, y);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(model.weights[j] - gw[j]) < 1e-6);
    }
    CHECK(std::abs(model.intercept - gb) < 1e-6);
}

TEST_CASE("collinear columns at alpha zero raise a numeric error that suggests alpha") {
    ens::MetaFeatures meta;
    meta.ids = {"a", "b", "c", "d"};
    meta.model_names = {"m1", "m2"};
    meta.z = Matrix(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        meta.z(i, 0) = static_cast<double>(i);
        meta.z(i, 1) = 2.0 * static_cast<double>(i);  // exact multiple of column 0
    }
    std::vector<double> y{0.0, 1.0, 2.0, 3.0};
    CHECK_THROWS_WITH_AS(ens::ridge_fit(meta, y, 0.0), doctest::Contains("alpha"),
                         lexdiff::NumericError);
    CHECK_NOTHROW(ens::ridge_fit(meta, y, 0.1));
}

TEST_CASE("training MSE is non-decreasing in alpha") {
    Rng rng(41);
    ens::MetaFeatures meta = random_meta(rng, 40, 3);
    std::vector<double> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        y[i] = 0.5 * meta.z(i, 0) - 0.2 * meta.z(i, 2) + 0.3 * rng.normal();
    }
    double prev = -1.0;
    for (double alpha : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0}) {
        double mse = train_mse(ens::ridge_fit(meta, y, alpha), meta, y);
        CHECK(mse >= prev - 1e-12);
        prev = mse;
    }
}

TEST_CASE("centering identities: shifted targets and shifted features") {
    Rng rng(42);
    ens::MetaFeatures meta = random_meta(rng, 30, 2);
    std::vector<double> y(30);
    for (std::size_t i = 0; i < 30; ++i) y[i] = meta.z(i, 0) + 0.1 * rng.normal();

    ens::RidgeModel base = ens::ridge_fit(meta, y, 0.5);

    std::vector<double> y_shift = y;
    for (double& v : y_shift) v += 4.0;
    ens::RidgeModel shifted_y = ens::ridge_fit(meta, y_shift, 0.5);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(shifted_y.weights[j] == doctest::Approx(base.weights[j]).epsilon(1e-12));
    }
    CHECK(shifted_y.intercept == doctest::Approx(base.intercept + 4.0).epsilon(1e-12));

    ens::MetaFeatures meta_shift = meta;
    for (std::size_t i = 0; i < 30; ++i) meta_shift.z(i, 1) += 2.0;
    ens::RidgeModel shifted_x = ens::ridge_fit(meta_shift, y, 0.5);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(shifted_x.weights[j] == doctest::Approx(base.weights[j]).epsilon(1e-9));
    }
    // same predictions on the shifted features
    for (std::size_t i = 0; i < 5; ++i) {
        double a = ens::ridge_predict(base, meta.z.row(i));
        double b = ens::ridge_predict(shifted_x, meta_shift.z.row(i));
        CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
}

TEST_CASE("ridge prediction is the documented affine blend") {
    ens::RidgeModel model;
    model.model_names = {"m1", "m2"};
    model.weights = {0.5, 1.0};
    model.intercept = 1.0;
    CHECK(ens::ridge_predict(model, std::vector<double>{1.5, 2.0}) ==
          doctest::Approx(3.75).epsilon(1e-15));

    model.weights = {0.0, 0.0};
    model.intercept = 1.5;
    CHECK(ens::ridge_predict(model, std::vector<double>{9.0, -9.0}) == 1.5);

    CHECK_THROWS(ens::ridge_predict(model, std::vector<double>{1.0}));
}

TEST_CASE("cross-validation selects the honest alpha and is deterministic") {
    Rng rng(43);
    ens::MetaFeatures meta = random_meta(rng, 60, 2);
    std::vector<double> y(60);
    for (std::size_t i = 0; i < 60; ++i) y[i] = 1.5 * meta.z(i, 0) - 0.5 * meta.z(i, 1);

    std::vector<double> grid{0.01, 100.0};
    ens::CvResult cv = ens::ridge_cv(meta, y, grid, 5, 7);
    CHECK(cv.best_alpha == 0.01);
    REQUIRE(cv.table.size() == 2);
    CHECK(cv.table[0].alpha == 0.01);
    CHECK(cv.table[1].alpha == 100.0);
    CHECK(cv.table[0].mean_mse < cv.table[1].mean_mse);
    CHECK(cv.model.alpha == 0.01);

    ens::CvResult again = ens::ridge_cv(meta, y, grid, 5, 7);
    CHECK(again.table[0].mean_mse == cv.table[0].mean_mse);
    CHECK(again.table[1].mean_mse == cv.table[1].mean_mse);
    for (std::size_t j = 0; j < cv.model.weights.size(); ++j) {
        CHECK(again.model.weights[j] == cv.model.weights[j]);
    }

    std::vector<double> lone{3.0};
    ens::CvResult single = ens::ridge_cv(meta, y, lone, 4, 1);
    CHECK(single.best_alpha == 3.0);
    CHECK(single.table.size() == 1);

    std::vector<double> empty;
    CHECK_THROWS(ens::ridge_cv(meta, y, empty, 5, 1));
    CHECK_THROWS(ens::ridge_cv(meta, y, grid, 1, 1));
}

TEST_CASE("fused embeddings concatenate weighted blocks") {
    Matrix e1(2, 2);
    e1(0, 0) = 1.0;
    e1(0, 1) = 2.0;
    e1(1, 0) = 3.0;
    e1(1, 1) = 4.0;
    Matrix e2(2, 3);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) e2(i, j) = 10.0 * static_cast<double>(i) + j;
    }

    Matrix ident = ens::fuse_embeddings({e1}, std::vector<double>{1.0});
    CHECK(ident.data == e1.data);

    Matrix masked = ens::fuse_embeddings({e1, e2}, std::vector<double>{0.0, 1.0});
    REQUIRE(masked.cols == 5);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(masked(i, 0) == 0.0);
        CHECK(masked(i, 1) == 0.0);
        for (std::size_t j = 0; j < 3; ++j) CHECK(masked(i, 2 + j) == e2(i, j));
    }

    Matrix pos = ens::fuse_embeddings({e1, e2}, std::vector<double>{0.5, -1.5});
    Matrix neg = ens::fuse_embeddings({e1, e2}, std::vector<double>{-0.5, 1.5});
    for (std::size_t k = 0; k < pos.data.size(); ++k) CHECK(neg.data[k] == -pos.data[k]);

    Matrix short_rows(1, 2);
    CHECK_THROWS(ens::fuse_embeddings({e1, short_rows}, std::vector<double>{1.0, 1.0}));
    CHECK_THROWS(ens::fuse_embeddings({e1, e2}, std::vector<double>{1.0}));
}

TEST_CASE("meta-feature CSV round-trips and rejects malformed input") {
    Rng rng(44);
    ens::MetaFeatures meta = random_meta(rng, 7, 3);
    fs::path file = temp_file("meta.csv");
    ens::write_meta_csv(file, meta);
    ens::MetaFeatures back = ens::read_meta_csv(file);
    CHECK(back.ids == meta.ids);
    CHECK(back.model_names == meta.model_names);
    CHECK(back.z.data == meta.z.data);

    lexdiff::write_text_file(file, "noid,m1\nx,1\n");
    CHECK_THROWS_AS(ens::read_meta_csv(file), lexdiff::DataError);
    lexdiff::write_text_file(file, "id,m1\nx,1,7\n");
    CHECK_THROWS_AS(ens::read_meta_csv(file), lexdiff::DataError);
    lexdiff::write_text_file(file, "id,m1\nx,notanumber\n");
    CHECK_THROWS_AS(ens::read_meta_csv(file), lexdiff::DataError);

    std::error_code ec;
    fs::remove_all(file.parent_path(), ec);
}

TEST_CASE("ridge model JSON round-trips") {
    ens::RidgeModel model;
    model.model_names = {"alpha", "beta"};
    model.weights = {0.123456789012345, -1.75};
    model.intercept = 0.25;
    model.alpha = 10.0;

    fs::path file = temp_file("model.json");
    ens::save_ridge_model(file, model);
    ens::RidgeModel back = ens::load_ridge_model(file);
    CHECK(back.model_names == model.model_names);
    CHECK(back.weights == model.weights);
    CHECK(back.intercept == model.intercept);
    CHECK(back.alpha == model.alpha);

    std::error_code ec;
    fs::remove_all(file.parent_path(), ec);
}

TEST_CASE("embedding CSV round-trips with full precision") {
    ens::EmbeddingTable table;
    table.ids = {"p", "q"};
    table.values = Matrix(2, 3);
    table.values(0, 0) = 1.0 / 3.0;
    table.values(0, 1) = -2.0 / 7.0;
    table.values(0, 2) = 0.0;
    table.values(1, 0) = 1e-17;
    table.values(1, 1) = 123456.789;
    table.values(1, 2) = -1.0;

    fs::path file = temp_file("emb.csv");
    ens::write_embeddings_csv(file, table);
    ens::EmbeddingTable back = ens::read_embeddings_csv(file);
    CHECK(back.ids == table.ids);
    CHECK(back.values.data == table.values.data);

    std::error_code ec;
    fs::remove_all(file.parent_path(), ec);
}

TEST_CASE("meta-feature validation catches structural problems") {
    ens::MetaFeatures meta = single_column_123();
    CHECK_NOTHROW(meta.validate());

    meta.z(1, 0) = std::nan("");
    CHECK_THROWS_AS(meta.validate(), lexdiff::DataError);

    meta = single_column_123();
    meta.ids.pop_back();
    CHECK_THROWS_AS(meta.validate(), std::invalid_argument);

    meta = single_column_123();
    meta.model_names.clear();
    meta.z = Matrix(3, 0);
    CHECK_THROWS_AS(meta.validate(), std::invalid_argument);
}
