#include "lexdiff/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "lexdiff/util.hpp"

namespace lexdiff::ensemble {

using nlohmann::json;

void MetaFeatures::validate() const {
    if (model_names.empty()) throw std::invalid_argument("meta features need >= 1 model column");
    if (z.cols != model_names.size() || z.rows != ids.size()) {
        throw std::invalid_argument("meta features shape mismatch");
    }
    for (double v : z.data) {
        if (!std::isfinite(v)) throw DataError("meta features contain a non-finite value");
    }
}

namespace {

// Cholesky solve of a symmetric positive-definite system, in place.
std::vector<double> solve_spd(Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > 1e-12)) {
            throw NumericError(
                "ridge system is singular or ill-conditioned; use alpha > 0");
        }
        d = std::sqrt(d);
        a(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / d;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
        b[i] = s / a(i, i);
    }
    for (std::size_t ii = n; ii > 0; --ii) {
        std::size_t i = ii - 1;
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
        b[i] = s / a(i, i);
    }
    return b;
}

std::vector<double> column_means(const Matrix& z) {
    std::vector<double> mu(z.cols, 0.0);
    for (std::size_t i = 0; i < z.rows; ++i) {
        for (std::size_t k = 0; k < z.cols; ++k) mu[k] += z(i, k);
    }
    for (double& v : mu) v /= static_cast<double>(z.rows);
    return mu;
}

}  // namespace

RidgeModel ridge_fit(const MetaFeatures& meta, std::span<const double> y, double alpha) {
    meta.validate();
    const std::size_t n = meta.z.rows;
    const std::size_t k = meta.z.cols;
    if (y.size() != n) throw std::invalid_argument("ridge_fit: target length mismatch");
    if (n < 2) throw std::invalid_argument("ridge_fit: need >= 2 rows");
    if (!(alpha >= 0.0)) throw std::invalid_argument("ridge_fit: alpha must be >= 0");
    if (n <= k) {
        std::cerr << "warning: ridge_fit with " << n << " rows and " << k
                  << " columns; expect an unstable fit\n";
    }

    std::vector<double> xbar = column_means(meta.z);
    double ybar = mean(y);

    Matrix gram(k, k);
    std::vector<double> rhs(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < k; ++a) {
            double za = meta.z(i, a) - xbar[a];
            rhs[a] += za * (y[i] - ybar);
            for (std::size_t b = 0; b <= a; ++b) {
                gram(a, b) += za * (meta.z(i, b) - xbar[b]);
            }
        }
    }
    for (std::size_t a = 0; a < k; ++a) {
        gram(a, a) += alpha;
        for (std::size_t b = a + 1; b < k; ++b) gram(a, b) = gram(b, a);
    }

    RidgeModel model;
    model.model_names = meta.model_names;
    model.weights = solve_spd(std::move(gram), std::move(rhs));
    model.intercept = ybar - dot(model.weights, xbar);
    model.alpha = alpha;
    return model;
}

CvResult ridge_cv(const MetaFeatures& meta, std::span<const double> y,
                  std::span<const double> alpha_grid, std::size_t folds, std::uint64_t seed) {
    meta.validate();
    const std::size_t n = meta.z.rows;
    if (y.size() != n) throw std::invalid_argument("ridge_cv: target length mismatch");
    if (alpha_grid.empty()) throw std::invalid_argument("ridge_cv: empty alpha grid");
    if (folds < 2) throw std::invalid_argument("ridge_cv: folds must be >= 2");
    if (n < folds) throw std::invalid_argument("ridge_cv: need at least one row per fold");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % folds;

    CvResult result;
    bool have_best = false;
    double best_mse = 0.0;
    for (double alpha : alpha_grid) {
        double mse_sum = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            MetaFeatures train_meta;
            train_meta.model_names = meta.model_names;
            std::vector<double> train_y;
            std::vector<std::size_t> held;
            for (std::size_t i = 0; i < n; ++i) {
                if (fold_of[i] == f) {
                    held.push_back(i);
                } else {
                    train_meta.ids.push_back(meta.ids[i]);
                    train_y.push_back(y[i]);
                }
            }
            train_meta.z = Matrix(train_meta.ids.size(), meta.z.cols);
            std::size_t r = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (fold_of[i] == f) continue;
                std::copy(meta.z.row(i).begin(), meta.z.row(i).end(),
                          train_meta.z.row(r).begin());
                ++r;
            }
            RidgeModel fold_model = ridge_fit(train_meta, train_y, alpha);
            double err = 0.0;
            for (std::size_t i : held) {
                double d = ridge_predict(fold_model, meta.z.row(i)) - y[i];
                err += d * d;
            }
            mse_sum += err / static_cast<double>(held.size());
        }
        double mean_mse = mse_sum / static_cast<double>(folds);
        result.table.push_back({alpha, mean_mse});
        if (!have_best || mean_mse < best_mse ||
            (mean_mse == best_mse && alpha < result.best_alpha)) {
            result.best_alpha = alpha;
            best_mse = mean_mse;
            have_best = true;
        }
    }
    result.model = ridge_fit(meta, y, result.best_alpha);
    return result;
}

double ridge_predict(const RidgeModel& model, std::span<const double> z_row) {
    if (z_row.size() != model.weights.size()) {
        throw std::invalid_argument("ridge_predict: feature length mismatch");
    }
    return model.intercept + dot(model.weights, z_row);
}

std::vector<double> ridge_predict_all(const RidgeModel& model, const MetaFeatures& meta) {
    if (meta.model_names != model.model_names) {
        throw std::invalid_argument("ridge_predict_all: model column order mismatch");
    }
    std::vector<double> out;
    out.reserve(meta.z.rows);
    for (std::size_t i = 0; i < meta.z.rows; ++i) out.push_back(ridge_predict(model, meta.z.row(i)));
    return out;
}

Matrix fuse_embeddings(const std::vector<Matrix>& embeddings, std::span<const double> weights) {
    if (embeddings.empty() || embeddings.size() != weights.size()) {
        throw std::invalid_argument("fuse_embeddings: need one weight per embedding matrix");
    }
    std::size_t n = embeddings[0].rows;
    std::size_t total = 0;
    for (const Matrix& e : embeddings) {
        if (e.rows != n) throw std::invalid_argument("fuse_embeddings: row count mismatch");
        total += e.cols;
    }
    Matrix fused(n, total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < embeddings.size(); ++k) {
        const Matrix& e = embeddings[k];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < e.cols; ++j) {
                fused(i, off + j) = weights[k] * e(i, j);
            }
        }
        off += e.cols;
    }
    return fused;
}

namespace {

void check_csv_field(const std::string& field, const char* what) {
    if (field.find(',') != std::string::npos || field.find('\n') != std::string::npos) {
        throw DataError(std::string(what) + " '" + field + "' contains a delimiter");
    }
}

std::vector<std::string> csv_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines = split(read_text_file(path), '\n');
    for (std::string& line : lines) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw DataError(path.string() + ": empty file");
    return lines;
}

}  // namespace

void write_meta_csv(const std::filesystem::path& path, const MetaFeatures& meta) {
    meta.validate();
    std::string out = "id";
    for (const std::string& name : meta.model_names) {
        check_csv_field(name, "model name");
        out += ',';
        out += name;
    }
    out += '\n';
    for (std::size_t i = 0; i < meta.z.rows; ++i) {
        check_csv_field(meta.ids[i], "id");
        out += meta.ids[i];
        for (std::size_t k = 0; k < meta.z.cols; ++k) {
            out += ',';
            out += format_double(meta.z(i, k));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

MetaFeatures read_meta_csv(const std::filesystem::path& path) {
    std::vector<std::string> lines = csv_lines(path);
    std::vector<std::string> header = split(lines[0], ',');
    if (header.size() < 2 || header[0] != "id") {
        throw DataError(path.string() + ": expected header 'id,<model names>'");
    }
    MetaFeatures meta;
    meta.model_names.assign(header.begin() + 1, header.end());
    std::size_t k = meta.model_names.size();
    meta.z = Matrix(lines.size() - 1, k);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) throw DataError(path.string() + ": blank row inside table");
        std::vector<std::string> parts = split(lines[r], ',');
        if (parts.size() != k + 1) {
            throw DataError(path.string() + " line " + std::to_string(r + 1) + ": expected " +
                            std::to_string(k + 1) + " fields");
        }
        meta.ids.push_back(parts[0]);
        for (std::size_t c = 0; c < k; ++c) {
            try {
                meta.z(r - 1, c) = parse_double(parts[c + 1]);
            } catch (const std::exception&) {
                throw DataError(path.string() + " line " + std::to_string(r + 1) +
                                ": bad number '" + parts[c + 1] + "'");
            }
        }
    }
    meta.validate();
    return meta;
}

void save_ridge_model(const std::filesystem::path& path, const RidgeModel& model) {
    json doc = {{"model_names", model.model_names},
                {"weights", model.weights},
                {"intercept", model.intercept},
                {"alpha", model.alpha}};
    write_text_file(path, doc.dump(2) + "\n");
}

RidgeModel load_ridge_model(const std::filesystem::path& path) {
    try {
        json doc = json::parse(read_text_file(path));
        RidgeModel model;
        model.model_names = doc.at("model_names").get<std::vector<std::string>>();
        model.weights = doc.at("weights").get<std::vector<double>>();
        model.intercept = doc.at("intercept").get<double>();
        model.alpha = doc.at("alpha").get<double>();
        if (model.weights.size() != model.model_names.size()) {
            throw DataError(path.string() + ": weights/model_names length mismatch");
        }
        return model;
    } catch (const json::exception& e) {
        throw DataError("ridge model " + path.string() + ": " + e.what());
    }
}

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingTable& table) {
    if (table.ids.size() != table.values.rows) {
        throw std::invalid_argument("write_embeddings_csv: id/row count mismatch");
    }
    std::string out = "id";
    for (std::size_t j = 0; j < table.values.cols; ++j) {
        out += ",d" + std::to_string(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < table.values.rows; ++i) {
        check_csv_field(table.ids[i], "id");
        out += table.ids[i];
        for (std::size_t j = 0; j < table.values.cols; ++j) {
            out += ',';
            out += format_double(table.values(i, j));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

EmbeddingTable read_embeddings_csv(const std::filesystem::path& path) {
    std::vector<std::string> lines = csv_lines(path);
    std::vector<std::string> header = split(lines[0], ',');
    if (header.size() < 2 || header[0] != "id") {
        throw DataError(path.string() + ": expected header 'id,<dimension columns>'");
    }
    std::size_t dims = header.size() - 1;
    EmbeddingTable table;
    table.values = Matrix(lines.size() - 1, dims);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        std::vector<std::string> parts = split(lines[r], ',');
        if (parts.size() != dims + 1) {
            throw DataError(path.string() + " line " + std::to_string(r + 1) + ": expected " +
                            std::to_string(dims + 1) + " fields");
        }
        table.ids.push_back(parts[0]);
        for (std::size_t c = 0; c < dims; ++c) {
            try {
                table.values(r - 1, c) = parse_double(parts[c + 1]);
            } catch (const std::exception&) {
                throw DataError(path.string() + " line " + std::to_string(r + 1) +
                                ": bad number '" + parts[c + 1] + "'");
            }
        }
    }
    return table;
}

}  // namespace lexdiff::ensemble
