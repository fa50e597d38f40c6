#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lexdiff/linalg.hpp"

namespace lexdiff::ensemble {

// Base-model predictions as stacking features: column k holds model k's
// prediction for every item, columns ordered by model_names.
struct MetaFeatures {
    std::vector<std::string> ids;          // N
    std::vector<std::string> model_names;  // K
    Matrix z;                              // N x K

    void validate() const;
};

struct RidgeModel {
    std::vector<std::string> model_names;
    std::vector<double> weights;
    double intercept = 0.0;
    double alpha = 0.0;
};

inline constexpr std::array<double, 5> kDefaultAlphaGrid{0.01, 0.1, 1.0, 10.0, 100.0};

// Centered ridge: solve (Zc^T Zc + alpha I) w = Zc^T yc by Cholesky; the
// intercept ybar - xbar.w is unpenalized.
RidgeModel ridge_fit(const MetaFeatures& z, std::span<const double> y, double alpha);

struct CvEntry {
    double alpha = 0.0;
    double mean_mse = 0.0;
};

struct CvResult {
    double best_alpha = 0.0;
    RidgeModel model;  // refit on all rows at best_alpha
    std::vector<CvEntry> table;
};

// Seeded deterministic fold assignment; best alpha is the argmin of mean
// held-out MSE, ties resolved toward the smaller alpha.
CvResult ridge_cv(const MetaFeatures& z, std::span<const double> y,
                  std::span<const double> alpha_grid, std::size_t folds, std::uint64_t seed);

double ridge_predict(const RidgeModel& model, std::span<const double> z_row);
std::vector<double> ridge_predict_all(const RidgeModel& model, const MetaFeatures& z);

// Row-wise concatenation [w1*E1 ; ... ; wK*EK].
Matrix fuse_embeddings(const std::vector<Matrix>& embeddings, std::span<const double> weights);

// CSV "id,<model_1>,...,<model_K>"
void write_meta_csv(const std::filesystem::path& path, const MetaFeatures& meta);
MetaFeatures read_meta_csv(const std::filesystem::path& path);

void save_ridge_model(const std::filesystem::path& path, const RidgeModel& model);
RidgeModel load_ridge_model(const std::filesystem::path& path);

// Per-item embedding rows, exchanged as CSV "id,d0,...,d{n-1}".
struct EmbeddingTable {
    std::vector<std::string> ids;
    Matrix values;
};

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings_csv(const std::filesystem::path& path);

}  // namespace lexdiff::ensemble
