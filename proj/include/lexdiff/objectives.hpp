#pragma once

#include <functional>
#include <span>
#include <string>

#include "lexdiff/corpus.hpp"
#include "lexdiff/linalg.hpp"

namespace lexdiff::objectives {

// Source of the representation fed to the ordinal loss. Currently always
// the normalized projection of the configured contrastive view.
enum class OsclRep { projection_of_primary_view };

struct ObjectiveConfig {
    double lambda_cv = 0.1;    // weight of the cross-view loss
    double lambda_ord = 0.2;   // weight of the ordinal loss
    double tau_cvccl = 0.01;   // cross-view temperature
    double tau_oscl = 0.02;    // ordinal temperature
    double sigma = 1.0;        // affinity bandwidth over score gaps
    corpus::View contrastive_view = corpus::View::en_tgt;
    OsclRep oscl_rep = OsclRep::projection_of_primary_view;

    void validate() const;
    bool contrastive_enabled() const { return lambda_cv > 0.0 || lambda_ord > 0.0; }
};

// Mean squared error over the batch.
double regression_loss(std::span<const double> preds, std::span<const double> targets);
double regression_loss_grad(std::span<const double> preds, std::span<const double> targets,
                            std::span<double> grad_preds);

// Cross-view contrastive loss over 2B stacked unit vectors; the positive
// of each anchor is its cross-view mate, and the softmax denominator runs
// over every other vector including the positive. Rows of z_a/z_b are the
// two views of item i and must be unit-norm within 1e-6.
double cvccl_loss(const Matrix& z_a, const Matrix& z_b, double tau);

// Returns the loss and accumulates d(loss)/d(row) into grad_a/grad_b
// (same shapes as the inputs; treated as free vectors, so callers chain
// through their own normalization).
double cvccl_loss_grad(const Matrix& z_a, const Matrix& z_b, double tau, Matrix& grad_a,
                       Matrix& grad_b);

// Gaussian affinity over target gaps: w_ij = exp(-(y_i-y_j)^2 / (2 sigma^2)),
// zero diagonal, exactly symmetric.
Matrix affinity_weights(std::span<const double> y, double sigma);

// Ordinal soft contrastive loss: per-anchor cross-entropy between the
// similarity softmax over the rest of the batch and the normalized
// affinity weights. Per-anchor weights are normalized in log space, so
// anchors with uniformly tiny affinities still resolve; an anchor
// contributes zero only if every affinity underflows outright.
double oscl_loss(const Matrix& u, std::span<const double> y, double tau, double sigma);
double oscl_loss_grad(const Matrix& u, std::span<const double> y, double tau, double sigma,
                      Matrix& grad_u);

struct LossParts {
    double reg = 0.0;
    double cvccl = 0.0;
    double oscl = 0.0;
};

double composite_loss(const LossParts& parts, const ObjectiveConfig& config);

// Central-difference gradient of f at x.
std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> x, double h);

// Max over coordinates of |g_analytic - g_fd| / max(1e-8, |g_analytic| + |g_fd|).
double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic_grad,
                               double h);

}  // namespace lexdiff::objectives
