#include "lexdiff/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lexdiff/util.hpp"

namespace lexdiff::objectives {

void ObjectiveConfig::validate() const {
    if (lambda_cv < 0.0 || lambda_ord < 0.0) throw ConfigError("loss weights must be >= 0");
    if (tau_cvccl <= 0.0 || tau_oscl <= 0.0) throw ConfigError("temperatures must be > 0");
    if (sigma <= 0.0) throw ConfigError("sigma must be > 0");
}

namespace {

constexpr double kUnitNormTolerance = 1e-6;

void require_unit_rows(const Matrix& m, const char* name) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double n = l2_norm(m.row(i));
        if (std::abs(n - 1.0) > kUnitNormTolerance) {
            throw std::invalid_argument(std::string(name) + ": row " + std::to_string(i) +
                                        " is not unit-norm (|row| = " + std::to_string(n) + ")");
        }
    }
}

double log_sum_exp(std::span<const double> v) {
    double hi = v[0];
    for (double x : v) hi = std::max(hi, x);
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

}  // namespace

double regression_loss(std::span<const double> preds, std::span<const double> targets) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw std::invalid_argument("regression_loss: size mismatch or empty batch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double d = preds[i] - targets[i];
        acc += d * d;
    }
    return acc / static_cast<double>(preds.size());
}

double regression_loss_grad(std::span<const double> preds, std::span<const double> targets,
                            std::span<double> grad_preds) {
    double loss = regression_loss(preds, targets);
    double scale = 2.0 / static_cast<double>(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        grad_preds[i] += scale * (preds[i] - targets[i]);
    }
    return loss;
}

namespace {

// Shared body for cvccl value/gradient. Vectors are stacked [z_a; z_b];
// the positive of anchor i is i +- B.
double cvccl_impl(const Matrix& z_a, const Matrix& z_b, double tau, Matrix* grad_a,
                  Matrix* grad_b) {
    if (!z_a.same_shape(z_b)) throw std::invalid_argument("cvccl_loss: view shape mismatch");
    if (z_a.rows == 0) throw std::invalid_argument("cvccl_loss: empty batch");
    if (tau <= 0.0) throw std::invalid_argument("cvccl_loss: tau must be > 0");
    require_unit_rows(z_a, "cvccl_loss z_a");
    require_unit_rows(z_b, "cvccl_loss z_b");

    const std::size_t b = z_a.rows;
    const std::size_t n = 2 * b;
    const std::size_t p = z_a.cols;
    auto stacked_row = [&](std::size_t i) { return i < b ? z_a.row(i) : z_b.row(i - b); };
    auto grad_row = [&](std::size_t i) { return i < b ? grad_a->row(i) : grad_b->row(i - b); };
    auto positive_of = [&](std::size_t i) { return i < b ? i + b : i - b; };

    const double inv_count = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    std::vector<double> scaled(n - 1);   // s_ik / tau for k != i
    std::vector<std::size_t> others(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> zi = stacked_row(i);
        std::size_t m = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            others[m] = k;
            scaled[m] = dot(zi, stacked_row(k)) / tau;
            ++m;
        }
        double lse = log_sum_exp(scaled);
        std::size_t pos = positive_of(i);
        double pos_scaled = dot(zi, stacked_row(pos)) / tau;
        loss += -pos_scaled + lse;

        if (grad_a != nullptr) {
            std::span<double> gi = grad_row(i);
            for (std::size_t m2 = 0; m2 < n - 1; ++m2) {
                std::size_t k = others[m2];
                double softmax_ik = std::exp(scaled[m2] - lse);
                double coeff = (softmax_ik - (k == pos ? 1.0 : 0.0)) * inv_count / tau;
                // d(loss_i)/d z_i picks up softmax_ik * z_k - z_pos,
                // d(loss_i)/d z_k picks up (softmax_ik - [k==pos]) * z_i
                std::span<const double> zk = stacked_row(k);
                std::span<double> gk = grad_row(k);
                for (std::size_t d = 0; d < p; ++d) {
                    gi[d] += coeff * zk[d];
                    gk[d] += coeff * zi[d];
                }
            }
        }
    }
    return loss * inv_count;
}

}  // namespace

double cvccl_loss(const Matrix& z_a, const Matrix& z_b, double tau) {
    return cvccl_impl(z_a, z_b, tau, nullptr, nullptr);
}

double cvccl_loss_grad(const Matrix& z_a, const Matrix& z_b, double tau, Matrix& grad_a,
                       Matrix& grad_b) {
    if (!grad_a.same_shape(z_a) || !grad_b.same_shape(z_b)) {
        throw std::invalid_argument("cvccl_loss_grad: gradient shape mismatch");
    }
    return cvccl_impl(z_a, z_b, tau, &grad_a, &grad_b);
}

Matrix affinity_weights(std::span<const double> y, double sigma) {
    if (y.empty()) throw std::invalid_argument("affinity_weights: empty batch");
    if (sigma <= 0.0) throw std::invalid_argument("affinity_weights: sigma must be > 0");
    const std::size_t b = y.size();
    Matrix w(b, b);
    double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = i + 1; j < b; ++j) {
            double gap = y[i] - y[j];
            double wij = std::exp(-gap * gap * inv);
            w(i, j) = wij;
            w(j, i) = wij;
        }
    }
    return w;
}

namespace {

double oscl_impl(const Matrix& u, std::span<const double> y, double tau, double sigma,
                 Matrix* grad_u) {
    const std::size_t b = u.rows;
    if (b < 2) throw std::invalid_argument("oscl_loss: batch size must be >= 2");
    if (y.size() != b) throw std::invalid_argument("oscl_loss: y length mismatch");
    if (tau <= 0.0 || sigma <= 0.0) throw std::invalid_argument("oscl_loss: tau and sigma must be > 0");
    require_unit_rows(u, "oscl_loss u");

    const double inv_b = 1.0 / static_cast<double>(b);
    const double w_scale = 1.0 / (2.0 * sigma * sigma);
    double loss = 0.0;
    std::vector<double> sim_scaled(b - 1);
    std::vector<double> log_w(b - 1);
    std::vector<std::size_t> others(b - 1);
    for (std::size_t i = 0; i < b; ++i) {
        std::span<const double> ui = u.row(i);
        std::size_t m = 0;
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) continue;
            others[m] = j;
            sim_scaled[m] = dot(ui, u.row(j)) / tau;
            double gap = y[i] - y[j];
            log_w[m] = -gap * gap * w_scale;
            ++m;
        }
        // raw weight sum underflows only when every affinity does; such
        // anchors contribute zero but still count in the mean
        double log_wsum = log_sum_exp(log_w);
        if (!(std::exp(log_wsum) > 0.0)) continue;

        double lse = log_sum_exp(sim_scaled);
        double anchor = 0.0;
        for (std::size_t m2 = 0; m2 < b - 1; ++m2) {
            double w_norm = std::exp(log_w[m2] - log_wsum);
            double log_p = sim_scaled[m2] - lse;
            anchor -= w_norm * log_p;
            if (grad_u != nullptr) {
                double p = std::exp(log_p);
                double coeff = (p - w_norm) * inv_b / tau;
                std::size_t j = others[m2];
                std::span<const double> uj = u.row(j);
                std::span<double> gi = grad_u->row(i);
                std::span<double> gj = grad_u->row(j);
                for (std::size_t d = 0; d < u.cols; ++d) {
                    gi[d] += coeff * uj[d];
                    gj[d] += coeff * ui[d];
                }
            }
        }
        loss += anchor;
    }
    return loss * inv_b;
}

}  // namespace

double oscl_loss(const Matrix& u, std::span<const double> y, double tau, double sigma) {
    return oscl_impl(u, y, tau, sigma, nullptr);
}

double oscl_loss_grad(const Matrix& u, std::span<const double> y, double tau, double sigma,
                      Matrix& grad_u) {
    if (!grad_u.same_shape(u)) throw std::invalid_argument("oscl_loss_grad: gradient shape mismatch");
    return oscl_impl(u, y, tau, sigma, &grad_u);
}

double composite_loss(const LossParts& parts, const ObjectiveConfig& config) {
    return parts.reg + config.lambda_cv * parts.cvccl + config.lambda_ord * parts.oscl;
}

std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> x, double h) {
    if (h <= 0.0) throw std::invalid_argument("central_differences: h must be > 0");
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = point[i];
        point[i] = orig + h;
        double plus = f(point);
        point[i] = orig - h;
        double minus = f(point);
        point[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> x, std::span<const double> analytic_grad,
                               double h) {
    if (analytic_grad.size() != x.size()) {
        throw std::invalid_argument("finite_difference_check: gradient length mismatch");
    }
    std::vector<double> fd = central_differences(f, x, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double denom = std::max(1e-8, std::abs(analytic_grad[i]) + std::abs(fd[i]));
        worst = std::max(worst, std::abs(analytic_grad[i] - fd[i]) / denom);
    }
    return worst;
}

}  // namespace lexdiff::objectives
