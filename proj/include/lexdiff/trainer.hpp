#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lexdiff/corpus.hpp"
#include "lexdiff/encoder.hpp"
#include "lexdiff/objectives.hpp"

namespace lexdiff::trainer {

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    double learning_rate = 2e-5;  // transformer fine-tuning default; see toy_profile
    double weight_decay = 0.01;
    double warmup_ratio = 0.06;
    std::uint64_t seed = 0;
    objectives::ObjectiveConfig objective;
    encoder::EncoderConfig encoder;
    std::size_t max_len = 128;
    std::size_t max_len_en_ctx = 32;
    std::string sep = corpus::kDefaultSep;

    void validate() const;

    // Same settings with a learning rate sized for the hashed toy encoder
    // (2e-5 is far too small to move a from-scratch model in 5 epochs).
    static TrainConfig toy_profile();
};

// JSON object with any subset of the TrainConfig fields; unknown keys are
// rejected so typos fail loudly.
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochRecord {
    double train_loss = 0.0;   // mean composite loss over the epoch's batches
    double train_reg = 0.0;
    double train_cvccl = 0.0;
    double train_oscl = 0.0;
    double dev_mse = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // minimum dev MSE, ties to the earliest
};

void save_history(const std::filesystem::path& path, const TrainHistory& history);

// Linear ramp 0 -> peak over [0, W] with W = ceil(warmup_ratio * total_steps),
// then linear decay peak -> 0 over [W, total_steps].
double lr_schedule(std::size_t step, std::size_t total_steps, double peak_lr, double warmup_ratio);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(std::size_t n_params);

// Elementwise bias-corrected Adam with decoupled weight decay applied
// before the delta: param *= (1 - lr * weight_decay).
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t t, double lr, double weight_decay,
                 const AdamHyper& hp);

// One optimizer step over the full parameter set. Embedding rows absent
// from grads.touched_buckets are skipped entirely (no decay, no moment
// update). Increments state.t.
void adam_step(encoder::EncoderParams& params, const encoder::EncoderGradients& grads,
               AdamState& state, double lr, double weight_decay, const AdamHyper& hp = {});

struct TrainResult {
    encoder::EncoderParams params;  // snapshot at best_epoch
    TrainHistory history;
};

// Token budget for a view: views containing English context use
// max_len_en_ctx, everything else max_len.
std::size_t view_max_len(corpus::View view, const TrainConfig& config);

encoder::BatchViews build_batch_views(const corpus::Dataset& dataset,
                                      std::span<const std::size_t> indices,
                                      const TrainConfig& config);

TrainResult train(const corpus::Dataset& dataset, const TrainConfig& config);

struct PredictOptions {
    std::size_t max_len = 128;
    std::string sep = corpus::kDefaultSep;
};

// Regression-head scores of the full input view, aligned with the split's
// record order.
std::vector<double> predict(const encoder::EncoderParams& params, const corpus::Dataset& dataset,
                            corpus::Split split, const PredictOptions& opts);

struct Predictions {
    std::vector<std::string> ids;
    std::vector<double> values;
};

// CSV "id,prediction" with shortest round-trip number formatting.
void write_predictions_csv(const std::filesystem::path& path, const Predictions& preds);
Predictions read_predictions_csv(const std::filesystem::path& path);

}  // namespace lexdiff::trainer
