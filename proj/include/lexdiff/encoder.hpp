#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexdiff/corpus.hpp"
#include "lexdiff/linalg.hpp"
#include "lexdiff/objectives.hpp"

namespace lexdiff::encoder {

struct EncoderConfig {
    std::size_t n_buckets = 4096;
    std::size_t d_embed = 64;
    std::size_t d_hidden = 64;
    std::size_t d_model = 64;
    std::size_t d_proj = 32;
    std::uint64_t hash_seed = 0;
    double init_scale = 0.05;

    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

// Trainable state. The projection head feeds the contrastive losses only;
// the regression head reads the pooled hidden vector directly.
struct EncoderParams {
    EncoderConfig config;
    Matrix embed_table;          // n_buckets x d_embed
    Matrix ff_w;                 // d_embed x d_hidden
    std::vector<double> ff_b;    // d_hidden
    Matrix out_w;                // d_hidden x d_model
    std::vector<double> out_b;   // d_model
    Matrix proj_w;               // d_model x d_proj
    std::vector<double> proj_b;  // d_proj
    std::vector<double> reg_w;   // d_model
    double reg_b = 0.0;
};

// Same tensor layout as EncoderParams. Embedding gradients are sparse:
// only rows listed in touched_buckets are nonzero, and the optimizer must
// update exactly those rows.
struct EncoderGradients {
    Matrix embed_table;
    Matrix ff_w;
    std::vector<double> ff_b;
    Matrix out_w;
    std::vector<double> out_b;
    Matrix proj_w;
    std::vector<double> proj_b;
    std::vector<double> reg_w;
    double reg_b = 0.0;
    std::vector<std::size_t> touched_buckets;  // sorted, unique
};

// Weights uniform in [-init_scale, +init_scale] from a seeded generator
// (draw order: embed_table, ff_w, out_w, proj_w, reg_w), biases zero.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);
EncoderGradients zero_gradients(const EncoderConfig& config);

// FNV-1a 64-bit over the token bytes, basis XOR-seeded, reduced mod n_buckets.
std::size_t token_bucket(std::string_view token, std::size_t n_buckets, std::uint64_t hash_seed);

// h = out_w^T tanh(ff_w^T mean_pool(bucket embeddings) + ff_b) + out_b.
// An empty sequence pools to the zero vector.
std::vector<double> encode(const EncoderParams& params, const corpus::TokenSequence& seq);

// Unit-norm projection; a pre-normalization norm below 1e-12 falls back to
// the first standard basis vector.
std::vector<double> project(const EncoderParams& params, std::span<const double> h);

double predict_score(const EncoderParams& params, std::span<const double> h);

struct BatchViews {
    std::vector<corpus::TokenSequence> full;         // regression + one contrastive side
    std::vector<corpus::TokenSequence> contrastive;  // configured second view
    std::vector<double> targets;
};

struct ForwardBackwardResult {
    double loss = 0.0;
    objectives::LossParts parts;
    std::vector<double> preds;
    EncoderGradients grads;
};

// Composite objective over one batch: regression on the full view, the
// cross-view loss on (contrastive, full) projection pairs, the ordinal
// loss on the contrastive projections. Gradients are the exact analytic
// derivatives, including through the projection L2 normalization, and are
// summed across views into the single shared parameter set.
ForwardBackwardResult forward_backward(const EncoderParams& params, const BatchViews& batch,
                                       const objectives::ObjectiveConfig& objective);

// Flat parameter vector in a fixed tensor order, for optimizer state and
// finite-difference checks.
std::size_t param_count(const EncoderConfig& config);
std::vector<double> flatten(const EncoderParams& params);
std::vector<double> flatten(const EncoderGradients& grads);
void unflatten(std::span<const double> flat, EncoderParams& params);

struct Checkpoint {
    EncoderParams params;
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lexdiff::encoder
