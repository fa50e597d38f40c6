#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lexdiff/corpus.hpp"
#include "lexdiff/linalg.hpp"

namespace lexdiff::analysis {

// Correlations are nullopt when either input has zero variance; reports
// serialize that as JSON null, never NaN.
struct MetricReport {
    double rmse = 0.0;
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> pearson;
    std::optional<double> spearman;
    std::size_t n = 0;
};

MetricReport compute_metrics(std::span<const double> preds, std::span<const double> targets);

// 1-based ranks; tied values share the average of their rank range.
std::vector<double> average_ranks(std::span<const double> values);

std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
// Pearson on average ranks.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

struct AlignmentReport {
    std::vector<double> aligned;  // s_i for matched pairs
    std::vector<double> random;   // s_i against a deranged permutation
    double mean_aligned = 0.0;
    double mean_random = 0.0;
    double gap = 0.0;  // mean_aligned - mean_random
};

// Rows are L2-normalized before dotting; the permutation baseline is
// resampled until it has no fixed points.
AlignmentReport alignment_analysis(const Matrix& h_l1, const Matrix& h_en, std::uint64_t seed);

// Quantile bin index per value (0 = lowest values). Ties share a bin;
// empty bins are merged away, leaving k_effective contiguous labels.
struct BinAssignment {
    std::vector<std::size_t> bin;
    std::size_t k_requested = 0;
    std::size_t k_effective = 0;
    std::string note;
};

BinAssignment quantile_bins(std::span<const double> values, std::size_t k);

struct BinRow {
    double lo = 0.0;  // min/max of the binned value inside the bin
    double hi = 0.0;
    std::size_t count = 0;
    double stat = 0.0;  // mean distance or MAE depending on the table
};

struct BinTable {
    std::vector<BinRow> bins;
    std::size_t k_requested = 0;
    std::string note;
};

struct OrdinalReport {
    BinTable distance_bins;  // mean cosine distance per |score gap| quantile bin
    std::optional<double> spearman_distance_gap;
    std::size_t n_sampled = 0;
    std::size_t n_pairs = 0;
};

inline constexpr std::size_t kOrdinalDefaultBins = 10;
inline constexpr std::size_t kOrdinalDefaultSample = 500;

// Pairwise cosine distance vs score gap over a seeded subsample.
OrdinalReport ordinal_structure(const Matrix& embeddings, std::span<const double> y,
                                std::size_t k_bins, std::size_t sample_n, std::uint64_t seed);

// MAE per target-score quantile bin, listed hardest (lowest score) first.
BinTable difficulty_bin_error(std::span<const double> preds, std::span<const double> targets,
                              std::size_t k_bins = 5);

struct ConditionReport {
    std::string name;
    bool skipped = false;
    std::string note;
    double median = 0.0;
    std::size_t n_low = 0;
    std::size_t n_high = 0;
    double low_mae = 0.0;
    double high_mae = 0.0;
    double improvement_pct = 0.0;  // (low - high) / low * 100; 0 when low == 0
};

// Median-split MAE for the four input conditions: context_length,
// lexical_diversity, target_word_length, orthographic_complexity.
std::vector<ConditionReport> input_sensitivity(const std::vector<corpus::LexicalRecord>& records,
                                               std::span<const double> preds);

double feature_context_length(const corpus::LexicalRecord& rec);
double feature_lexical_diversity(const corpus::LexicalRecord& rec);  // type-token ratio
double feature_target_word_length(const corpus::LexicalRecord& rec);
// character-level Shannon entropy (bits) of en_target
double feature_orthographic_complexity(const corpus::LexicalRecord& rec);

void save_metric_report(const std::filesystem::path& path, const MetricReport& report);
void save_alignment_report(const std::filesystem::path& path, const AlignmentReport& report,
                           std::uint64_t seed);
void save_ordinal_report(const std::filesystem::path& path, const OrdinalReport& report);
void save_bin_report(const std::filesystem::path& path, const BinTable& table, double global_mae,
                     std::size_t n);
void save_sensitivity_report(const std::filesystem::path& path,
                             const std::vector<ConditionReport>& conditions);
void write_bin_table_csv(const std::filesystem::path& path, const BinTable& table,
                         const std::string& value_label, const std::string& stat_label);

}  // namespace lexdiff::analysis
