#include "lexdiff/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "lexdiff/util.hpp"

namespace lexdiff::analysis {

using nlohmann::json;

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j (0-based) share the average 1-based rank
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw std::invalid_argument("pearson: size mismatch or empty input");
    }
    double ma = mean(a);
    double mb = mean(b);
    double saa = 0.0;
    double sbb = 0.0;
    double sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma;
        double db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    double r = sab / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw std::invalid_argument("spearman: size mismatch or empty input");
    }
    std::vector<double> ra = average_ranks(a);
    std::vector<double> rb = average_ranks(b);
    return pearson(ra, rb);
}

MetricReport compute_metrics(std::span<const double> preds, std::span<const double> targets) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw std::invalid_argument("compute_metrics: size mismatch or empty input");
    }
    MetricReport report;
    report.n = preds.size();
    double se = 0.0;
    double ae = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double d = preds[i] - targets[i];
        se += d * d;
        ae += std::abs(d);
    }
    report.mse = se / static_cast<double>(preds.size());
    report.rmse = std::sqrt(report.mse);
    report.mae = ae / static_cast<double>(preds.size());
    report.pearson = pearson(preds, targets);
    report.spearman = spearman(preds, targets);
    return report;
}

namespace {

// Unit-normalize rows; rows with vanishing norm are left as zero vectors.
Matrix normalized_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t i = 0; i < out.rows; ++i) {
        double n = l2_norm(out.row(i));
        if (n < 1e-12) {
            std::fill(out.row(i).begin(), out.row(i).end(), 0.0);
        } else {
            for (double& v : out.row(i)) v /= n;
        }
    }
    return out;
}

}  // namespace

AlignmentReport alignment_analysis(const Matrix& h_l1, const Matrix& h_en, std::uint64_t seed) {
    if (!h_l1.same_shape(h_en)) throw std::invalid_argument("alignment: shape mismatch");
    const std::size_t n = h_l1.rows;
    if (n < 2) throw std::invalid_argument("alignment: need >= 2 rows for a derangement");

    Matrix a = normalized_rows(h_l1);
    Matrix b = normalized_rows(h_en);

    AlignmentReport report;
    report.aligned.reserve(n);
    for (std::size_t i = 0; i < n; ++i) report.aligned.push_back(dot(a.row(i), b.row(i)));

    Rng rng(seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t attempt = 0;; ++attempt) {
        if (attempt > 100000) throw NumericError("alignment: failed to sample a derangement");
        rng.shuffle(perm);
        bool fixed_point = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (perm[i] == i) {
                fixed_point = true;
                break;
            }
        }
        if (!fixed_point) break;
    }
    report.random.reserve(n);
    for (std::size_t i = 0; i < n; ++i) report.random.push_back(dot(a.row(i), b.row(perm[i])));

    report.mean_aligned = mean(report.aligned);
    report.mean_random = mean(report.random);
    report.gap = report.mean_aligned - report.mean_random;
    return report;
}

BinAssignment quantile_bins(std::span<const double> values, std::size_t k) {
    if (values.empty()) throw std::invalid_argument("quantile_bins: empty input");
    if (k < 1) throw std::invalid_argument("quantile_bins: k must be >= 1");
    const std::size_t n = values.size();
    std::vector<double> ranks = average_ranks(values);
    BinAssignment out;
    out.k_requested = k;
    out.bin.resize(n);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto raw = static_cast<std::size_t>((ranks[i] - 1.0) * static_cast<double>(k) /
                                            static_cast<double>(n));
        out.bin[i] = std::min(raw, k - 1);
        ++counts[out.bin[i]];
    }
    std::vector<std::size_t> relabel(k, 0);
    std::size_t next = 0;
    for (std::size_t b = 0; b < k; ++b) {
        relabel[b] = next;
        if (counts[b] > 0) ++next;
    }
    out.k_effective = next;
    if (out.k_effective < k) {
        for (std::size_t i = 0; i < n; ++i) out.bin[i] = relabel[out.bin[i]];
        out.note = "merged " + std::to_string(k - out.k_effective) +
                   " empty quantile bins (ties span bin boundaries)";
    }
    return out;
}

namespace {

BinTable bin_table_from(const BinAssignment& assignment, std::span<const double> binned_values,
                        std::span<const double> stats) {
    BinTable table;
    table.k_requested = assignment.k_requested;
    table.note = assignment.note;
    table.bins.resize(assignment.k_effective);
    std::vector<bool> seen(assignment.k_effective, false);
    for (std::size_t i = 0; i < binned_values.size(); ++i) {
        BinRow& row = table.bins[assignment.bin[i]];
        if (!seen[assignment.bin[i]]) {
            row.lo = binned_values[i];
            row.hi = binned_values[i];
            seen[assignment.bin[i]] = true;
        } else {
            row.lo = std::min(row.lo, binned_values[i]);
            row.hi = std::max(row.hi, binned_values[i]);
        }
        row.count += 1;
        row.stat += stats[i];
    }
    for (BinRow& row : table.bins) {
        row.stat /= static_cast<double>(row.count);
    }
    return table;
}

}  // namespace

OrdinalReport ordinal_structure(const Matrix& embeddings, std::span<const double> y,
                                std::size_t k_bins, std::size_t sample_n, std::uint64_t seed) {
    const std::size_t n = embeddings.rows;
    if (y.size() != n) throw std::invalid_argument("ordinal_structure: score length mismatch");
    if (n < 2) throw std::invalid_argument("ordinal_structure: need >= 2 items");
    if (k_bins < 2) throw std::invalid_argument("ordinal_structure: k_bins must be >= 2");
    if (sample_n < 2 || sample_n > n) {
        throw std::invalid_argument("ordinal_structure: sample_n must be in [2, N]");
    }

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(sample_n);
    std::sort(idx.begin(), idx.end());

    Matrix u = normalized_rows(embeddings);
    std::vector<double> dist;
    std::vector<double> gap;
    dist.reserve(sample_n * (sample_n - 1) / 2);
    gap.reserve(dist.capacity());
    for (std::size_t a = 0; a < sample_n; ++a) {
        for (std::size_t b = a + 1; b < sample_n; ++b) {
            std::size_t i = idx[a];
            std::size_t j = idx[b];
            dist.push_back(1.0 - dot(u.row(i), u.row(j)));
            gap.push_back(std::abs(y[i] - y[j]));
        }
    }

    OrdinalReport report;
    report.n_sampled = sample_n;
    report.n_pairs = dist.size();
    BinAssignment assignment = quantile_bins(gap, k_bins);
    report.distance_bins = bin_table_from(assignment, gap, dist);
    report.spearman_distance_gap = spearman(dist, gap);
    return report;
}

BinTable difficulty_bin_error(std::span<const double> preds, std::span<const double> targets,
                              std::size_t k_bins) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw std::invalid_argument("difficulty_bin_error: size mismatch or empty input");
    }
    if (k_bins < 2) throw std::invalid_argument("difficulty_bin_error: k_bins must be >= 2");
    std::vector<double> abs_err;
    abs_err.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        abs_err.push_back(std::abs(preds[i] - targets[i]));
    }
    // bin 0 holds the lowest scores; lower score = harder item, so the
    // table reads hardest -> easiest
    BinAssignment assignment = quantile_bins(targets, k_bins);
    return bin_table_from(assignment, targets, abs_err);
}

double feature_context_length(const corpus::LexicalRecord& rec) {
    return static_cast<double>(split_whitespace(rec.l1_context).size());
}

double feature_lexical_diversity(const corpus::LexicalRecord& rec) {
    std::vector<std::string> tokens = split_whitespace(rec.l1_context);
    if (tokens.empty()) return 0.0;
    std::vector<std::string> distinct;
    distinct.reserve(tokens.size());
    for (const std::string& t : tokens) distinct.push_back(lowercase_ascii(t));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    return static_cast<double>(distinct.size()) / static_cast<double>(tokens.size());
}

double feature_target_word_length(const corpus::LexicalRecord& rec) {
    return static_cast<double>(rec.en_target.size());
}

double feature_orthographic_complexity(const corpus::LexicalRecord& rec) {
    if (rec.en_target.empty()) return 0.0;
    std::array<std::size_t, 256> counts{};
    for (unsigned char c : rec.en_target) ++counts[c];
    double n = static_cast<double>(rec.en_target.size());
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

std::vector<ConditionReport> input_sensitivity(const std::vector<corpus::LexicalRecord>& records,
                                               std::span<const double> preds) {
    if (records.size() != preds.size() || records.empty()) {
        throw std::invalid_argument("input_sensitivity: size mismatch or empty input");
    }
    const std::size_t n = records.size();
    std::vector<double> abs_err(n);
    for (std::size_t i = 0; i < n; ++i) {
        abs_err[i] = std::abs(preds[i] - records[i].glmm_score);
    }

    struct Condition {
        const char* name;
        double (*feature)(const corpus::LexicalRecord&);
    };
    const Condition conditions[] = {
        {"context_length", feature_context_length},
        {"lexical_diversity", feature_lexical_diversity},
        {"target_word_length", feature_target_word_length},
        {"orthographic_complexity", feature_orthographic_complexity},
    };

    std::vector<ConditionReport> reports;
    for (const Condition& cond : conditions) {
        ConditionReport report;
        report.name = cond.name;
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) values[i] = cond.feature(records[i]);

        auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
        if (*lo_it == *hi_it) {
            report.skipped = true;
            report.note = "constant feature; no median split possible";
            reports.push_back(std::move(report));
            continue;
        }
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        double median = n % 2 == 1 ? sorted[n / 2]
                                   : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
        report.median = median;
        double low_sum = 0.0;
        double high_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (values[i] <= median) {
                low_sum += abs_err[i];
                ++report.n_low;
            } else {
                high_sum += abs_err[i];
                ++report.n_high;
            }
        }
        if (report.n_high == 0) {
            report.skipped = true;
            report.note = "degenerate split: no values above the median";
            reports.push_back(std::move(report));
            continue;
        }
        report.low_mae = low_sum / static_cast<double>(report.n_low);
        report.high_mae = high_sum / static_cast<double>(report.n_high);
        report.improvement_pct =
            report.low_mae == 0.0 ? 0.0
                                  : (report.low_mae - report.high_mae) / report.low_mae * 100.0;
        reports.push_back(std::move(report));
    }
    return reports;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

}  // namespace

void save_metric_report(const std::filesystem::path& path, const MetricReport& report) {
    json doc = {{"rmse", report.rmse},
                {"mse", report.mse},
                {"mae", report.mae},
                {"pearson", optional_to_json(report.pearson)},
                {"spearman", optional_to_json(report.spearman)},
                {"n", report.n}};
    write_text_file(path, doc.dump(2) + "\n");
}

void save_alignment_report(const std::filesystem::path& path, const AlignmentReport& report,
                           std::uint64_t seed) {
    json doc = {{"n", report.aligned.size()},
                {"seed", seed},
                {"mean_aligned", report.mean_aligned},
                {"mean_random", report.mean_random},
                {"gap", report.gap},
                {"aligned", report.aligned},
                {"random", report.random}};
    write_text_file(path, doc.dump(2) + "\n");
}

namespace {

json bin_rows_json(const BinTable& table, const char* lo_key, const char* hi_key,
                   const char* stat_key) {
    json bins = json::array();
    for (const BinRow& row : table.bins) {
        bins.push_back(
            {{lo_key, row.lo}, {hi_key, row.hi}, {"count", row.count}, {stat_key, row.stat}});
    }
    return bins;
}

}  // namespace

void save_ordinal_report(const std::filesystem::path& path, const OrdinalReport& report) {
    json doc = {{"n_sampled", report.n_sampled},
                {"n_pairs", report.n_pairs},
                {"k_requested", report.distance_bins.k_requested},
                {"k_effective", report.distance_bins.bins.size()},
                {"note", report.distance_bins.note},
                {"spearman", optional_to_json(report.spearman_distance_gap)},
                {"bins", bin_rows_json(report.distance_bins, "gap_lo", "gap_hi", "mean_distance")}};
    write_text_file(path, doc.dump(2) + "\n");
}

void save_bin_report(const std::filesystem::path& path, const BinTable& table, double global_mae,
                     std::size_t n) {
    json doc = {{"k_requested", table.k_requested},
                {"k_effective", table.bins.size()},
                {"note", table.note},
                {"global_mae", global_mae},
                {"n", n},
                {"bins", bin_rows_json(table, "score_lo", "score_hi", "mae")}};
    write_text_file(path, doc.dump(2) + "\n");
}

void save_sensitivity_report(const std::filesystem::path& path,
                             const std::vector<ConditionReport>& conditions) {
    json rows = json::array();
    for (const ConditionReport& c : conditions) {
        rows.push_back({{"name", c.name},
                        {"skipped", c.skipped},
                        {"note", c.note},
                        {"median", c.median},
                        {"n_low", c.n_low},
                        {"n_high", c.n_high},
                        {"low_mae", c.low_mae},
                        {"high_mae", c.high_mae},
                        {"improvement_pct", c.improvement_pct}});
    }
    json doc = {{"conditions", rows}};
    write_text_file(path, doc.dump(2) + "\n");
}

void write_bin_table_csv(const std::filesystem::path& path, const BinTable& table,
                         const std::string& value_label, const std::string& stat_label) {
    std::string out =
        value_label + "_lo," + value_label + "_hi,count," + stat_label + "\n";
    for (const BinRow& row : table.bins) {
        out += format_double(row.lo);
        out += ',';
        out += format_double(row.hi);
        out += ',';
        out += std::to_string(row.count);
        out += ',';
        out += format_double(row.stat);
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace lexdiff::analysis
