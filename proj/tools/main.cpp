#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lexdiff/analysis.hpp"
#include "lexdiff/corpus.hpp"
#include "lexdiff/encoder.hpp"
#include "lexdiff/ensemble.hpp"
#include "lexdiff/objectives.hpp"
#include "lexdiff/trainer.hpp"
#include "lexdiff/util.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lexdiff;

constexpr const char* kVersion = "0.1.0";

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

// One manifest per artifact-producing command, next to its primary output.
void write_manifest(const fs::path& manifest_path, const std::string& command,
                    const json& details, double seconds) {
    json doc = details;
    doc["command"] = command;
    doc["tool_version"] = kVersion;
    doc["duration_seconds"] = seconds;
    write_text_file(manifest_path, doc.dump(2) + "\n");
}

fs::path sibling_manifest(const fs::path& primary_output) {
    return fs::path(primary_output.string() + ".manifest.json");
}

// Generic two-column CSV "id,<label>"; used for targets files.
std::pair<std::vector<std::string>, std::vector<double>> read_two_col_csv(const fs::path& path) {
    std::vector<std::string> lines = split(read_text_file(path), '\n');
    for (std::string& line : lines) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw DataError(path.string() + ": empty file");
    std::vector<std::string> header = split(lines[0], ',');
    if (header.size() != 2 || header[0] != "id") {
        throw DataError(path.string() + ": expected a two-column header 'id,<label>'");
    }
    std::vector<std::string> ids;
    std::vector<double> values;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> parts = split(lines[i], ',');
        if (parts.size() != 2) {
            throw DataError(path.string() + " line " + std::to_string(i + 1) +
                            ": expected 2 fields");
        }
        ids.push_back(parts[0]);
        try {
            values.push_back(parse_double(parts[1]));
        } catch (const std::exception&) {
            throw DataError(path.string() + " line " + std::to_string(i + 1) + ": bad number '" +
                            parts[1] + "'");
        }
    }
    return {std::move(ids), std::move(values)};
}

std::pair<std::string, std::string> parse_named_path(const std::string& arg) {
    std::size_t eq = arg.find('=');
    if (eq != std::string::npos) {
        std::string name = arg.substr(0, eq);
        std::string path = arg.substr(eq + 1);
        if (name.empty() || path.empty()) {
            throw ConfigError("expected name=path, got '" + arg + "'");
        }
        return {name, path};
    }
    return {fs::path(arg).stem().string(), arg};
}

std::vector<double> parse_alpha_grid(const std::string& text) {
    std::vector<double> grid;
    for (const std::string& part : split(text, ',')) {
        if (part.empty()) throw ConfigError("empty entry in alpha grid '" + text + "'");
        grid.push_back(parse_double(part));
        if (!(grid.back() >= 0.0)) throw ConfigError("alpha grid entries must be >= 0");
    }
    if (grid.empty()) throw ConfigError("alpha grid is empty");
    return grid;
}

std::map<std::string, double> by_id(const std::vector<std::string>& ids,
                                    const std::vector<double>& values, const std::string& what) {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!m.emplace(ids[i], values[i]).second) {
            throw DataError(what + ": duplicate id '" + ids[i] + "'");
        }
    }
    return m;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    std::string config_path;
    std::string out_path;
    std::int64_t seed = -1;
    bool seed_set = false;
};

void run_synth(const SynthOpts& opts) {
    Stopwatch timer;
    corpus::SynthConfig config = corpus::load_synth_config(opts.config_path);
    if (opts.seed_set) config.seed = static_cast<std::uint64_t>(opts.seed);
    config.validate();
    corpus::Dataset dataset = corpus::generate_synthetic(config);
    corpus::write_dataset(dataset, opts.out_path);
    json details = {{"inputs", {{"config", opts.config_path}}},
                    {"outputs", {{"dataset", opts.out_path}}},
                    {"seed", config.seed},
                    {"config_echo",
                     {{"n_train", config.n_train},
                      {"n_dev", config.n_dev},
                      {"n_test", config.n_test},
                      {"vocab_size", config.vocab_size},
                      {"noise_std", config.noise_std},
                      {"seed", config.seed}}},
                    {"n_records", dataset.records.size()}};
    write_manifest(sibling_manifest(opts.out_path), "synth", details, timer.seconds());
    std::cout << "wrote " << dataset.records.size() << " records to " << opts.out_path << "\n";
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    std::string data_path;
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
    bool seed_set = false;
};

void run_train(const TrainOpts& opts) {
    Stopwatch timer;
    corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
    trainer::TrainConfig config = opts.config_path.empty()
                                      ? trainer::TrainConfig::toy_profile()
                                      : trainer::load_train_config(opts.config_path);
    if (opts.seed_set) config.seed = static_cast<std::uint64_t>(opts.seed);
    config.validate();

    trainer::TrainResult result = trainer::train(dataset, config);

    fs::create_directories(opts.out_dir);
    fs::path checkpoint_path = fs::path(opts.out_dir) / "checkpoint.json";
    fs::path history_path = fs::path(opts.out_dir) / "history.json";
    fs::path dev_preds_path = fs::path(opts.out_dir) / "dev_predictions.csv";
    encoder::save_checkpoint(checkpoint_path, result.params, config.seed);
    trainer::save_history(history_path, result.history);

    trainer::Predictions dev_preds;
    for (std::size_t idx : dataset.split_indices(corpus::Split::dev)) {
        dev_preds.ids.push_back(dataset.records[idx].id);
    }
    dev_preds.values = trainer::predict(result.params, dataset, corpus::Split::dev,
                                        {config.max_len, config.sep});
    trainer::write_predictions_csv(dev_preds_path, dev_preds);

    json history_echo = json::array();
    for (const trainer::EpochRecord& r : result.history.epochs) {
        history_echo.push_back({{"train_loss", r.train_loss}, {"dev_mse", r.dev_mse}});
    }
    json details = {{"inputs", {{"dataset", opts.data_path}, {"config", opts.config_path}}},
                    {"outputs",
                     {{"checkpoint", checkpoint_path.string()},
                      {"history", history_path.string()},
                      {"dev_predictions", dev_preds_path.string()}}},
                    {"seed", config.seed},
                    {"best_epoch", result.history.best_epoch},
                    {"history", history_echo},
                    {"meta_learner_convention", "stacking features come from the dev split"}};
    write_manifest(fs::path(opts.out_dir) / "manifest.json", "train", details, timer.seconds());
    std::cout << "best_epoch=" << result.history.best_epoch
              << " dev_mse=" << result.history.epochs[result.history.best_epoch].dev_mse << "\n";
}

// ---------------------------------------------------------------- predict

struct PredictOpts {
    std::string checkpoint_path;
    std::string data_path;
    std::string split = "test";
    std::string out_path;
    std::size_t max_len = 128;
    std::size_t max_len_ctx = 32;
    std::string sep = corpus::kDefaultSep;
    std::string embeddings_out;
    std::string embedding_view = "en_tgt";
    std::string embedding_space = "projection";
    std::int64_t seed = 0;  // accepted for interface uniformity, unused
};

void run_predict(const PredictOpts& opts) {
    Stopwatch timer;
    encoder::Checkpoint ckpt = encoder::load_checkpoint(opts.checkpoint_path);
    corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
    corpus::Split split = corpus::split_from_string(opts.split);
    std::vector<std::size_t> indices = dataset.split_indices(split);
    if (indices.empty()) throw DataError("split '" + opts.split + "' is empty");

    trainer::Predictions preds;
    for (std::size_t idx : indices) preds.ids.push_back(dataset.records[idx].id);
    preds.values = trainer::predict(ckpt.params, dataset, split, {opts.max_len, opts.sep});
    trainer::write_predictions_csv(opts.out_path, preds);

    json details = {{"inputs", {{"checkpoint", opts.checkpoint_path}, {"dataset", opts.data_path}}},
                    {"outputs", {{"predictions", opts.out_path}}},
                    {"split", opts.split},
                    {"n", preds.ids.size()}};

    if (!opts.embeddings_out.empty()) {
        corpus::View view = corpus::view_from_string(opts.embedding_view);
        bool projection_space;
        if (opts.embedding_space == "projection") {
            projection_space = true;
        } else if (opts.embedding_space == "model") {
            projection_space = false;
        } else {
            throw ConfigError("embedding space must be 'projection' or 'model'");
        }
        std::size_t max_len = (view == corpus::View::en_ctx ||
                               view == corpus::View::en_ctx_plus_en_tgt)
                                  ? opts.max_len_ctx
                                  : opts.max_len;
        ensemble::EmbeddingTable table;
        const encoder::EncoderConfig& ec = ckpt.params.config;
        table.values = Matrix(indices.size(), projection_space ? ec.d_proj : ec.d_model);
        std::size_t row = 0;
        for (std::size_t idx : indices) {
            const corpus::LexicalRecord& rec = dataset.records[idx];
            table.ids.push_back(rec.id);
            corpus::TokenSequence seq =
                corpus::tokenize(corpus::build_view(rec, view, opts.sep), max_len, opts.sep);
            std::vector<double> h = encoder::encode(ckpt.params, seq);
            std::vector<double> out = projection_space ? encoder::project(ckpt.params, h) : h;
            std::copy(out.begin(), out.end(), table.values.row(row).begin());
            ++row;
        }
        ensemble::write_embeddings_csv(opts.embeddings_out, table);
        details["outputs"]["embeddings"] = opts.embeddings_out;
        details["embedding_view"] = opts.embedding_view;
        details["embedding_space"] = opts.embedding_space;
    }
    write_manifest(sibling_manifest(opts.out_path), "predict", details, timer.seconds());
    std::cout << "wrote " << preds.ids.size() << " predictions to " << opts.out_path << "\n";
}

// ---------------------------------------------------------------- ensemble

struct EnsembleOpts {
    std::vector<std::string> pred_args;
    std::string targets_path;
    std::string data_path;
    std::string split = "dev";
    std::string alpha_grid_text = "0.01,0.1,1.0,10.0,100.0";
    std::size_t folds = 5;
    std::int64_t seed = 0;
    std::string out_model;
    std::string out_preds;
    std::vector<std::string> apply_args;
    std::string apply_out;
};

ensemble::MetaFeatures join_meta(const std::vector<std::pair<std::string, std::string>>& named,
                                 const std::vector<std::string>& row_ids) {
    ensemble::MetaFeatures meta;
    meta.ids = row_ids;
    meta.z = Matrix(row_ids.size(), named.size());
    std::size_t col = 0;
    for (const auto& [name, path] : named) {
        meta.model_names.push_back(name);
        trainer::Predictions preds = trainer::read_predictions_csv(path);
        std::map<std::string, double> lookup = by_id(preds.ids, preds.values, path);
        if (lookup.size() != row_ids.size()) {
            throw DataError(path + ": id set does not match the target rows (" +
                            std::to_string(lookup.size()) + " vs " +
                            std::to_string(row_ids.size()) + ")");
        }
        for (std::size_t i = 0; i < row_ids.size(); ++i) {
            auto it = lookup.find(row_ids[i]);
            if (it == lookup.end()) {
                throw DataError(path + ": missing id '" + row_ids[i] + "'");
            }
            meta.z(i, col) = it->second;
        }
        ++col;
    }
    return meta;
}

void run_ensemble(const EnsembleOpts& opts) {
    Stopwatch timer;
    std::vector<std::pair<std::string, std::string>> named;
    for (const std::string& arg : opts.pred_args) named.push_back(parse_named_path(arg));
    for (std::size_t i = 0; i < named.size(); ++i) {
        for (std::size_t j = i + 1; j < named.size(); ++j) {
            if (named[i].first == named[j].first) {
                throw ConfigError("duplicate model name '" + named[i].first +
                                  "'; use name=path to disambiguate");
            }
        }
    }

    std::vector<std::string> fit_ids;
    std::vector<double> fit_targets;
    if (!opts.targets_path.empty()) {
        std::tie(fit_ids, fit_targets) = read_two_col_csv(opts.targets_path);
    } else if (!opts.data_path.empty()) {
        corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
        corpus::Split split = corpus::split_from_string(opts.split);
        for (std::size_t idx : dataset.split_indices(split)) {
            fit_ids.push_back(dataset.records[idx].id);
            fit_targets.push_back(dataset.records[idx].glmm_score);
        }
    } else {
        throw ConfigError("provide targets via --targets or --data/--split");
    }
    if (fit_ids.empty()) throw DataError("no target rows to fit the meta-learner on");

    ensemble::MetaFeatures meta = join_meta(named, fit_ids);
    std::vector<double> grid = parse_alpha_grid(opts.alpha_grid_text);
    ensemble::CvResult cv = ensemble::ridge_cv(meta, fit_targets, grid, opts.folds,
                                               static_cast<std::uint64_t>(opts.seed));
    ensemble::save_ridge_model(opts.out_model, cv.model);

    trainer::Predictions blended;
    blended.ids = fit_ids;
    blended.values = ensemble::ridge_predict_all(cv.model, meta);
    trainer::write_predictions_csv(opts.out_preds, blended);

    json cv_table = json::array();
    for (const ensemble::CvEntry& e : cv.table) {
        cv_table.push_back({{"alpha", e.alpha}, {"mean_mse", e.mean_mse}});
    }
    json details = {{"inputs", json::object()},
                    {"outputs", {{"model", opts.out_model}, {"blended", opts.out_preds}}},
                    {"seed", opts.seed},
                    {"folds", opts.folds},
                    {"alpha", cv.best_alpha},
                    {"cv_table", cv_table},
                    {"meta_learner_convention", "fit on the provided target rows (dev split)"}};
    for (const auto& [name, path] : named) details["inputs"][name] = path;
    if (!opts.targets_path.empty()) details["inputs"]["targets"] = opts.targets_path;
    if (!opts.data_path.empty()) {
        details["inputs"]["dataset"] = opts.data_path;
        details["split"] = opts.split;
    }

    if (!opts.apply_args.empty()) {
        if (opts.apply_out.empty()) throw ConfigError("--apply-pred requires --apply-out");
        std::vector<std::pair<std::string, std::string>> apply_named;
        for (const std::string& arg : opts.apply_args) apply_named.push_back(parse_named_path(arg));
        if (apply_named.size() != named.size()) {
            throw ConfigError("--apply-pred needs one file per fitted model");
        }
        // keep fitted column order; names must match one-to-one
        std::vector<std::pair<std::string, std::string>> ordered;
        for (const auto& [name, _] : named) {
            bool found = false;
            for (const auto& [aname, apath] : apply_named) {
                if (aname == name) {
                    ordered.emplace_back(aname, apath);
                    found = true;
                    break;
                }
            }
            if (!found) throw ConfigError("--apply-pred missing model '" + name + "'");
        }
        trainer::Predictions first = trainer::read_predictions_csv(ordered[0].second);
        ensemble::MetaFeatures apply_meta = join_meta(ordered, first.ids);
        trainer::Predictions applied;
        applied.ids = first.ids;
        applied.values = ensemble::ridge_predict_all(cv.model, apply_meta);
        trainer::write_predictions_csv(opts.apply_out, applied);
        details["outputs"]["applied"] = opts.apply_out;
    } else if (!opts.apply_out.empty()) {
        throw ConfigError("--apply-out requires --apply-pred");
    }

    write_manifest(sibling_manifest(opts.out_model), "ensemble", details, timer.seconds());
    std::cout << "alpha=" << cv.best_alpha << " models=" << named.size() << "\n";
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOpts {
    std::string pred_path;
    std::string data_path;
    std::string split = "test";
    std::string out_path;
    std::int64_t seed = 0;  // accepted for interface uniformity, unused
};

void run_evaluate(const EvaluateOpts& opts) {
    Stopwatch timer;
    trainer::Predictions preds = trainer::read_predictions_csv(opts.pred_path);
    corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
    corpus::Split split = corpus::split_from_string(opts.split);

    std::map<std::string, double> targets;
    for (std::size_t idx : dataset.split_indices(split)) {
        targets.emplace(dataset.records[idx].id, dataset.records[idx].glmm_score);
    }
    if (targets.size() != preds.ids.size()) {
        throw DataError("prediction rows (" + std::to_string(preds.ids.size()) +
                        ") do not cover the " + opts.split + " split (" +
                        std::to_string(targets.size()) + " records)");
    }
    std::vector<double> y;
    y.reserve(preds.ids.size());
    for (const std::string& id : preds.ids) {
        auto it = targets.find(id);
        if (it == targets.end()) {
            throw DataError("prediction id '" + id + "' is not in the " + opts.split + " split");
        }
        y.push_back(it->second);
    }

    analysis::MetricReport report = analysis::compute_metrics(preds.values, y);
    analysis::save_metric_report(opts.out_path, report);
    json details = {{"inputs", {{"predictions", opts.pred_path}, {"dataset", opts.data_path}}},
                    {"outputs", {{"report", opts.out_path}}},
                    {"split", opts.split},
                    {"n", report.n}};
    write_manifest(sibling_manifest(opts.out_path), "evaluate", details, timer.seconds());
    std::cout << "rmse=" << format_double(report.rmse) << " mae=" << format_double(report.mae)
              << " n=" << report.n << "\n";
}

// ---------------------------------------------------------------- analyze

std::vector<double> targets_for_ids(const corpus::Dataset& dataset,
                                    const std::vector<std::string>& ids) {
    std::map<std::string, double> lookup;
    for (const corpus::LexicalRecord& rec : dataset.records) {
        lookup.emplace(rec.id, rec.glmm_score);
    }
    std::vector<double> y;
    y.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = lookup.find(id);
        if (it == lookup.end()) throw DataError("id '" + id + "' is not in the dataset");
        y.push_back(it->second);
    }
    return y;
}

struct AlignOpts {
    std::string l1_path;
    std::string en_path;
    std::string out_path;
    std::int64_t seed = 0;
};

void run_analyze_alignment(const AlignOpts& opts) {
    Stopwatch timer;
    ensemble::EmbeddingTable l1 = ensemble::read_embeddings_csv(opts.l1_path);
    ensemble::EmbeddingTable en = ensemble::read_embeddings_csv(opts.en_path);
    if (l1.ids != en.ids) {
        // same set in a different order is fine; reorder en to match
        std::map<std::string, std::size_t> where;
        for (std::size_t i = 0; i < en.ids.size(); ++i) where.emplace(en.ids[i], i);
        if (where.size() != l1.ids.size() || en.ids.size() != l1.ids.size()) {
            throw DataError("embedding CSVs do not cover the same ids");
        }
        Matrix reordered(en.values.rows, en.values.cols);
        for (std::size_t i = 0; i < l1.ids.size(); ++i) {
            auto it = where.find(l1.ids[i]);
            if (it == where.end()) {
                throw DataError("id '" + l1.ids[i] + "' missing from " + opts.en_path);
            }
            std::copy(en.values.row(it->second).begin(), en.values.row(it->second).end(),
                      reordered.row(i).begin());
        }
        en.values = std::move(reordered);
        en.ids = l1.ids;
    }
    analysis::AlignmentReport report =
        analysis::alignment_analysis(l1.values, en.values, static_cast<std::uint64_t>(opts.seed));
    analysis::save_alignment_report(opts.out_path, report, static_cast<std::uint64_t>(opts.seed));
    json details = {{"inputs", {{"l1", opts.l1_path}, {"en", opts.en_path}}},
                    {"outputs", {{"report", opts.out_path}}},
                    {"seed", opts.seed}};
    write_manifest(sibling_manifest(opts.out_path), "analyze alignment", details, timer.seconds());
    std::cout << "gap=" << format_double(report.gap) << "\n";
}

struct OrdinalOpts {
    std::string embeddings_path;
    std::string data_path;
    std::string out_path;
    std::size_t k_bins = analysis::kOrdinalDefaultBins;
    std::size_t sample_n = 0;  // 0 = min(N, default cap)
    std::int64_t seed = 0;
};

void run_analyze_ordinal(const OrdinalOpts& opts) {
    Stopwatch timer;
    ensemble::EmbeddingTable table = ensemble::read_embeddings_csv(opts.embeddings_path);
    corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
    std::vector<double> y = targets_for_ids(dataset, table.ids);
    std::size_t sample_n = opts.sample_n;
    if (sample_n == 0) {
        sample_n = std::min(table.ids.size(), analysis::kOrdinalDefaultSample);
    }
    analysis::OrdinalReport report = analysis::ordinal_structure(
        table.values, y, opts.k_bins, sample_n, static_cast<std::uint64_t>(opts.seed));
    analysis::save_ordinal_report(opts.out_path, report);
    json details = {{"inputs", {{"embeddings", opts.embeddings_path}, {"dataset", opts.data_path}}},
                    {"outputs", {{"report", opts.out_path}}},
                    {"seed", opts.seed},
                    {"k_bins", opts.k_bins},
                    {"sample_n", sample_n}};
    write_manifest(sibling_manifest(opts.out_path), "analyze ordinal", details, timer.seconds());
    if (report.spearman_distance_gap.has_value()) {
        std::cout << "spearman=" << format_double(*report.spearman_distance_gap) << "\n";
    } else {
        std::cout << "spearman=undefined\n";
    }
}

struct BinsOpts {
    std::string pred_path;
    std::string data_path;
    std::string out_path;
    std::string csv_out;
    std::size_t k_bins = 5;
    std::int64_t seed = 0;  // accepted for interface uniformity, unused
};

void run_analyze_bins(const BinsOpts& opts) {
    Stopwatch timer;
    trainer::Predictions preds = trainer::read_predictions_csv(opts.pred_path);
    corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
    std::vector<double> y = targets_for_ids(dataset, preds.ids);
    analysis::BinTable table = analysis::difficulty_bin_error(preds.values, y, opts.k_bins);
    double mae = analysis::compute_metrics(preds.values, y).mae;
    analysis::save_bin_report(opts.out_path, table, mae, preds.ids.size());
    if (!opts.csv_out.empty()) {
        analysis::write_bin_table_csv(opts.csv_out, table, "score", "mae");
    }
    json details = {{"inputs", {{"predictions", opts.pred_path}, {"dataset", opts.data_path}}},
                    {"outputs", {{"report", opts.out_path}}},
                    {"k_bins", opts.k_bins}};
    if (!opts.csv_out.empty()) details["outputs"]["csv"] = opts.csv_out;
    write_manifest(sibling_manifest(opts.out_path), "analyze bins", details, timer.seconds());
    std::cout << "bins=" << table.bins.size() << " global_mae=" << format_double(mae) << "\n";
}

struct SensitivityOpts {
    std::string pred_path;
    std::string data_path;
    std::string out_path;
    std::int64_t seed = 0;  // accepted for interface uniformity, unused
};

void run_analyze_sensitivity(const SensitivityOpts& opts) {
    Stopwatch timer;
    trainer::Predictions preds = trainer::read_predictions_csv(opts.pred_path);
    corpus::Dataset dataset = corpus::load_dataset(opts.data_path);
    std::map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        where.emplace(dataset.records[i].id, i);
    }
    std::vector<corpus::LexicalRecord> records;
    records.reserve(preds.ids.size());
    for (const std::string& id : preds.ids) {
        auto it = where.find(id);
        if (it == where.end()) throw DataError("id '" + id + "' is not in the dataset");
        records.push_back(dataset.records[it->second]);
    }
    std::vector<analysis::ConditionReport> conditions =
        analysis::input_sensitivity(records, preds.values);
    analysis::save_sensitivity_report(opts.out_path, conditions);
    json details = {{"inputs", {{"predictions", opts.pred_path}, {"dataset", opts.data_path}}},
                    {"outputs", {{"report", opts.out_path}}}};
    write_manifest(sibling_manifest(opts.out_path), "analyze sensitivity", details,
                   timer.seconds());
    std::cout << "conditions=" << conditions.size() << "\n";
}

struct FuseOpts {
    std::vector<std::string> embedding_args;
    std::string model_path;
    std::string weights_text;
    std::string out_path;
    std::int64_t seed = 0;  // accepted for interface uniformity, unused
};

void run_analyze_fuse(const FuseOpts& opts) {
    Stopwatch timer;
    std::vector<std::pair<std::string, std::string>> named;
    for (const std::string& arg : opts.embedding_args) named.push_back(parse_named_path(arg));
    if (named.empty()) throw ConfigError("provide at least one --embeddings file");

    std::vector<double> weights;
    if (!opts.model_path.empty()) {
        ensemble::RidgeModel model = ensemble::load_ridge_model(opts.model_path);
        for (const auto& [name, _] : named) {
            bool found = false;
            for (std::size_t k = 0; k < model.model_names.size(); ++k) {
                if (model.model_names[k] == name) {
                    weights.push_back(model.weights[k]);
                    found = true;
                    break;
                }
            }
            if (!found) {
                throw ConfigError("model '" + name + "' has no weight in " + opts.model_path);
            }
        }
    } else if (!opts.weights_text.empty()) {
        for (const std::string& part : split(opts.weights_text, ',')) {
            weights.push_back(parse_double(part));
        }
        if (weights.size() != named.size()) {
            throw ConfigError("need one weight per embedding file");
        }
    } else {
        throw ConfigError("provide blending weights via --model or --weights");
    }

    std::vector<ensemble::EmbeddingTable> tables;
    for (const auto& [_, path] : named) tables.push_back(ensemble::read_embeddings_csv(path));
    const std::vector<std::string>& ids = tables[0].ids;
    std::vector<Matrix> mats;
    for (std::size_t k = 0; k < tables.size(); ++k) {
        if (tables[k].ids != ids) {
            throw DataError(named[k].second + ": id order does not match " + named[0].second);
        }
        mats.push_back(std::move(tables[k].values));
    }
    ensemble::EmbeddingTable fused;
    fused.ids = ids;
    fused.values = ensemble::fuse_embeddings(mats, weights);
    ensemble::write_embeddings_csv(opts.out_path, fused);
    json details = {{"inputs", json::object()},
                    {"outputs", {{"fused", opts.out_path}}},
                    {"weights", weights}};
    for (const auto& [name, path] : named) details["inputs"][name] = path;
    if (!opts.model_path.empty()) details["inputs"]["model"] = opts.model_path;
    write_manifest(sibling_manifest(opts.out_path), "analyze fuse", details, timer.seconds());
    std::cout << "fused " << ids.size() << " rows x " << fused.values.cols << " dims\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"L1-aware lexical difficulty prediction: training, stacking and analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SynthOpts synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset TSV");
    synth_cmd->add_option("--config", synth.config_path, "Generator config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    synth_cmd->add_option("--out", synth.out_path, "Output dataset TSV")->required();
    auto* synth_seed = synth_cmd->add_option("--seed", synth.seed, "Override the generator seed");
    synth_cmd->callback([&] {
        synth.seed_set = synth_seed->count() > 0;
        run_synth(synth);
    });

    TrainOpts train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train one base model");
    train_cmd->add_option("--data", train.data_path, "Dataset TSV")
        ->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--config", train.config_path,
                          "Train config JSON (defaults to the toy profile)")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->required();
    auto* train_seed = train_cmd->add_option("--seed", train.seed, "Override the training seed");
    train_cmd->callback([&] {
        train.seed_set = train_seed->count() > 0;
        run_train(train);
    });

    PredictOpts predict;
    CLI::App* predict_cmd = app.add_subcommand("predict", "Score a dataset split");
    predict_cmd->add_option("--checkpoint", predict.checkpoint_path, "Checkpoint JSON")
        ->required()
        ->check(CLI::ExistingFile);
    predict_cmd->add_option("--data", predict.data_path, "Dataset TSV")
        ->required()
        ->check(CLI::ExistingFile);
    predict_cmd->add_option("--split", predict.split, "train, dev or test (default test)");
    predict_cmd->add_option("--out", predict.out_path, "Output predictions CSV")->required();
    predict_cmd->add_option("--max-len", predict.max_len, "Token budget for full inputs");
    predict_cmd->add_option("--max-len-ctx", predict.max_len_ctx,
                            "Token budget for context-only views");
    predict_cmd->add_option("--sep", predict.sep, "Separator token");
    predict_cmd->add_option("--embeddings-out", predict.embeddings_out,
                            "Also export per-item embeddings CSV");
    predict_cmd->add_option("--embedding-view", predict.embedding_view,
                            "View to embed: full_input, en_tgt, en_ctx, en_ctx_plus_en_tgt");
    predict_cmd->add_option("--embedding-space", predict.embedding_space,
                            "projection (unit vectors) or model (hidden vectors)");
    predict_cmd->add_option("--seed", predict.seed,
                            "Accepted for interface uniformity; prediction is deterministic");
    predict_cmd->callback([&] { run_predict(predict); });

    EnsembleOpts ens;
    CLI::App* ens_cmd = app.add_subcommand("ensemble", "Fit the ridge stacking meta-learner");
    ens_cmd->add_option("--pred", ens.pred_args,
                        "Base-model predictions CSV, repeatable; name=path or path")
        ->required();
    ens_cmd->add_option("--targets", ens.targets_path, "Targets CSV 'id,<label>'")
        ->check(CLI::ExistingFile);
    ens_cmd->add_option("--data", ens.data_path, "Dataset TSV providing targets")
        ->check(CLI::ExistingFile);
    ens_cmd->add_option("--split", ens.split, "Split providing targets (default dev)");
    ens_cmd->add_option("--alpha-grid", ens.alpha_grid_text, "Comma-separated ridge penalties");
    ens_cmd->add_option("--folds", ens.folds, "Cross-validation folds (default 5)");
    ens_cmd->add_option("--seed", ens.seed, "Fold-assignment seed");
    ens_cmd->add_option("--out-model", ens.out_model, "Output ridge model JSON")->required();
    ens_cmd->add_option("--out-preds", ens.out_preds, "Blended predictions on the fit rows")
        ->required();
    ens_cmd->add_option("--apply-pred", ens.apply_args,
                        "Base-model predictions on another split, repeatable");
    ens_cmd->add_option("--apply-out", ens.apply_out, "Blended predictions for --apply-pred");
    ens_cmd->callback([&] { run_ensemble(ens); });

    EvaluateOpts eval;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score predictions against a split");
    eval_cmd->add_option("--pred", eval.pred_path, "Predictions CSV")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", eval.data_path, "Dataset TSV")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", eval.split, "train, dev or test (default test)");
    eval_cmd->add_option("--out", eval.out_path, "Output metric report JSON")->required();
    eval_cmd->add_option("--seed", eval.seed, "Accepted for interface uniformity");
    eval_cmd->callback([&] { run_evaluate(eval); });

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Representation and error analyses");
    analyze_cmd->require_subcommand(1);

    AlignOpts align;
    CLI::App* align_cmd =
        analyze_cmd->add_subcommand("alignment", "Matched vs deranged pair similarity");
    align_cmd->add_option("--l1", align.l1_path, "Embeddings CSV of the L1-aware view")
        ->required()
        ->check(CLI::ExistingFile);
    align_cmd->add_option("--en", align.en_path, "Embeddings CSV of the English view")
        ->required()
        ->check(CLI::ExistingFile);
    align_cmd->add_option("--out", align.out_path, "Output report JSON")->required();
    align_cmd->add_option("--seed", align.seed, "Derangement seed");
    align_cmd->callback([&] { run_analyze_alignment(align); });

    OrdinalOpts ordinal;
    CLI::App* ordinal_cmd =
        analyze_cmd->add_subcommand("ordinal", "Embedding distance vs score gap");
    ordinal_cmd->add_option("--embeddings", ordinal.embeddings_path, "Embeddings CSV")
        ->required()
        ->check(CLI::ExistingFile);
    ordinal_cmd->add_option("--data", ordinal.data_path, "Dataset TSV providing scores")
        ->required()
        ->check(CLI::ExistingFile);
    ordinal_cmd->add_option("--out", ordinal.out_path, "Output report JSON")->required();
    ordinal_cmd->add_option("--k-bins", ordinal.k_bins, "Quantile bins (default 10)");
    ordinal_cmd->add_option("--sample-n", ordinal.sample_n,
                            "Items to sample (default min(N, 500))");
    ordinal_cmd->add_option("--seed", ordinal.seed, "Sampling seed");
    ordinal_cmd->callback([&] { run_analyze_ordinal(ordinal); });

    BinsOpts bins;
    CLI::App* bins_cmd = analyze_cmd->add_subcommand("bins", "MAE per difficulty quantile bin");
    bins_cmd->add_option("--pred", bins.pred_path, "Predictions CSV")
        ->required()
        ->check(CLI::ExistingFile);
    bins_cmd->add_option("--data", bins.data_path, "Dataset TSV providing scores")
        ->required()
        ->check(CLI::ExistingFile);
    bins_cmd->add_option("--out", bins.out_path, "Output report JSON")->required();
    bins_cmd->add_option("--csv-out", bins.csv_out, "Optional bin table CSV");
    bins_cmd->add_option("--k-bins", bins.k_bins, "Quantile bins (default 5)");
    bins_cmd->add_option("--seed", bins.seed, "Accepted for interface uniformity");
    bins_cmd->callback([&] { run_analyze_bins(bins); });

    SensitivityOpts sens;
    CLI::App* sens_cmd =
        analyze_cmd->add_subcommand("sensitivity", "Median-split MAE per input condition");
    sens_cmd->add_option("--pred", sens.pred_path, "Predictions CSV")
        ->required()
        ->check(CLI::ExistingFile);
    sens_cmd->add_option("--data", sens.data_path, "Dataset TSV")
        ->required()
        ->check(CLI::ExistingFile);
    sens_cmd->add_option("--out", sens.out_path, "Output report JSON")->required();
    sens_cmd->add_option("--seed", sens.seed, "Accepted for interface uniformity");
    sens_cmd->callback([&] { run_analyze_sensitivity(sens); });

    FuseOpts fuse;
    CLI::App* fuse_cmd =
        analyze_cmd->add_subcommand("fuse", "Weighted concatenation of embedding CSVs");
    fuse_cmd->add_option("--embeddings", fuse.embedding_args,
                         "Embeddings CSV, repeatable; name=path or path")
        ->required();
    fuse_cmd->add_option("--model", fuse.model_path, "Ridge model JSON providing weights")
        ->check(CLI::ExistingFile);
    fuse_cmd->add_option("--weights", fuse.weights_text, "Comma-separated weights");
    fuse_cmd->add_option("--out", fuse.out_path, "Output fused embeddings CSV")->required();
    fuse_cmd->add_option("--seed", fuse.seed, "Accepted for interface uniformity");
    fuse_cmd->callback([&] { run_analyze_fuse(fuse); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
