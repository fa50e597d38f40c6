#include "lexdiff/trainer.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "lexdiff/util.hpp"

namespace lexdiff::trainer {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (batch_size < 2 && objective.contrastive_enabled()) {
        throw ConfigError("batch_size must be >= 2 when contrastive weights are active");
    }
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
        throw ConfigError("warmup_ratio must be in [0, 1)");
    }
    if (max_len < 1 || max_len_en_ctx < 1) throw ConfigError("token limits must be >= 1");
    if (sep.empty()) throw ConfigError("sep must be non-empty");
    objective.validate();
    encoder.validate();
}

TrainConfig TrainConfig::toy_profile() {
    TrainConfig c;
    c.learning_rate = 1e-2;
    return c;
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void load_objective(const json& obj, objectives::ObjectiveConfig& o) {
    reject_unknown_keys(obj,
                        {"lambda_cv", "lambda_ord", "tau_cvccl", "tau_oscl", "sigma",
                         "contrastive_view"},
                        "objective config");
    maybe(obj, "lambda_cv", o.lambda_cv);
    maybe(obj, "lambda_ord", o.lambda_ord);
    maybe(obj, "tau_cvccl", o.tau_cvccl);
    maybe(obj, "tau_oscl", o.tau_oscl);
    maybe(obj, "sigma", o.sigma);
    if (obj.contains("contrastive_view")) {
        o.contrastive_view = corpus::view_from_string(obj.at("contrastive_view").get<std::string>());
    }
}

void load_encoder(const json& obj, encoder::EncoderConfig& e) {
    reject_unknown_keys(
        obj, {"n_buckets", "d_embed", "d_hidden", "d_model", "d_proj", "hash_seed", "init_scale"},
        "encoder config");
    maybe(obj, "n_buckets", e.n_buckets);
    maybe(obj, "d_embed", e.d_embed);
    maybe(obj, "d_hidden", e.d_hidden);
    maybe(obj, "d_model", e.d_model);
    maybe(obj, "d_proj", e.d_proj);
    maybe(obj, "hash_seed", e.hash_seed);
    maybe(obj, "init_scale", e.init_scale);
}

}  // namespace

TrainConfig load_train_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("train config " + path.string() + ": " + e.what());
    }
    TrainConfig c;
    try {
        reject_unknown_keys(doc,
                            {"epochs", "batch_size", "learning_rate", "weight_decay",
                             "warmup_ratio", "seed", "objective", "encoder", "max_len",
                             "max_len_en_ctx", "sep", "profile"},
                            "train config");
        if (doc.contains("profile")) {
            std::string name = doc.at("profile").get<std::string>();
            if (name == "toy") {
                c = TrainConfig::toy_profile();
            } else if (name != "paper") {
                throw ConfigError("unknown profile '" + name + "' (expected toy or paper)");
            }
        }
        maybe(doc, "epochs", c.epochs);
        maybe(doc, "batch_size", c.batch_size);
        maybe(doc, "learning_rate", c.learning_rate);
        maybe(doc, "weight_decay", c.weight_decay);
        maybe(doc, "warmup_ratio", c.warmup_ratio);
        maybe(doc, "seed", c.seed);
        maybe(doc, "max_len", c.max_len);
        maybe(doc, "max_len_en_ctx", c.max_len_en_ctx);
        maybe(doc, "sep", c.sep);
        if (doc.contains("objective")) load_objective(doc.at("objective"), c.objective);
        if (doc.contains("encoder")) load_encoder(doc.at("encoder"), c.encoder);
    } catch (const json::exception& e) {
        throw ConfigError("train config " + path.string() + ": " + e.what());
    }
    c.validate();
    return c;
}

void save_history(const std::filesystem::path& path, const TrainHistory& history) {
    json epochs = json::array();
    for (const EpochRecord& r : history.epochs) {
        epochs.push_back({{"train_loss", r.train_loss},
                          {"train_reg", r.train_reg},
                          {"train_cvccl", r.train_cvccl},
                          {"train_oscl", r.train_oscl},
                          {"dev_mse", r.dev_mse}});
    }
    json doc = {{"epochs", epochs}, {"best_epoch", history.best_epoch}};
    write_text_file(path, doc.dump(2) + "\n");
}

double lr_schedule(std::size_t step, std::size_t total_steps, double peak_lr, double warmup_ratio) {
    if (total_steps == 0) throw std::invalid_argument("lr_schedule: total_steps must be > 0");
    if (step > total_steps) throw std::invalid_argument("lr_schedule: step out of range");
    auto warmup_steps =
        static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
    if (step <= warmup_steps) {
        if (step == warmup_steps) return peak_lr;
        return peak_lr * (static_cast<double>(step) / static_cast<double>(warmup_steps));
    }
    return peak_lr * (static_cast<double>(total_steps - step) /
                      static_cast<double>(total_steps - warmup_steps));
}

AdamState make_adam_state(std::size_t n_params) {
    AdamState s;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    return s;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t t, double lr, double weight_decay,
                 const AdamHyper& hp) {
    if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size()) {
        throw std::invalid_argument("adam_update: shape mismatch");
    }
    if (t < 1) throw std::invalid_argument("adam_update: t must be >= 1");
    double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
    double decay = 1.0 - lr * weight_decay;
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grad[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
        double m_hat = m[i] / bc1;
        double v_hat = v[i] / bc2;
        param[i] = param[i] * decay - lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
}

void adam_step(encoder::EncoderParams& params, const encoder::EncoderGradients& grads,
               AdamState& state, double lr, double weight_decay, const AdamHyper& hp) {
    const encoder::EncoderConfig& c = params.config;
    if (state.m.size() != encoder::param_count(c)) {
        throw std::invalid_argument("adam_step: state size mismatch");
    }
    std::uint64_t t = ++state.t;

    const std::size_t d_embed = c.d_embed;
    for (std::size_t b : grads.touched_buckets) {
        std::size_t off = b * d_embed;
        adam_update(params.embed_table.row(b), grads.embed_table.row(b),
                    std::span<double>(state.m.data() + off, d_embed),
                    std::span<double>(state.v.data() + off, d_embed), t, lr, weight_decay, hp);
    }

    std::size_t off = c.n_buckets * d_embed;
    auto dense = [&](std::span<double> param, std::span<const double> grad) {
        adam_update(param, grad, std::span<double>(state.m.data() + off, param.size()),
                    std::span<double>(state.v.data() + off, param.size()), t, lr, weight_decay,
                    hp);
        off += param.size();
    };
    dense(params.ff_w.data, grads.ff_w.data);
    dense(params.ff_b, grads.ff_b);
    dense(params.out_w.data, grads.out_w.data);
    dense(params.out_b, grads.out_b);
    dense(params.proj_w.data, grads.proj_w.data);
    dense(params.proj_b, grads.proj_b);
    dense(params.reg_w, grads.reg_w);
    dense(std::span<double>(&params.reg_b, 1), std::span<const double>(&grads.reg_b, 1));
    assert(off == state.m.size());
}

std::size_t view_max_len(corpus::View view, const TrainConfig& config) {
    switch (view) {
        case corpus::View::en_ctx:
        case corpus::View::en_ctx_plus_en_tgt:
            return config.max_len_en_ctx;
        case corpus::View::full_input:
        case corpus::View::en_tgt:
            return config.max_len;
    }
    return config.max_len;
}

encoder::BatchViews build_batch_views(const corpus::Dataset& dataset,
                                      std::span<const std::size_t> indices,
                                      const TrainConfig& config) {
    encoder::BatchViews batch;
    batch.full.reserve(indices.size());
    batch.contrastive.reserve(indices.size());
    batch.targets.reserve(indices.size());
    std::size_t ctr_len = view_max_len(config.objective.contrastive_view, config);
    for (std::size_t idx : indices) {
        const corpus::LexicalRecord& rec = dataset.records[idx];
        batch.full.push_back(
            corpus::tokenize(corpus::build_full_input(rec, config.sep), config.max_len, config.sep));
        batch.contrastive.push_back(corpus::tokenize(
            corpus::build_view(rec, config.objective.contrastive_view, config.sep), ctr_len,
            config.sep));
        batch.targets.push_back(rec.glmm_score);
    }
    return batch;
}

TrainResult train(const corpus::Dataset& dataset, const TrainConfig& config) {
    config.validate();
    std::vector<std::size_t> train_idx = dataset.split_indices(corpus::Split::train);
    std::vector<std::size_t> dev_idx = dataset.split_indices(corpus::Split::dev);
    if (train_idx.empty()) throw DataError("train split is empty");
    if (dev_idx.empty()) throw DataError("dev split is empty");

    std::vector<double> dev_targets;
    dev_targets.reserve(dev_idx.size());
    for (std::size_t idx : dev_idx) dev_targets.push_back(dataset.records[idx].glmm_score);

    encoder::EncoderParams params = encoder::init_params(config.encoder, config.seed);
    AdamState state = make_adam_state(encoder::param_count(config.encoder));

    std::size_t batches_per_epoch =
        (train_idx.size() + config.batch_size - 1) / config.batch_size;
    std::size_t total_steps = config.epochs * batches_per_epoch;

    // a trailing batch of one item cannot form contrastive pairs; it
    // trains on the regression term alone
    objectives::ObjectiveConfig tail_objective = config.objective;
    tail_objective.lambda_cv = 0.0;
    tail_objective.lambda_ord = 0.0;

    PredictOptions dev_opts{config.max_len, config.sep};

    TrainResult result;
    result.params = params;
    double best_mse = 0.0;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::uint64_t batch_seed = config.seed + 1000003ULL * (epoch + 1);
        auto batches = corpus::make_batches(dataset, corpus::Split::train, config.batch_size,
                                            batch_seed, /*drop_last=*/false);
        EpochRecord record;
        for (const auto& batch_indices : batches) {
            encoder::BatchViews views = build_batch_views(dataset, batch_indices, config);
            const objectives::ObjectiveConfig& objective =
                batch_indices.size() < 2 ? tail_objective : config.objective;
            encoder::ForwardBackwardResult fb =
                encoder::forward_backward(params, views, objective);
            if (!std::isfinite(fb.loss)) {
                throw NumericError("non-finite training loss at step " + std::to_string(step + 1) +
                                   "; lower the learning rate");
            }
            ++step;
            double lr = lr_schedule(step, total_steps, config.learning_rate, config.warmup_ratio);
            adam_step(params, fb.grads, state, lr, config.weight_decay);
            record.train_loss += fb.loss;
            record.train_reg += fb.parts.reg;
            record.train_cvccl += fb.parts.cvccl;
            record.train_oscl += fb.parts.oscl;
        }
        double inv = 1.0 / static_cast<double>(batches.size());
        record.train_loss *= inv;
        record.train_reg *= inv;
        record.train_cvccl *= inv;
        record.train_oscl *= inv;

        std::vector<double> dev_preds = predict(params, dataset, corpus::Split::dev, dev_opts);
        record.dev_mse = objectives::regression_loss(dev_preds, dev_targets);
        if (!std::isfinite(record.dev_mse)) {
            throw NumericError("non-finite dev MSE after epoch " + std::to_string(epoch));
        }
        result.history.epochs.push_back(record);
        if (epoch == 0 || record.dev_mse < best_mse) {
            best_mse = record.dev_mse;
            result.history.best_epoch = epoch;
            result.params = params;
        }
    }
    return result;
}

std::vector<double> predict(const encoder::EncoderParams& params, const corpus::Dataset& dataset,
                            corpus::Split split, const PredictOptions& opts) {
    std::vector<double> preds;
    for (std::size_t idx : dataset.split_indices(split)) {
        const corpus::LexicalRecord& rec = dataset.records[idx];
        corpus::TokenSequence seq =
            corpus::tokenize(corpus::build_full_input(rec, opts.sep), opts.max_len, opts.sep);
        std::vector<double> h = encoder::encode(params, seq);
        preds.push_back(encoder::predict_score(params, h));
    }
    return preds;
}

void write_predictions_csv(const std::filesystem::path& path, const Predictions& preds) {
    if (preds.ids.size() != preds.values.size()) {
        throw std::invalid_argument("write_predictions_csv: id/value length mismatch");
    }
    std::string out = "id,prediction\n";
    for (std::size_t i = 0; i < preds.ids.size(); ++i) {
        const std::string& id = preds.ids[i];
        if (id.find(',') != std::string::npos || id.find('\n') != std::string::npos) {
            throw DataError("prediction id '" + id + "' contains a delimiter");
        }
        out += id;
        out += ',';
        out += format_double(preds.values[i]);
        out += '\n';
    }
    write_text_file(path, out);
}

Predictions read_predictions_csv(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::vector<std::string> lines = split(text, '\n');
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw DataError("predictions " + path.string() + ": empty file");
    if (!lines[0].empty() && lines[0].back() == '\r') lines[0].pop_back();
    if (lines[0] != "id,prediction") {
        throw DataError("predictions " + path.string() + ": expected header 'id,prediction'");
    }
    Predictions preds;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string line = lines[i];
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> parts = split(line, ',');
        if (parts.size() != 2) {
            throw DataError("predictions " + path.string() + " line " + std::to_string(i + 1) +
                            ": expected 2 fields");
        }
        preds.ids.push_back(parts[0]);
        try {
            preds.values.push_back(parse_double(parts[1]));
        } catch (const std::exception&) {
            throw DataError("predictions " + path.string() + " line " + std::to_string(i + 1) +
                            ": bad number '" + parts[1] + "'");
        }
    }
    return preds;
}

}  // namespace lexdiff::trainer
