#include "lexdiff/encoder.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "lexdiff/util.hpp"

namespace lexdiff::encoder {

void EncoderConfig::validate() const {
    if (n_buckets == 0 || d_embed == 0 || d_hidden == 0 || d_model == 0 || d_proj == 0) {
        throw ConfigError("encoder dimensions must be positive");
    }
    if (d_proj >= d_model) throw ConfigError("d_proj must be smaller than d_model");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
}

namespace {

void fill_uniform(Rng& rng, double scale, std::vector<double>& out) {
    for (double& v : out) v = rng.uniform(-scale, scale);
}

}  // namespace

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    EncoderParams p;
    p.config = config;
    p.embed_table = Matrix(config.n_buckets, config.d_embed);
    p.ff_w = Matrix(config.d_embed, config.d_hidden);
    p.ff_b.assign(config.d_hidden, 0.0);
    p.out_w = Matrix(config.d_hidden, config.d_model);
    p.out_b.assign(config.d_model, 0.0);
    p.proj_w = Matrix(config.d_model, config.d_proj);
    p.proj_b.assign(config.d_proj, 0.0);
    p.reg_w.assign(config.d_model, 0.0);
    p.reg_b = 0.0;

    Rng rng(seed);
    fill_uniform(rng, config.init_scale, p.embed_table.data);
    fill_uniform(rng, config.init_scale, p.ff_w.data);
    fill_uniform(rng, config.init_scale, p.out_w.data);
    fill_uniform(rng, config.init_scale, p.proj_w.data);
    fill_uniform(rng, config.init_scale, p.reg_w);
    return p;
}

EncoderGradients zero_gradients(const EncoderConfig& config) {
    EncoderGradients g;
    g.embed_table = Matrix(config.n_buckets, config.d_embed);
    g.ff_w = Matrix(config.d_embed, config.d_hidden);
    g.ff_b.assign(config.d_hidden, 0.0);
    g.out_w = Matrix(config.d_hidden, config.d_model);
    g.out_b.assign(config.d_model, 0.0);
    g.proj_w = Matrix(config.d_model, config.d_proj);
    g.proj_b.assign(config.d_proj, 0.0);
    g.reg_w.assign(config.d_model, 0.0);
    g.reg_b = 0.0;
    return g;
}

std::size_t token_bucket(std::string_view token, std::size_t n_buckets, std::uint64_t hash_seed) {
    assert(n_buckets > 0);
    std::uint64_t h = 14695981039346656037ULL ^ hash_seed;
    for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h % n_buckets);
}

namespace {

constexpr double kDegenerateNorm = 1e-12;

// Intermediate activations of one view of one item, kept for backward.
struct ViewCache {
    std::vector<std::size_t> buckets;
    std::vector<double> pooled;  // d_embed
    std::vector<double> hidden;  // d_hidden, post-tanh
    std::vector<double> h;       // d_model
    std::vector<double> z;       // d_proj, unit (or fallback)
    double q_norm = 0.0;
    bool degenerate = false;
};

ViewCache forward_view(const EncoderParams& p, const corpus::TokenSequence& seq) {
    const EncoderConfig& c = p.config;
    ViewCache v;
    v.buckets.reserve(seq.tokens.size());
    for (const std::string& tok : seq.tokens) {
        v.buckets.push_back(token_bucket(tok, c.n_buckets, c.hash_seed));
    }

    v.pooled.assign(c.d_embed, 0.0);
    if (!v.buckets.empty()) {
        for (std::size_t b : v.buckets) {
            axpy(1.0, p.embed_table.row(b), v.pooled);
        }
        double inv = 1.0 / static_cast<double>(v.buckets.size());
        for (double& x : v.pooled) x *= inv;
    }

    v.hidden.assign(c.d_hidden, 0.0);
    for (std::size_t j = 0; j < c.d_hidden; ++j) {
        double a = p.ff_b[j];
        for (std::size_t e = 0; e < c.d_embed; ++e) a += p.ff_w(e, j) * v.pooled[e];
        v.hidden[j] = std::tanh(a);
    }

    v.h.assign(c.d_model, 0.0);
    for (std::size_t m = 0; m < c.d_model; ++m) {
        double a = p.out_b[m];
        for (std::size_t j = 0; j < c.d_hidden; ++j) a += p.out_w(j, m) * v.hidden[j];
        v.h[m] = a;
    }

    std::vector<double> q(c.d_proj);
    for (std::size_t k = 0; k < c.d_proj; ++k) {
        double a = p.proj_b[k];
        for (std::size_t m = 0; m < c.d_model; ++m) a += p.proj_w(m, k) * v.h[m];
        q[k] = a;
    }
    v.q_norm = l2_norm(q);
    v.z.assign(c.d_proj, 0.0);
    if (v.q_norm < kDegenerateNorm) {
        v.degenerate = true;
        v.z[0] = 1.0;
    } else {
        for (std::size_t k = 0; k < c.d_proj; ++k) v.z[k] = q[k] / v.q_norm;
    }
    return v;
}

// dz is d(loss)/d(z) treating z as free; d_pred is d(loss)/d(prediction)
// (zero for views without a regression readout).
void backward_view(const EncoderParams& p, const ViewCache& v, std::span<const double> dz,
                   double d_pred, EncoderGradients& g) {
    const EncoderConfig& c = p.config;

    // through normalization: dq = (dz - z (z . dz)) / |q|; the degenerate
    // fallback is locally constant, so it passes nothing back
    std::vector<double> dq(c.d_proj, 0.0);
    if (!v.degenerate) {
        double zdot = dot(std::span<const double>(v.z), dz);
        for (std::size_t k = 0; k < c.d_proj; ++k) {
            dq[k] = (dz[k] - v.z[k] * zdot) / v.q_norm;
        }
    }

    std::vector<double> dh(c.d_model, 0.0);
    for (std::size_t m = 0; m < c.d_model; ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k < c.d_proj; ++k) {
            acc += p.proj_w(m, k) * dq[k];
            g.proj_w(m, k) += v.h[m] * dq[k];
        }
        dh[m] = acc;
    }
    axpy(1.0, dq, g.proj_b);

    if (d_pred != 0.0) {
        for (std::size_t m = 0; m < c.d_model; ++m) {
            dh[m] += p.reg_w[m] * d_pred;
            g.reg_w[m] += d_pred * v.h[m];
        }
        g.reg_b += d_pred;
    }

    std::vector<double> d_hidden(c.d_hidden, 0.0);
    for (std::size_t j = 0; j < c.d_hidden; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < c.d_model; ++m) {
            acc += p.out_w(j, m) * dh[m];
            g.out_w(j, m) += v.hidden[j] * dh[m];
        }
        // tanh' = 1 - tanh^2
        d_hidden[j] = acc * (1.0 - v.hidden[j] * v.hidden[j]);
    }
    axpy(1.0, dh, g.out_b);

    std::vector<double> d_pooled(c.d_embed, 0.0);
    for (std::size_t e = 0; e < c.d_embed; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c.d_hidden; ++j) {
            acc += p.ff_w(e, j) * d_hidden[j];
            g.ff_w(e, j) += v.pooled[e] * d_hidden[j];
        }
        d_pooled[e] = acc;
    }
    axpy(1.0, d_hidden, g.ff_b);

    if (!v.buckets.empty()) {
        double inv = 1.0 / static_cast<double>(v.buckets.size());
        for (std::size_t b : v.buckets) {
            axpy(inv, d_pooled, g.embed_table.row(b));
            g.touched_buckets.push_back(b);
        }
    }
}

}  // namespace

std::vector<double> encode(const EncoderParams& params, const corpus::TokenSequence& seq) {
    return forward_view(params, seq).h;
}

std::vector<double> project(const EncoderParams& params, std::span<const double> h) {
    const EncoderConfig& c = params.config;
    if (h.size() != c.d_model) throw std::invalid_argument("project: hidden size mismatch");
    std::vector<double> q(c.d_proj);
    for (std::size_t k = 0; k < c.d_proj; ++k) {
        double a = params.proj_b[k];
        for (std::size_t m = 0; m < c.d_model; ++m) a += params.proj_w(m, k) * h[m];
        q[k] = a;
    }
    double n = l2_norm(q);
    if (n < kDegenerateNorm) {
        std::vector<double> e1(c.d_proj, 0.0);
        e1[0] = 1.0;
        return e1;
    }
    for (double& x : q) x /= n;
    return q;
}

double predict_score(const EncoderParams& params, std::span<const double> h) {
    if (h.size() != params.config.d_model) {
        throw std::invalid_argument("predict_score: hidden size mismatch");
    }
    return dot(std::span<const double>(params.reg_w), h) + params.reg_b;
}

ForwardBackwardResult forward_backward(const EncoderParams& params, const BatchViews& batch,
                                       const objectives::ObjectiveConfig& objective) {
    objective.validate();
    const std::size_t b = batch.full.size();
    if (b == 0 || batch.contrastive.size() != b || batch.targets.size() != b) {
        throw std::invalid_argument("forward_backward: inconsistent batch views");
    }
    if (b < 2 && objective.contrastive_enabled()) {
        throw std::invalid_argument(
            "forward_backward: contrastive losses need batch size >= 2; "
            "disable them or enlarge the batch");
    }
    const EncoderConfig& c = params.config;

    std::vector<ViewCache> full_views;
    std::vector<ViewCache> ctr_views;
    full_views.reserve(b);
    ctr_views.reserve(b);
    Matrix z_full(b, c.d_proj);
    Matrix z_ctr(b, c.d_proj);
    ForwardBackwardResult result;
    result.preds.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        full_views.push_back(forward_view(params, batch.full[i]));
        ctr_views.push_back(forward_view(params, batch.contrastive[i]));
        result.preds[i] = dot(std::span<const double>(params.reg_w), full_views[i].h) + params.reg_b;
        std::copy(full_views[i].z.begin(), full_views[i].z.end(), z_full.row(i).begin());
        std::copy(ctr_views[i].z.begin(), ctr_views[i].z.end(), z_ctr.row(i).begin());
    }

    std::vector<double> d_pred(b, 0.0);
    result.parts.reg = objectives::regression_loss_grad(result.preds, batch.targets, d_pred);

    Matrix dz_full(b, c.d_proj);
    Matrix dz_ctr(b, c.d_proj);
    if (b >= 2) {
        if (objective.lambda_cv > 0.0) {
            Matrix g_ctr(b, c.d_proj);
            Matrix g_full(b, c.d_proj);
            result.parts.cvccl =
                objectives::cvccl_loss_grad(z_ctr, z_full, objective.tau_cvccl, g_ctr, g_full);
            axpy(objective.lambda_cv, g_ctr.data, dz_ctr.data);
            axpy(objective.lambda_cv, g_full.data, dz_full.data);
        } else {
            result.parts.cvccl = objectives::cvccl_loss(z_ctr, z_full, objective.tau_cvccl);
        }
        if (objective.lambda_ord > 0.0) {
            Matrix g_ord(b, c.d_proj);
            result.parts.oscl = objectives::oscl_loss_grad(z_ctr, batch.targets, objective.tau_oscl,
                                                           objective.sigma, g_ord);
            axpy(objective.lambda_ord, g_ord.data, dz_ctr.data);
        } else {
            result.parts.oscl =
                objectives::oscl_loss(z_ctr, batch.targets, objective.tau_oscl, objective.sigma);
        }
    }
    result.loss = objectives::composite_loss(result.parts, objective);

    result.grads = zero_gradients(c);
    for (std::size_t i = 0; i < b; ++i) {
        backward_view(params, full_views[i], dz_full.row(i), d_pred[i], result.grads);
        backward_view(params, ctr_views[i], dz_ctr.row(i), 0.0, result.grads);
    }
    auto& touched = result.grads.touched_buckets;
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    return result;
}

std::size_t param_count(const EncoderConfig& c) {
    return c.n_buckets * c.d_embed + c.d_embed * c.d_hidden + c.d_hidden +
           c.d_hidden * c.d_model + c.d_model + c.d_model * c.d_proj + c.d_proj + c.d_model + 1;
}

std::vector<double> flatten(const EncoderParams& p) {
    std::vector<double> flat;
    flat.reserve(param_count(p.config));
    auto push = [&](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
    push(p.embed_table.data);
    push(p.ff_w.data);
    push(p.ff_b);
    push(p.out_w.data);
    push(p.out_b);
    push(p.proj_w.data);
    push(p.proj_b);
    push(p.reg_w);
    flat.push_back(p.reg_b);
    return flat;
}

std::vector<double> flatten(const EncoderGradients& g) {
    std::vector<double> flat;
    auto push = [&](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
    push(g.embed_table.data);
    push(g.ff_w.data);
    push(g.ff_b);
    push(g.out_w.data);
    push(g.out_b);
    push(g.proj_w.data);
    push(g.proj_b);
    push(g.reg_w);
    flat.push_back(g.reg_b);
    return flat;
}

void unflatten(std::span<const double> flat, EncoderParams& p) {
    if (flat.size() != param_count(p.config)) {
        throw std::invalid_argument("unflatten: length mismatch");
    }
    std::size_t at = 0;
    auto take = [&](std::vector<double>& v) {
        std::copy(flat.begin() + at, flat.begin() + at + v.size(), v.begin());
        at += v.size();
    };
    take(p.embed_table.data);
    take(p.ff_w.data);
    take(p.ff_b);
    take(p.out_w.data);
    take(p.out_b);
    take(p.proj_w.data);
    take(p.proj_b);
    take(p.reg_w);
    p.reg_b = flat[at];
}

namespace {

using nlohmann::json;

json tensor_to_json(const std::vector<double>& data, std::vector<std::size_t> shape) {
    return json{{"shape", shape}, {"data", data}};
}

std::vector<double> tensor_from_json(const json& j, std::vector<std::size_t> expect_shape,
                                     const char* name) {
    std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape != expect_shape) {
        throw DataError(std::string("checkpoint tensor ") + name + " has unexpected shape");
    }
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    std::size_t want = 1;
    for (std::size_t s : shape) want *= s;
    if (data.size() != want) {
        throw DataError(std::string("checkpoint tensor ") + name + " has wrong element count");
    }
    return data;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& p,
                     std::uint64_t seed) {
    const EncoderConfig& c = p.config;
    json doc;
    doc["format_version"] = 1;
    doc["seed"] = seed;
    doc["config"] = {{"n_buckets", c.n_buckets},   {"d_embed", c.d_embed},
                     {"d_hidden", c.d_hidden},     {"d_model", c.d_model},
                     {"d_proj", c.d_proj},         {"hash_seed", c.hash_seed},
                     {"init_scale", c.init_scale}};
    doc["tensors"] = {
        {"embed_table", tensor_to_json(p.embed_table.data, {c.n_buckets, c.d_embed})},
        {"ff_w", tensor_to_json(p.ff_w.data, {c.d_embed, c.d_hidden})},
        {"ff_b", tensor_to_json(p.ff_b, {c.d_hidden})},
        {"out_w", tensor_to_json(p.out_w.data, {c.d_hidden, c.d_model})},
        {"out_b", tensor_to_json(p.out_b, {c.d_model})},
        {"proj_w", tensor_to_json(p.proj_w.data, {c.d_model, c.d_proj})},
        {"proj_b", tensor_to_json(p.proj_b, {c.d_proj})},
        {"reg_w", tensor_to_json(p.reg_w, {c.d_model})},
        {"reg_b", tensor_to_json({p.reg_b}, {1})},
    };
    write_text_file(path, doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != 1) {
            throw DataError("checkpoint " + path.string() + ": unsupported format_version");
        }
        EncoderConfig c;
        const json& jc = doc.at("config");
        c.n_buckets = jc.at("n_buckets").get<std::size_t>();
        c.d_embed = jc.at("d_embed").get<std::size_t>();
        c.d_hidden = jc.at("d_hidden").get<std::size_t>();
        c.d_model = jc.at("d_model").get<std::size_t>();
        c.d_proj = jc.at("d_proj").get<std::size_t>();
        c.hash_seed = jc.at("hash_seed").get<std::uint64_t>();
        c.init_scale = jc.at("init_scale").get<double>();
        c.validate();

        Checkpoint ckpt;
        ckpt.seed = doc.at("seed").get<std::uint64_t>();
        EncoderParams& p = ckpt.params;
        p.config = c;
        const json& jt = doc.at("tensors");
        p.embed_table = Matrix(c.n_buckets, c.d_embed);
        p.embed_table.data = tensor_from_json(jt.at("embed_table"), {c.n_buckets, c.d_embed},
                                              "embed_table");
        p.ff_w = Matrix(c.d_embed, c.d_hidden);
        p.ff_w.data = tensor_from_json(jt.at("ff_w"), {c.d_embed, c.d_hidden}, "ff_w");
        p.ff_b = tensor_from_json(jt.at("ff_b"), {c.d_hidden}, "ff_b");
        p.out_w = Matrix(c.d_hidden, c.d_model);
        p.out_w.data = tensor_from_json(jt.at("out_w"), {c.d_hidden, c.d_model}, "out_w");
        p.out_b = tensor_from_json(jt.at("out_b"), {c.d_model}, "out_b");
        p.proj_w = Matrix(c.d_model, c.d_proj);
        p.proj_w.data = tensor_from_json(jt.at("proj_w"), {c.d_model, c.d_proj}, "proj_w");
        p.proj_b = tensor_from_json(jt.at("proj_b"), {c.d_proj}, "proj_b");
        p.reg_w = tensor_from_json(jt.at("reg_w"), {c.d_model}, "reg_w");
        p.reg_b = tensor_from_json(jt.at("reg_b"), {1}, "reg_b")[0];
        for (double v : flatten(p)) {
            if (!std::isfinite(v)) {
                throw DataError("checkpoint " + path.string() + ": non-finite parameter");
            }
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace lexdiff::encoder
