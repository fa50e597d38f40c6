#include "lexdiff/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "lexdiff/util.hpp"

namespace lexdiff::corpus {

std::string to_string(L1Group g) {
    switch (g) {
        case L1Group::ES: return "ES";
        case L1Group::DE: return "DE";
        case L1Group::CN: return "CN";
        case L1Group::SYNTH: return "SYNTH";
    }
    return "SYNTH";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "train";
}

std::string to_string(View v) {
    switch (v) {
        case View::full_input: return "full_input";
        case View::en_tgt: return "en_tgt";
        case View::en_ctx: return "en_ctx";
        case View::en_ctx_plus_en_tgt: return "en_ctx_plus_en_tgt";
    }
    return "full_input";
}

L1Group l1_group_from_string(const std::string& s) {
    if (s == "ES") return L1Group::ES;
    if (s == "DE") return L1Group::DE;
    if (s == "CN") return L1Group::CN;
    if (s == "SYNTH") return L1Group::SYNTH;
    throw DataError("unknown l1_group: '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    throw DataError("unknown split: '" + s + "'");
}

View view_from_string(const std::string& s) {
    if (s == "full_input") return View::full_input;
    if (s == "en_tgt") return View::en_tgt;
    if (s == "en_ctx") return View::en_ctx;
    if (s == "en_ctx_plus_en_tgt") return View::en_ctx_plus_en_tgt;
    throw ConfigError("unknown view: '" + s + "'");
}

std::vector<std::size_t> Dataset::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == s) out.push_back(i);
    }
    return out;
}

namespace {

const std::vector<std::string> kColumns = {"id",        "l1_word",    "l1_context",
                                           "en_clue",   "en_target",  "en_context",
                                           "glmm_score", "l1_group",  "split"};

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::vector<std::string> lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw DataError(path.string() + ": empty file, header row expected");
    for (std::string& line : lines) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
    }

    std::vector<std::string> header = split(lines[0], '\t');
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const std::string& name : kColumns) {
        if (!col.count(name)) {
            throw DataError(path.string() + ": missing required column '" + name + "'");
        }
    }

    Dataset dataset;
    dataset.provenance = path.string();
    std::unordered_set<std::string> seen_ids;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        std::size_t line_no = li + 1;
        std::vector<std::string> fields = split(lines[li], '\t');
        if (fields.size() < header.size()) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        LexicalRecord r;
        r.id = fields[col.at("id")];
        r.l1_word = fields[col.at("l1_word")];
        r.l1_context = fields[col.at("l1_context")];
        r.en_clue = fields[col.at("en_clue")];
        r.en_target = fields[col.at("en_target")];
        r.en_context = fields[col.at("en_context")];
        try {
            r.glmm_score = parse_double(fields[col.at("glmm_score")]);
            r.l1_group = l1_group_from_string(fields[col.at("l1_group")]);
            r.split = split_from_string(fields[col.at("split")]);
        } catch (const DataError& e) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!std::isfinite(r.glmm_score)) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": glmm_score must be finite");
        }
        if (r.en_target.empty()) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": en_target must be non-empty");
        }
        if (!seen_ids.insert(r.id).second) {
            throw DataError(path.string() + ": duplicate id '" + r.id + "' at line " +
                            std::to_string(line_no));
        }
        dataset.records.push_back(std::move(r));
    }
    return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::string out = join(kColumns, "\t");
    out += '\n';
    for (const LexicalRecord& r : dataset.records) {
        const std::string* text_fields[] = {&r.id,      &r.l1_word,   &r.l1_context,
                                            &r.en_clue, &r.en_target, &r.en_context};
        for (const std::string* f : text_fields) {
            if (f->find('\t') != std::string::npos || f->find('\n') != std::string::npos) {
                throw DataError("record '" + r.id + "': tabs/newlines not allowed in TSV fields");
            }
        }
        out += r.id;
        out += '\t';
        out += r.l1_word;
        out += '\t';
        out += r.l1_context;
        out += '\t';
        out += r.en_clue;
        out += '\t';
        out += r.en_target;
        out += '\t';
        out += r.en_context;
        out += '\t';
        out += format_double(r.glmm_score);
        out += '\t';
        out += to_string(r.l1_group);
        out += '\t';
        out += to_string(r.split);
        out += '\n';
    }
    write_text_file(path, out);
}

std::string build_full_input(const LexicalRecord& record, const std::string& sep) {
    if (sep.empty()) throw std::invalid_argument("separator token must be non-empty");
    std::string glue = " " + sep + " ";
    return record.l1_word + glue + record.l1_context + glue + record.en_clue + glue +
           record.en_target;
}

std::string build_view(const LexicalRecord& record, View view, const std::string& sep) {
    switch (view) {
        case View::full_input: return build_full_input(record, sep);
        case View::en_tgt: return record.en_target;
        case View::en_ctx: return record.en_context;
        case View::en_ctx_plus_en_tgt:
            if (sep.empty()) throw std::invalid_argument("separator token must be non-empty");
            return record.en_target + " " + sep + " " + record.en_context;
    }
    throw std::invalid_argument("invalid view");
}

TokenSequence tokenize(const std::string& text, std::size_t max_len, const std::string& sep) {
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    TokenSequence seq;
    for (std::string& raw : split_whitespace(text)) {
        if (seq.tokens.size() == max_len) {
            seq.truncated = true;
            break;
        }
        seq.tokens.push_back(raw == sep ? raw : lowercase_ascii(raw));
    }
    return seq;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& dataset, Split split,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   bool drop_last) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    std::vector<std::size_t> indices = dataset.split_indices(split);
    if (indices.empty()) {
        throw DataError("split '" + to_string(split) + "' is empty");
    }
    Rng rng(seed);
    rng.shuffle(indices);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        std::size_t end = std::min(start + batch_size, indices.size());
        if (drop_last && end - start < batch_size) break;
        batches.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(start),
                             indices.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

void SynthConfig::validate() const {
    if (n_train < 1 || n_dev < 1 || n_test < 1) throw ConfigError("split sizes must be >= 1");
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
    if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": top-level value must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "n_train" && k != "n_dev" && k != "n_test" && k != "vocab_size" &&
            k != "noise_std" && k != "seed") {
            throw ConfigError(path.string() + ": unknown key '" + k + "'");
        }
    }
    SynthConfig c;
    try {
        if (j.contains("n_train")) c.n_train = j.at("n_train").get<std::size_t>();
        if (j.contains("n_dev")) c.n_dev = j.at("n_dev").get<std::size_t>();
        if (j.contains("n_test")) c.n_test = j.at("n_test").get<std::size_t>();
        if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<std::size_t>();
        if (j.contains("noise_std")) c.noise_std = j.at("noise_std").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    c.validate();
    return c;
}

double synthetic_difficulty(const std::string& en_target) {
    if (en_target.empty()) return 0.0;
    double len = static_cast<double>(en_target.size());
    double vowels = 0.0;
    std::set<char> distinct;
    for (char c : en_target) {
        if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') vowels += 1.0;
        distinct.insert(c);
    }
    double vowel_ratio = vowels / len;
    double distinct_ratio = static_cast<double>(distinct.size()) / len;
    return 2.0 - 0.4 * len + 1.5 * vowel_ratio + 0.8 * distinct_ratio;
}

namespace {

// fixed letter cipher: bijective pseudo-translation of target words
char cipher(char c) {
    static const std::string from = "abcdefghijklmnopqrstuvwxyz";
    static const std::string to = "okiwhazuemcbvrtjdsnfgplxyq";
    std::size_t pos = from.find(c);
    return pos == std::string::npos ? c : to[pos];
}

std::string make_pseudo_word(Rng& rng, std::size_t min_len, std::size_t max_len) {
    static const std::string consonants = "bcdfghjklmnprstvwz";
    static const std::string vowels = "aeiou";
    std::size_t len = min_len + rng.index(max_len - min_len + 1);
    std::string word;
    bool want_vowel = rng.index(2) == 0;
    while (word.size() < len) {
        const std::string& pool = want_vowel ? vowels : consonants;
        word += pool[rng.index(pool.size())];
        want_vowel = !want_vowel;
    }
    return word;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);

    // distinct target vocabulary
    std::vector<std::string> vocab;
    std::unordered_set<std::string> used;
    while (vocab.size() < config.vocab_size) {
        std::string w = make_pseudo_word(rng, 3, 10);
        if (used.insert(w).second) vocab.push_back(w);
    }

    // shared context vocabulary (appears in both L1 and English contexts)
    const std::size_t n_ctx_words = 80;
    std::vector<std::string> ctx_vocab;
    while (ctx_vocab.size() < n_ctx_words) {
        std::string w = make_pseudo_word(rng, 3, 8);
        if (used.insert(w).second) ctx_vocab.push_back(w);
    }

    Dataset dataset;
    dataset.provenance = "synthetic(seed=" + std::to_string(config.seed) + ")";
    std::size_t total = config.n_train + config.n_dev + config.n_test;
    dataset.records.reserve(total);

    for (std::size_t i = 0; i < total; ++i) {
        LexicalRecord r;
        r.id = "synth-" + std::to_string(i);
        r.en_target = vocab[rng.index(vocab.size())];
        r.l1_word = r.en_target;
        for (char& c : r.l1_word) c = cipher(c);
        r.en_clue = r.en_target.substr(0, 1) + std::string(r.en_target.size() - 1, '_');
        r.glmm_score = synthetic_difficulty(r.en_target) + config.noise_std * rng.normal();

        // context: 4-10 shared words; occasionally low-diversity (repeats)
        std::size_t n_words = 4 + rng.index(7);
        std::vector<std::string> ctx_words;
        if (rng.real01() < 0.3) {
            std::vector<std::string> pool;
            for (std::size_t k = 0; k < 3; ++k) pool.push_back(ctx_vocab[rng.index(ctx_vocab.size())]);
            for (std::size_t k = 0; k < n_words; ++k) ctx_words.push_back(pool[rng.index(pool.size())]);
        } else {
            for (std::size_t k = 0; k < n_words; ++k) ctx_words.push_back(ctx_vocab[rng.index(ctx_vocab.size())]);
        }

        std::vector<std::string> l1_ctx = ctx_words;
        l1_ctx.insert(l1_ctx.begin() + static_cast<std::ptrdiff_t>(rng.index(l1_ctx.size() + 1)),
                      r.l1_word);
        r.l1_context = join(l1_ctx, " ");

        // paraphrase: same shared words minus one, reshuffled, plus the target
        std::vector<std::string> en_ctx = ctx_words;
        if (en_ctx.size() > 2) en_ctx.erase(en_ctx.begin() + static_cast<std::ptrdiff_t>(rng.index(en_ctx.size())));
        rng.shuffle(en_ctx);
        en_ctx.insert(en_ctx.begin() + static_cast<std::ptrdiff_t>(rng.index(en_ctx.size() + 1)),
                      r.en_target);
        r.en_context = join(en_ctx, " ");

        r.l1_group = L1Group::SYNTH;
        if (i < config.n_train) {
            r.split = Split::train;
        } else if (i < config.n_train + config.n_dev) {
            r.split = Split::dev;
        } else {
            r.split = Split::test;
        }
        dataset.records.push_back(std::move(r));
    }
    return dataset;
}

}  // namespace lexdiff::corpus
