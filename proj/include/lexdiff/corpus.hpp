#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lexdiff::corpus {

enum class L1Group { ES, DE, CN, SYNTH };
enum class Split { train, dev, test };

// Input views fed to the encoder. full_input is the L1-aware sequence
// (word, L1 context, clue, target); the other three are the English-side
// variants used as the second half of a contrastive pair.
enum class View { full_input, en_tgt, en_ctx, en_ctx_plus_en_tgt };

std::string to_string(L1Group g);
std::string to_string(Split s);
std::string to_string(View v);
L1Group l1_group_from_string(const std::string& s);
Split split_from_string(const std::string& s);
View view_from_string(const std::string& s);

// One vocabulary item. glmm_score is a continuous difficulty estimate;
// lower scores mean harder items. No range clamp is imposed.
struct LexicalRecord {
    std::string id;
    std::string l1_word;
    std::string l1_context;
    std::string en_clue;
    std::string en_target;
    std::string en_context;  // may be empty (e.g. untranslated test rows)
    double glmm_score = 0.0;
    L1Group l1_group = L1Group::SYNTH;
    Split split = Split::train;
};

struct TokenSequence {
    std::vector<std::string> tokens;
    bool truncated = false;
};

struct Dataset {
    std::vector<LexicalRecord> records;
    std::string provenance;

    std::vector<std::size_t> split_indices(Split s) const;
};

inline constexpr const char* kDefaultSep = "[SEP]";

// UTF-8 TSV with header
// id  l1_word  l1_context  en_clue  en_target  en_context  glmm_score  l1_group  split
// Tabs inside text fields are forbidden. Row order is preserved.
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

// "w SEP ctx SEP clue SEP tgt" with single spaces around each separator.
// Empty fields keep their slot so the 4-part template stays positional.
std::string build_full_input(const LexicalRecord& record, const std::string& sep);

std::string build_view(const LexicalRecord& record, View view, const std::string& sep);

// Lowercase, split on whitespace, truncate to max_len. Occurrences of the
// separator token are preserved verbatim (not lowercased).
TokenSequence tokenize(const std::string& text, std::size_t max_len, const std::string& sep);

// Seeded deterministic shuffle of the split's record indices, chunked into
// batches of batch_size (last partial batch kept unless drop_last).
std::vector<std::vector<std::size_t>> make_batches(const Dataset& dataset, Split split,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   bool drop_last);

struct SynthConfig {
    std::size_t n_train = 2000;
    std::size_t n_dev = 400;
    std::size_t n_test = 400;
    std::size_t vocab_size = 300;
    double noise_std = 0.3;
    std::uint64_t seed = 7;

    void validate() const;
};

SynthConfig load_synth_config(const std::filesystem::path& path);

// Deterministic difficulty of a pseudo-word from its length and character
// composition. Lower = harder; the generator adds Gaussian noise on top,
// so difficulty stays learnable from en_target.
double synthetic_difficulty(const std::string& en_target);

// Seeded pseudo-word corpus. English targets map 1:1 to L1 words via a
// fixed letter cipher; L1 and English contexts draw from a shared context
// vocabulary so aligned view pairs share tokens.
Dataset generate_synthetic(const SynthConfig& config);

}  // namespace lexdiff::corpus
