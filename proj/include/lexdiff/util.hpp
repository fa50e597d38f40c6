#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lexdiff {

// Invalid configuration or command usage. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (schema, row, id integrity).
// CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure (non-finite loss, singular system). CLI maps this to
// exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(std::string_view text, char delim);
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view delim);
std::string lowercase_ascii(std::string_view text);

// Strict numeric parsing: the whole field must be consumed.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

// Shortest round-trip decimal representation (via std::to_chars), so
// values written to CSV/TSV re-read bit-identically.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
// write-temp-then-rename so readers never observe partial files
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard; the std distributions are not, so the draw methods are
// hand-rolled to keep outputs stable across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform index in [0, n)
    std::size_t index(std::size_t n);

    // uniform in [0, 1)
    double real01();

    // uniform in [lo, hi)
    double uniform(double lo, double hi);

    // standard normal via Box-Muller, caching the paired draw
    double normal();

    template <class T>
    void shuffle(std::vector<T>& items) {
        if (items.empty()) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            std::swap(items[i], items[index(i + 1)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lexdiff
