#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cslearn {

/// Raised when an input stream or file violates its declared format.
/// Carries the 1-based line number where parsing failed (0 if not line-scoped).
class ParseError : public std::runtime_error {
public:
    ParseError(std::string message, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + std::move(message)
                                  : std::move(message)),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Raised when inputs violate an operation's contract (shape mismatches,
/// out-of-range arguments, missing prerequisites).
class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 64-bit FNV-1a. Used for artifact integrity hashes and sub-seed derivation;
// not cryptographic.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::uint64_t v, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Derive a reproducible per-entity sub-seed from a master seed and a string
/// key (e.g. a patient id). Distinct keys give independent streams; the same
/// (seed, key) pair always gives the same stream.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view key) {
    return fnv1a64(key, fnv1a64(master_seed));
}

inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    return fnv1a64(index, fnv1a64(master_seed));
}

using Rng = std::mt19937_64;

// --- small CSV helpers (comma-separated, no quoting: ids are opaque tokens
// and never contain commas by format contract) ---

std::vector<std::string> split_csv_line(const std::string& line);

/// Parse a whole CSV stream: first line must equal `expected_header`, every
/// following non-empty line must have the same field count. Calls `row` with
/// (fields, line_number). Throws ParseError on violations.
void for_each_csv_row(std::istream& in, const std::string& expected_header,
                      const std::function<void(const std::vector<std::string>&, std::size_t)>& row);

double parse_double_field(const std::string& field, std::size_t line, const char* what);
long long parse_int_field(const std::string& field, std::size_t line, const char* what);

/// Full-precision decimal formatting, round-trip exact for IEEE754 doubles.
std::string format_double(double v);

/// FNV-1a hash of a file's bytes, as a fixed-width hex string.
std::string hash_file(const std::string& path);

}  // namespace cslearn
