#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cultprobe {

// ---------------------------------------------------------------------------
// UTF-8
// ---------------------------------------------------------------------------

// Decodes UTF-8; malformed sequences decode to U+FFFD instead of failing.
std::u32string utf8_decode(std::string_view text);
void utf8_append(std::string& out, char32_t cp);
std::string utf8_encode(std::u32string_view text);
std::size_t utf8_length(std::string_view text);

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

std::string ascii_lower(std::string_view text);
std::string_view trim(std::string_view text);
std::vector<std::string> split_whitespace(std::string_view text);

// 64-bit FNV-1a; stable across platforms, used for text hashes and derived seeds.
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

// Formats with 6 significant digits, the CSV convention.
std::string format_sig6(double value);

// ---------------------------------------------------------------------------
// Deterministic random numbers
//
// std::mt19937_64 output is fully specified by the standard, the library
// distributions are not, so sampling is done here.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, n) by rejection; n must be > 0.
    std::size_t uniform_index(std::size_t n);
    // Uniform in [0, 1).
    double uniform01();
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace cultprobe
