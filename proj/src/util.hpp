#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ego {

// FNV-1a 64-bit. Used for content hashes (cache keys, cassette keys,
// checkpoint hashes); not cryptographic.
std::uint64_t fnv1a(std::string_view data);

/// Hex form of fnv1a, 16 lowercase digits.
std::string content_hash(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase, trim, collapse internal whitespace runs to single spaces.
std::string normalize_label(std::string_view s);

/// Normalize line endings to '\n'.
std::string normalize_newlines(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

/// Deterministic Fisher-Yates permutation of [0, n) under an mt19937_64
/// stream. std::shuffle is implementation-defined, so results there can
/// differ across standard libraries; this cannot.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// First k entries of seeded_permutation without materializing the rest.
std::vector<std::size_t> seeded_sample(std::size_t n, std::size_t k, std::uint64_t seed);

std::string read_file(const std::string& path);

/// write-temp-then-rename so readers never observe partial content.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace ego
