#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace judgeaudit {

// SHA-256 hex digest (OpenSSL-backed). Used for answer ids, cache keys and
// template hashes; must be stable across platforms and runs.
std::string sha256_hex(std::string_view data);

// First 8 bytes of the SHA-256 digest as an integer. Stable, unlike std::hash.
std::uint64_t stable_hash64(std::string_view data);

// Deterministic uniform draw in [0,1) keyed by the concatenated parts.
double hash01(std::initializer_list<std::string_view> parts);

// CRLF / lone CR -> LF.
std::string normalize_newlines(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Whitespace tokens, as-is (punctuation attached).
std::vector<std::string> split_ws(std::string_view text);

// Strip leading/trailing non-alphanumeric characters from a token.
std::string strip_punct(std::string_view token);

// Lowercased, punctuation-stripped word tokens; empties dropped.
std::vector<std::string> word_tokens(std::string_view text);

// Case-insensitive token-level containment test ("word" as a whole token).
bool contains_token(std::string_view text, std::string_view word);

// Fixed English stop-word list shipped with the artifact, plus its hash so
// manifests can pin the exact version used for a run.
const std::vector<std::string>& stopword_list();
bool is_stopword(std::string_view word);
std::string stopword_list_hash();

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace judgeaudit
