#include "judgeaudit/util.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace judgeaudit {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 failed");
    }
    EVP_MD_CTX_free(ctx);

    static const char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; i++) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::uint64_t stable_hash64(std::string_view data) {
    const std::string hexd = sha256_hex(data);
    std::uint64_t v = 0;
    for (int i = 0; i < 16; i++) {
        char c = hexd[i];
        v = (v << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return v;
}

double hash01(std::initializer_list<std::string_view> parts) {
    std::string joined;
    for (const auto& p : parts) {
        joined.append(p);
        joined.push_back('\x1f');  // unit separator avoids concatenation collisions
    }
    // 53 bits of mantissa from the digest
    return static_cast<double>(stable_hash64(joined) >> 11) * 0x1.0p-53;
}

std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size(); i++) {
        if (text[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') i++;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) b++;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) e--;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream iss{std::string(text)};
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

std::string strip_punct(std::string_view token) {
    size_t b = 0, e = token.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(token[b]))) b++;
    while (e > b && !std::isalnum(static_cast<unsigned char>(token[e - 1]))) e--;
    return std::string(token.substr(b, e - b));
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& tok : split_ws(text)) {
        std::string w = strip_punct(tok);
        if (!w.empty()) out.push_back(to_lower(w));
    }
    return out;
}

bool contains_token(std::string_view text, std::string_view word) {
    const std::string needle = to_lower(strip_punct(word));
    if (needle.empty()) return false;
    for (const auto& tok : word_tokens(text)) {
        if (tok == needle) return true;
    }
    return false;
}

namespace {

// Version 1 of the shipped stop-word list. Order matters: the list hash is
// recorded in run manifests, so edits require bumping expectations there.
const std::vector<std::string> kStopwords = {
    "a",       "about",   "above",  "after",  "again",  "against", "all",    "am",
    "an",      "and",     "any",    "are",    "as",     "at",      "be",     "because",
    "been",    "before",  "being",  "below",  "between", "both",   "but",    "by",
    "can",     "cannot",  "could",  "did",    "do",     "does",    "doing",  "down",
    "during",  "each",    "few",    "for",    "from",   "further", "had",    "has",
    "have",    "having",  "he",     "her",    "here",   "hers",    "herself", "him",
    "himself", "his",     "how",    "i",      "if",     "in",      "into",   "is",
    "it",      "its",     "itself", "just",   "me",     "more",    "most",   "my",
    "myself",  "no",      "nor",    "not",    "now",    "of",      "off",    "on",
    "once",    "only",    "or",     "other",  "our",    "ours",    "ourselves", "out",
    "over",    "own",     "same",   "she",    "should", "so",      "some",   "such",
    "than",    "that",    "the",    "their",  "theirs", "them",    "themselves", "then",
    "there",   "these",   "they",   "this",   "those",  "through", "to",     "too",
    "under",   "until",   "up",     "very",   "was",    "we",      "were",   "what",
    "when",    "where",   "which",  "while",  "who",    "whom",    "why",    "will",
    "with",    "would",   "you",    "your",   "yours",  "yourself", "yourselves",
};

const std::unordered_set<std::string>& stopword_set() {
    static const std::unordered_set<std::string> set(kStopwords.begin(), kStopwords.end());
    return set;
}

}  // namespace

const std::vector<std::string>& stopword_list() {
    return kStopwords;
}

bool is_stopword(std::string_view word) {
    return stopword_set().count(to_lower(strip_punct(word))) > 0;
}

std::string stopword_list_hash() {
    std::string joined;
    for (const auto& w : kStopwords) {
        joined += w;
        joined.push_back('\n');
    }
    return sha256_hex(joined);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace judgeaudit
