#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace kcomp {

// Byte span of a token inside its source string, [begin, end).
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const TokenSpan&) const = default;
};

std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);

// Spans of maximal non-whitespace runs.
std::vector<TokenSpan> whitespace_token_spans(std::string_view text);
std::size_t count_whitespace_tokens(std::string_view text);

// Case-folded (ASCII), whitespace-collapsed, trimmed key used by the
// knowledge dictionary and gazetteer matching.
std::string normalize_surface(std::string_view surface);

// Collapses all whitespace runs to single spaces and trims; case preserved.
std::string collapse_whitespace(std::string_view text);

std::string to_lower_ascii(std::string_view text);

bool contains(std::string_view haystack, std::string_view needle);

// Spans of "word" tokens: runs of alphanumerics plus '-', '\'', '_' and any
// non-ASCII bytes. Punctuation such as '?' and ',' separates words.
std::vector<TokenSpan> word_token_spans(std::string_view text);

}  // namespace kcomp
