#include "kcomp/text.hpp"

#include <algorithm>
#include <cctype>

namespace kcomp {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_word_char(unsigned char c) {
    if (c >= 0x80) return true;  // UTF-8 continuation/lead bytes
    return std::isalnum(c) != 0 || c == '-' || c == '\'' || c == '_';
}

}  // namespace

std::string_view trim_view(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string trim(std::string_view s) { return std::string(trim_view(s)); }

std::vector<TokenSpan> whitespace_token_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= n) break;
        std::size_t start = i;
        while (i < n && !is_space(static_cast<unsigned char>(text[i]))) ++i;
        spans.push_back({start, i});
    }
    return spans;
}

std::size_t count_whitespace_tokens(std::string_view text) {
    return whitespace_token_spans(text).size();
}

std::string collapse_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : trim_view(text)) {
        if (is_space(static_cast<unsigned char>(c))) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

std::string normalize_surface(std::string_view surface) {
    return to_lower_ascii(collapse_whitespace(surface));
}

bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

std::vector<TokenSpan> word_token_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && !is_word_char(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= n) break;
        std::size_t start = i;
        while (i < n && is_word_char(static_cast<unsigned char>(text[i]))) ++i;
        spans.push_back({start, i});
    }
    return spans;
}

}  // namespace kcomp
