#include "kcomp/tokenizer.hpp"

#include <stdexcept>

namespace kcomp {

namespace {

// Splits [begin, end) of `text` around embedded reserved tokens.
void emit_with_reserved(std::string_view text, std::size_t begin, std::size_t end,
                        std::vector<TokenSpan>& out) {
    std::size_t pos = begin;
    while (pos < end) {
        std::size_t best = std::string_view::npos;
        std::size_t best_len = 0;
        for (std::string_view reserved : {kEntToken, kEodToken}) {
            auto found = text.find(reserved, pos);
            if (found != std::string_view::npos && found + reserved.size() <= end &&
                found < best) {
                best = found;
                best_len = reserved.size();
            }
        }
        if (best == std::string_view::npos) {
            out.push_back({pos, end});
            return;
        }
        if (best > pos) out.push_back({pos, best});
        out.push_back({best, best + best_len});
        pos = best + best_len;
    }
}

}  // namespace

std::vector<TokenSpan> WhitespaceTokenizer::token_spans(std::string_view text) const {
    std::vector<TokenSpan> out;
    for (const auto& run : whitespace_token_spans(text)) {
        emit_with_reserved(text, run.begin, run.end, out);
    }
    return out;
}

int Vocabulary::id_of(std::string_view token) {
    auto it = ids_.find(std::string(token));
    if (it != ids_.end()) return it->second;
    int id = static_cast<int>(tokens_.size());
    tokens_.emplace_back(token);
    ids_.emplace(tokens_.back(), id);
    return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) +
                                " outside vocabulary of size " +
                                std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

}  // namespace kcomp
