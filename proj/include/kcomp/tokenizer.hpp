#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kcomp/text.hpp"

namespace kcomp {

// Reserved sequence tokens. Tokenizers used with the codec must keep these
// atomic (one token each), even when glued to adjacent text ("x<eod>").
inline constexpr std::string_view kEntToken = "<ent>";
inline constexpr std::string_view kEodToken = "<eod>";

// Minimal tokenizer contract the codec needs: a deterministic mapping from
// text to an ordered list of byte spans. Production tokenizers (BPE etc.)
// plug in behind the same interface; tests use WhitespaceTokenizer.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<TokenSpan> token_spans(std::string_view text) const = 0;

    std::size_t count_tokens(std::string_view text) const {
        return token_spans(text).size();
    }
};

// Splits on whitespace, then carves `<ent>` / `<eod>` out of each run so the
// reserved tokens always stand alone: "pain.<eod>" -> ["pain.", "<eod>"].
class WhitespaceTokenizer final : public Tokenizer {
public:
    std::string name() const override { return "whitespace"; }
    std::vector<TokenSpan> token_spans(std::string_view text) const override;
};

// Grow-on-first-sight token registry. Ids are dense from 0 in order of first
// appearance, so a fixed call sequence always yields the same ids.
class Vocabulary {
public:
    int id_of(std::string_view token);
    std::optional<int> find(std::string_view token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return tokens_.size(); }

private:
    std::unordered_map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

}  // namespace kcomp
