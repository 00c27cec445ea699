#include <doctest.h>

#include <string>
#include <vector>

#include "kcomp/tokenizer.hpp"

using namespace kcomp;

namespace {

std::vector<std::string> tokens_of(const Tokenizer& tok, const std::string& text) {
    std::vector<std::string> out;
    for (auto span : tok.token_spans(text)) {
        out.push_back(text.substr(span.begin, span.size()));
    }
    return out;
}

}  // namespace

TEST_CASE("whitespace tokenizer keeps reserved tokens atomic") {
    WhitespaceTokenizer tok;
    CHECK(tokens_of(tok, "pain.<eod>") == std::vector<std::string>{"pain.", "<eod>"});
    CHECK(tokens_of(tok, "<ent>?") == std::vector<std::string>{"<ent>", "?"});
    CHECK(tokens_of(tok, "a<eod>b") == std::vector<std::string>{"a", "<eod>", "b"});
    CHECK(tokens_of(tok, "<eod><eod>") == std::vector<std::string>{"<eod>", "<eod>"});
    CHECK(tokens_of(tok, "What is <ent>?") ==
          std::vector<std::string>{"What", "is", "<ent>", "?"});
}

TEST_CASE("whitespace tokenizer span offsets are exact") {
    WhitespaceTokenizer tok;
    const std::string text = "ab <ent>x";
    auto spans = tok.token_spans(text);
    REQUIRE(spans.size() == 3);
    CHECK(text.substr(spans[0].begin, spans[0].size()) == "ab");
    CHECK(text.substr(spans[1].begin, spans[1].size()) == "<ent>");
    CHECK(text.substr(spans[2].begin, spans[2].size()) == "x");
    // Spans are non-overlapping and ordered.
    CHECK(spans[0].end <= spans[1].begin);
    CHECK(spans[1].end <= spans[2].begin);
}

TEST_CASE("vocabulary ids are dense and stable in first-seen order") {
    Vocabulary vocab;
    CHECK(vocab.id_of("alpha") == 0);
    CHECK(vocab.id_of("beta") == 1);
    CHECK(vocab.id_of("alpha") == 0);
    CHECK(vocab.size() == 2);
    CHECK(vocab.token(1) == "beta");
    CHECK(vocab.find("gamma") == std::nullopt);
    CHECK(vocab.find("beta") == 1);
}
