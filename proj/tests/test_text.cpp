#include <doctest.h>

#include "kcomp/text.hpp"

using namespace kcomp;

TEST_CASE("trim removes surrounding whitespace only") {
    CHECK(trim("  hello world \t\n") == "hello world");
    CHECK(trim("") == "");
    CHECK(trim(" \n\t ") == "");
    CHECK(trim("x") == "x");
}

TEST_CASE("whitespace token spans cover maximal non-space runs") {
    auto spans = whitespace_token_spans("ab  cd\ne");
    REQUIRE(spans.size() == 3);
    CHECK(spans[0] == TokenSpan{0, 2});
    CHECK(spans[1] == TokenSpan{4, 6});
    CHECK(spans[2] == TokenSpan{7, 8});
    CHECK(count_whitespace_tokens("") == 0);
    CHECK(count_whitespace_tokens("   ") == 0);
    CHECK(count_whitespace_tokens("one two three") == 3);
}

TEST_CASE("normalize_surface folds case and collapses whitespace") {
    CHECK(normalize_surface("  Heart\tAttack ") == "heart attack");
    CHECK(normalize_surface("GLAUCOMA") == "glaucoma");
    CHECK(normalize_surface("a  b   c") == "a b c");
}

TEST_CASE("collapse_whitespace preserves case") {
    CHECK(collapse_whitespace(" A  B\n C ") == "A B C");
}

TEST_CASE("word token spans split on punctuation but keep hyphens and apostrophes") {
    auto spans = word_token_spans("What are X-linked traits, really?");
    // "What" "are" "X-linked" "traits" "really"
    REQUIRE(spans.size() == 5);
    std::string text = "What are X-linked traits, really?";
    CHECK(text.substr(spans[2].begin, spans[2].size()) == "X-linked");
    CHECK(text.substr(spans[4].begin, spans[4].size()) == "really");
}

TEST_CASE("contains") {
    CHECK(contains("abcdef", "cde"));
    CHECK_FALSE(contains("abc", "abcd"));
    CHECK(contains("abc", ""));
}
