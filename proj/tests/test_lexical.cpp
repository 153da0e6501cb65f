#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "cdhf/lexical.hpp"
#include "doctest.h"

using namespace cdhf;

namespace {
int count_kind(const LexResult& s, TokenClass c) {
    int n = 0;
    for (const auto& t : s.tokens)
        if (t.cls == c) ++n;
    return n;
}
}  // namespace

TEST_CASE("def f(x): tokenization") {
    auto s = lexical_scan("def f(x):");
    REQUIRE(s.tokens.size() == 6);
    CHECK(s.tokens[0].cls == TokenClass::Keyword);
    CHECK(s.tokens[0].text == "def");
    CHECK(s.tokens[1].cls == TokenClass::Identifier);
    CHECK(s.tokens[1].text == "f");
    CHECK(s.tokens[2].cls == TokenClass::Punctuation);
    CHECK(s.tokens[3].cls == TokenClass::Identifier);
    CHECK(s.tokens[4].cls == TokenClass::Punctuation);
    CHECK(s.tokens[5].cls == TokenClass::Punctuation);
    CHECK(s.tokens[5].text == ":");
    CHECK(s.balance.round == 0);
    CHECK(s.balance.square == 0);
    CHECK(s.balance.curly == 0);
}

TEST_CASE("unbalanced brackets") {
    CHECK(lexical_scan("((").balance.round == 2);
    CHECK(lexical_scan("]]]").balance.square == -3);
    auto s = lexical_scan("{([])}");
    CHECK(s.balance.round == 0);
    CHECK(s.balance.square == 0);
    CHECK(s.balance.curly == 0);
}

TEST_CASE("comment and keyword counting") {
    auto s = lexical_scan("import numpy # hi");
    CHECK(s.keyword_count() == 1);
    CHECK(s.has_comment());
    CHECK(count_kind(s, TokenClass::Comment) == 1);
    CHECK(count_kind(s, TokenClass::Identifier) == 1);
    CHECK_FALSE(lexical_scan("import numpy").has_comment());
}

TEST_CASE("literals") {
    auto s = lexical_scan("x = 'abc' + 42 + 3.5");
    CHECK(count_kind(s, TokenClass::Literal) == 3);
}

TEST_CASE("keyword list covers the python reserved words") {
    const auto& kw = python_keywords();
    CHECK(kw.size() == 35);
    auto has = [&](const char* w) {
        return std::find(kw.begin(), kw.end(), w) != kw.end();
    };
    CHECK(has("import"));
    CHECK(has("def"));
    CHECK(has("try"));
    CHECK_FALSE(has("numpy"));
}

TEST_CASE("scanner is total") {
    CHECK_NOTHROW(lexical_scan(""));
    CHECK_NOTHROW(lexical_scan("\x01\n\t\\\"unterminated"));
    CHECK_NOTHROW(lexical_scan(std::string(10000, '(')));
    CHECK(lexical_scan("").tokens.empty());
}
