#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cdhf {

enum class TokenClass { Identifier, Keyword, Punctuation, Literal, Comment };

struct Token {
    TokenClass cls;
    std::string text;
};

struct BracketBalance {
    int round = 0;   // ( )
    int square = 0;  // [ ]
    int curly = 0;   // { }
};

struct LexResult {
    std::vector<Token> tokens;
    BracketBalance balance;

    int keyword_count() const;
    bool has_comment() const;
};

// Python reserved words; the keyword set feature extraction counts against.
const std::vector<std::string>& python_keywords();

// Total lexical scan of code-like text: identifiers, keywords, numeric/string
// literals, '#' comments to end of line, everything else as punctuation.
// Never fails; unknown bytes become punctuation.
LexResult lexical_scan(std::string_view text);

}  // namespace cdhf
