#include "cdhf/lexical.hpp"

#include <algorithm>
#include <cctype>

namespace cdhf {

namespace {

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_cont(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

const std::vector<std::string>& python_keywords() {
    static const std::vector<std::string> kw = {
        "False",  "None",   "True",    "and",    "as",     "assert", "async",
        "await",  "break",  "class",   "continue", "def",  "del",    "elif",
        "else",   "except", "finally", "for",    "from",   "global", "if",
        "import", "in",     "is",      "lambda", "nonlocal", "not",  "or",
        "pass",   "raise",  "return",  "try",    "while",  "with",   "yield"};
    return kw;
}

int LexResult::keyword_count() const {
    return static_cast<int>(
        std::count_if(tokens.begin(), tokens.end(),
                      [](const Token& t) { return t.cls == TokenClass::Keyword; }));
}

bool LexResult::has_comment() const {
    return std::any_of(tokens.begin(), tokens.end(),
                       [](const Token& t) { return t.cls == TokenClass::Comment; });
}

LexResult lexical_scan(std::string_view text) {
    LexResult r;
    const auto& keywords = python_keywords();
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '#') {
            std::size_t end = text.find('\n', i);
            if (end == std::string_view::npos) end = text.size();
            r.tokens.push_back({TokenClass::Comment, std::string(text.substr(i, end - i))});
            i = end;
            continue;
        }
        if (c == '"' || c == '\'') {
            // String literal to the matching quote on the same line, unescaped.
            std::size_t j = i + 1;
            while (j < text.size() && text[j] != c && text[j] != '\n') {
                if (text[j] == '\\' && j + 1 < text.size()) ++j;
                ++j;
            }
            if (j < text.size() && text[j] == c) ++j;
            r.tokens.push_back({TokenClass::Literal, std::string(text.substr(i, j - i))});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '.'))
                ++j;
            r.tokens.push_back({TokenClass::Literal, std::string(text.substr(i, j - i))});
            i = j;
            continue;
        }
        if (is_ident_start(c)) {
            std::size_t j = i;
            while (j < text.size() && is_ident_cont(text[j])) ++j;
            std::string word(text.substr(i, j - i));
            bool kw = std::find(keywords.begin(), keywords.end(), word) != keywords.end();
            r.tokens.push_back({kw ? TokenClass::Keyword : TokenClass::Identifier,
                                std::move(word)});
            i = j;
            continue;
        }
        switch (c) {
            case '(': ++r.balance.round; break;
            case ')': --r.balance.round; break;
            case '[': ++r.balance.square; break;
            case ']': --r.balance.square; break;
            case '{': ++r.balance.curly; break;
            case '}': --r.balance.curly; break;
            default: break;
        }
        r.tokens.push_back({TokenClass::Punctuation, std::string(1, c)});
        ++i;
    }
    return r;
}

}  // namespace cdhf
