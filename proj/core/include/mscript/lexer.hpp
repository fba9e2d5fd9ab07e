#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mscript {

enum class TokenKind {
    name,
    int_lit,
    float_lit,
    str_lit,
    keyword,
    op,       // punctuation and operators, text holds the spelling
    newline,
    indent,
    dedent,
    end,
};

struct Token {
    TokenKind kind;
    std::string text;
    int line = 0;
    int col = 0;
    int64_t int_value = 0;
    double float_value = 0.0;

    bool is_op(const char* s) const { return kind == TokenKind::op && text == s; }
    bool is_keyword(const char* s) const { return kind == TokenKind::keyword && text == s; }
};

// Python-style lexing: indentation produces INDENT/DEDENT, newlines inside
// brackets are ignored, '#' starts a comment. Tabs in indentation are
// rejected. Throws SyntaxError.
std::vector<Token> tokenize(const std::string& source);

}  // namespace mscript
