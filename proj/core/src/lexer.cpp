#include "mscript/lexer.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <set>
#include <string>

#include "mscript/errors.hpp"

namespace mscript {

namespace {

const std::set<std::string>& keywords() {
    static const std::set<std::string> kw = {
        "None", "True", "False", "def",   "return", "if",   "elif", "else", "while",
        "for",  "in",   "import", "from", "class",  "pass", "and",  "or",   "not",
    };
    return kw;
}

struct Lexer {
    const std::string& src;
    size_t pos = 0;
    int line = 1;
    int col = 1;
    int bracket_depth = 0;
    std::vector<int> indents{0};
    std::vector<Token> out;
    bool at_line_start = true;

    explicit Lexer(const std::string& s) : src(s) {}

    char peek(size_t ahead = 0) const {
        return pos + ahead < src.size() ? src[pos + ahead] : '\0';
    }

    char advance() {
        char c = src[pos++];
        if (c == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        return c;
    }

    [[noreturn]] void fail(const std::string& msg, const std::string& tok) const {
        throw SyntaxError(msg, line, col, tok);
    }

    void push(TokenKind kind, std::string text, int l, int c) {
        Token t;
        t.kind = kind;
        t.text = std::move(text);
        t.line = l;
        t.col = c;
        out.push_back(std::move(t));
    }

    void handle_indentation() {
        // Measure leading spaces; skip blank and comment-only lines entirely.
        while (pos < src.size()) {
            size_t start = pos;
            int width = 0;
            while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t')) {
                if (src[pos] == '\t') {
                    col += static_cast<int>(pos - start);
                    fail("tab in indentation", "\\t");
                }
                ++pos;
                ++col;
                ++width;
            }
            if (pos >= src.size()) return;
            if (src[pos] == '\n') {
                advance();
                continue;
            }
            if (src[pos] == '#') {
                while (pos < src.size() && src[pos] != '\n') advance();
                continue;
            }
            int current = indents.back();
            if (width > current) {
                indents.push_back(width);
                push(TokenKind::indent, "", line, 1);
            } else if (width < current) {
                while (indents.back() > width) {
                    indents.pop_back();
                    push(TokenKind::dedent, "", line, 1);
                }
                if (indents.back() != width) {
                    fail("unindent does not match any outer level", std::to_string(width));
                }
            }
            return;
        }
    }

    void lex_string() {
        int l = line, c = col;
        char quote = advance();
        std::string value;
        while (true) {
            if (pos >= src.size() || peek() == '\n') {
                fail("unterminated string literal", std::string(1, quote));
            }
            char ch = advance();
            if (ch == quote) break;
            if (ch == '\\') {
                if (pos >= src.size()) fail("unterminated escape", "\\");
                char esc = advance();
                switch (esc) {
                    case 'n': value += '\n'; break;
                    case 't': value += '\t'; break;
                    case '\\': value += '\\'; break;
                    case '\'': value += '\''; break;
                    case '"': value += '"'; break;
                    default: fail("unknown escape sequence", std::string("\\") + esc);
                }
            } else {
                value += ch;
            }
        }
        Token t;
        t.kind = TokenKind::str_lit;
        t.text = std::move(value);
        t.line = l;
        t.col = c;
        out.push_back(std::move(t));
    }

    void lex_number() {
        int l = line, c = col;
        std::string text;
        bool is_float = false;
        while (std::isdigit(static_cast<unsigned char>(peek()))) text += advance();
        if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
            is_float = true;
            text += advance();
            while (std::isdigit(static_cast<unsigned char>(peek()))) text += advance();
        }
        if (peek() == 'e' || peek() == 'E') {
            char sign = peek(1);
            size_t digits_at = (sign == '+' || sign == '-') ? 2 : 1;
            if (std::isdigit(static_cast<unsigned char>(peek(digits_at)))) {
                is_float = true;
                text += advance();
                if (sign == '+' || sign == '-') text += advance();
                while (std::isdigit(static_cast<unsigned char>(peek()))) text += advance();
            }
        }
        Token t;
        t.line = l;
        t.col = c;
        if (is_float) {
            t.kind = TokenKind::float_lit;
            t.float_value = std::strtod(text.c_str(), nullptr);
        } else {
            t.kind = TokenKind::int_lit;
            errno = 0;
            char* end = nullptr;
            long long v = std::strtoll(text.c_str(), &end, 10);
            if (errno == ERANGE) {
                throw SyntaxError("integer literal out of range", l, c, text);
            }
            t.int_value = static_cast<int64_t>(v);
        }
        t.text = std::move(text);
        out.push_back(std::move(t));
    }

    void lex_name() {
        int l = line, c = col;
        std::string text;
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') {
            text += advance();
        }
        TokenKind kind = keywords().count(text) ? TokenKind::keyword : TokenKind::name;
        push(kind, std::move(text), l, c);
    }

    void lex_operator() {
        int l = line, c = col;
        char ch = peek();
        static const char* two_char[] = {"==", "!=", "<=", ">=", "//"};
        if (pos + 1 < src.size()) {
            std::string pair{src[pos], src[pos + 1]};
            for (const char* op : two_char) {
                if (pair == op) {
                    advance();
                    advance();
                    push(TokenKind::op, pair, l, c);
                    return;
                }
            }
        }
        static const std::string single = "+-*/%=<>()[]{},:.";
        if (single.find(ch) == std::string::npos) {
            fail("unexpected character", std::string(1, ch));
        }
        advance();
        if (ch == '(' || ch == '[' || ch == '{') ++bracket_depth;
        if (ch == ')' || ch == ']' || ch == '}') {
            if (bracket_depth > 0) --bracket_depth;
        }
        push(TokenKind::op, std::string(1, ch), l, c);
    }

    std::vector<Token> run() {
        while (pos < src.size()) {
            if (at_line_start && bracket_depth == 0) {
                at_line_start = false;
                handle_indentation();
                if (pos >= src.size()) break;
            }
            char c = peek();
            if (c == '\n') {
                advance();
                if (bracket_depth == 0) {
                    push(TokenKind::newline, "", line - 1, col);
                    at_line_start = true;
                }
                continue;
            }
            if (c == ' ' || c == '\t') {
                advance();
                continue;
            }
            if (c == '#') {
                while (pos < src.size() && peek() != '\n') advance();
                continue;
            }
            if (c == '"' || c == '\'') {
                lex_string();
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c))) {
                lex_number();
                continue;
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                lex_name();
                continue;
            }
            lex_operator();
        }
        // Close the last logical line and any open blocks.
        if (!out.empty() && out.back().kind != TokenKind::newline &&
            out.back().kind != TokenKind::dedent) {
            push(TokenKind::newline, "", line, col);
        }
        while (indents.back() > 0) {
            indents.pop_back();
            push(TokenKind::dedent, "", line, col);
        }
        push(TokenKind::end, "", line, col);
        return std::move(out);
    }
};

}  // namespace

std::vector<Token> tokenize(const std::string& source) {
    Lexer lexer(source);
    return lexer.run();
}

}  // namespace mscript
