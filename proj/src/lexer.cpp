#include "dvs/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace dvs {

namespace {

const std::unordered_set<std::string_view> kKeywords = {
    "auto",     "break",  "case",    "char",   "const",    "continue", "default",
    "do",       "double", "else",    "enum",   "extern",   "float",    "for",
    "goto",     "if",     "inline",  "int",    "long",     "register", "restrict",
    "return",   "short",  "signed",  "sizeof", "static",   "struct",   "switch",
    "typedef",  "union",  "unsigned","void",   "volatile", "while",    "bool",
};

// Multi-character operators, longest first for maximal munch.
const std::array<std::string_view, 19> kLongOps = {
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=",
    "==",  "!=",  "&&",  "||", "+=", "-=", "*=", "/=", "%=",
};
const std::array<std::string_view, 2> kLongOps2 = {"&=", "|="};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_cont(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

void validate_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        std::size_t extra;
        if (c < 0x80) extra = 0;
        else if ((c & 0xE0) == 0xC0) extra = 1;
        else if ((c & 0xF0) == 0xE0) extra = 2;
        else if ((c & 0xF8) == 0xF0) extra = 3;
        else throw LexError("invalid UTF-8 byte at offset " + std::to_string(i));
        if (i + extra >= s.size() && extra > 0)
            throw LexError("truncated UTF-8 sequence at offset " + std::to_string(i));
        for (std::size_t k = 1; k <= extra; ++k)
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80)
                throw LexError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
        i += extra + 1;
    }
}

}  // namespace

const char* token_kind_name(TokenKind k) {
    switch (k) {
        case TokenKind::Identifier: return "identifier";
        case TokenKind::Keyword: return "keyword";
        case TokenKind::Number: return "number";
        case TokenKind::StringLiteral: return "string_literal";
        case TokenKind::CharLiteral: return "char_literal";
        case TokenKind::Operator: return "operator";
        case TokenKind::Punctuation: return "punctuation";
        case TokenKind::Comment: return "comment";
    }
    return "?";
}

TokenKind token_kind_from_name(std::string_view name) {
    for (int k = 0; k <= static_cast<int>(TokenKind::Comment); ++k)
        if (name == token_kind_name(static_cast<TokenKind>(k))) return static_cast<TokenKind>(k);
    throw LexError("unknown token kind: " + std::string(name));
}

bool is_c_keyword(std::string_view word) { return kKeywords.count(word) > 0; }

TokenStream tokenize(std::string_view src) {
    validate_utf8(src);
    TokenStream ts;
    std::size_t i = 0;
    bool at_line_start = true;

    auto push = [&](std::size_t start, std::size_t end, TokenKind kind) {
        ts.tokens.push_back({std::string(src.substr(start, end - start)), kind, start, end});
    };

    while (i < src.size()) {
        const char c = src[i];

        if (c == '\n') {
            at_line_start = true;
            ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }

        // Preprocessor directive: one opaque token spanning the logical line.
        if (c == '#' && at_line_start) {
            const std::size_t start = i;
            while (i < src.size() && src[i] != '\n') {
                if (src[i] == '\\' && i + 1 < src.size() && src[i + 1] == '\n') i += 2;
                else ++i;
            }
            push(start, i, TokenKind::Punctuation);
            continue;
        }
        at_line_start = false;

        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') ++i;
            continue;  // comments never enter the stream
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
            const std::size_t start = i;
            i += 2;
            while (i + 1 < src.size() && !(src[i] == '*' && src[i + 1] == '/')) ++i;
            if (i + 1 >= src.size())
                throw LexError("unterminated block comment at offset " + std::to_string(start));
            i += 2;
            continue;
        }

        if (is_ident_start(c)) {
            const std::size_t start = i;
            while (i < src.size() && is_ident_cont(src[i])) ++i;
            const std::string_view word = src.substr(start, i - start);
            push(start, i, is_c_keyword(word) ? TokenKind::Keyword : TokenKind::Identifier);
            continue;
        }

        if (is_digit(c) || (c == '.' && i + 1 < src.size() && is_digit(src[i + 1]))) {
            const std::size_t start = i;
            while (i < src.size()) {
                const char d = src[i];
                if (is_ident_cont(d) || d == '.') { ++i; continue; }
                if ((d == '+' || d == '-') && i > start) {
                    const char prev = src[i - 1];
                    if (prev == 'e' || prev == 'E' || prev == 'p' || prev == 'P') { ++i; continue; }
                }
                break;
            }
            push(start, i, TokenKind::Number);
            continue;
        }

        if (c == '"' || c == '\'') {
            const std::size_t start = i;
            const char quote = c;
            ++i;
            while (i < src.size() && src[i] != quote && src[i] != '\n') {
                if (src[i] == '\\' && i + 1 < src.size()) i += 2;
                else ++i;
            }
            if (i >= src.size() || src[i] != quote)
                throw LexError(std::string("unterminated ") +
                               (quote == '"' ? "string" : "char") + " literal at offset " +
                               std::to_string(start));
            ++i;
            push(start, i, quote == '"' ? TokenKind::StringLiteral : TokenKind::CharLiteral);
            continue;
        }

        bool matched = false;
        for (const auto& op : kLongOps) {
            if (src.substr(i, op.size()) == op) {
                push(i, i + op.size(), TokenKind::Operator);
                i += op.size();
                matched = true;
                break;
            }
        }
        if (!matched) {
            for (const auto& op : kLongOps2) {
                if (src.substr(i, op.size()) == op) {
                    push(i, i + op.size(), TokenKind::Operator);
                    i += op.size();
                    matched = true;
                    break;
                }
            }
        }
        if (matched) continue;

        const bool punct = c == ';' || c == ',' || c == '(' || c == ')' || c == '{' ||
                           c == '}' || c == '[' || c == ']';
        if (static_cast<unsigned char>(c) < 0x80) {
            push(i, i + 1, punct ? TokenKind::Punctuation : TokenKind::Operator);
            ++i;
        } else {
            // Whole non-ASCII codepoint becomes one opaque punctuation token.
            std::size_t len = 1;
            while (i + len < src.size() &&
                   (static_cast<unsigned char>(src[i + len]) & 0xC0) == 0x80)
                ++len;
            push(i, i + len, TokenKind::Punctuation);
            i += len;
        }
    }

    ts.original_length = ts.tokens.size();
    ts.truncated = false;
    return ts;
}

TokenStream truncate(TokenStream ts, std::size_t l_max) {
    if (l_max < 1) throw LexError("truncate: L_max must be >= 1");
    if (ts.tokens.size() > l_max) {
        ts.tokens.resize(l_max);
        ts.truncated = true;
    }
    return ts;
}

}  // namespace dvs
