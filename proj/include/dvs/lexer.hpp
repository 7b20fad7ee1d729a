#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dvs {

enum class TokenKind {
    Identifier,
    Keyword,
    Number,
    StringLiteral,
    CharLiteral,
    Operator,
    Punctuation,
    Comment,
};

const char* token_kind_name(TokenKind k);
TokenKind token_kind_from_name(std::string_view name);

struct Token {
    std::string text;
    TokenKind kind;
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;  // exclusive
};

/// Token sequence for one function. Comments are lexed for span accounting
/// but never enter the stream; every downstream index (graphs, embeddings)
/// refers to positions in `tokens`.
struct TokenStream {
    std::vector<Token> tokens;
    bool truncated = false;
    std::size_t original_length = 0;
};

struct LexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Identifier-preserving tokenization of one C-like function.
/// Identifiers are never split at underscores. Preprocessor lines become a
/// single Punctuation token. Throws LexError on unterminated literals or
/// comments and on invalid UTF-8.
TokenStream tokenize(std::string_view source);

/// Keep the first min(len, l_max) tokens and set the truncation flag.
TokenStream truncate(TokenStream ts, std::size_t l_max);

bool is_c_keyword(std::string_view word);

}  // namespace dvs
