#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "racg/language.hpp"

namespace racg {

enum class TokenKind : std::uint8_t {
  Identifier,
  Keyword,
  Number,
  String,
  Char,
  Regex,
  Operator,
  Punct,
  LineComment,
  BlockComment,
  /// Python triple-quoted string standing alone as a statement.
  DocString,
  Preprocessor,
  Newline,
  Other,
};

/// A lexeme as a byte range into the lexed source. Whitespace other than
/// newlines is not represented.
struct Token {
  TokenKind kind = TokenKind::Other;
  std::size_t begin = 0;
  std::size_t end = 0;
  /// For String/Char tokens: the bytes between the delimiters.
  std::size_t content_begin = 0;
  std::size_t content_end = 0;

  std::string_view text(std::string_view source) const {
    return source.substr(begin, end - begin);
  }
  bool is_comment() const {
    return kind == TokenKind::LineComment || kind == TokenKind::BlockComment ||
           kind == TokenKind::DocString;
  }
  /// Anything that is not a comment or a newline.
  bool is_significant() const { return !is_comment() && kind != TokenKind::Newline; }
};

struct LexResult {
  std::vector<Token> tokens;
  bool unterminated_comment = false;
};

/// Lightweight per-language lexer: identifiers, keywords, operators,
/// string/char literals and comments. Never fails; unknown bytes become
/// `Other` tokens.
LexResult lex(std::string_view source, Language lang);

bool is_keyword(Language lang, std::string_view word);

/// Keywords whose removal still leaves a plausible program (modifiers,
/// `return`, `break`, ...).
bool is_deletable_keyword(Language lang, std::string_view word);

/// Offset of the first letter or underscore, skipping sigils such as `$`,
/// `@` or `%`.
std::size_t identifier_name_offset(std::string_view identifier);

}  // namespace racg
