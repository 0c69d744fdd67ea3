#include "racg/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <initializer_list>
#include <string>
#include <unordered_set>

namespace racg {

namespace {

using L = Language;

struct Profile {
  bool slash_comments = false;
  bool hash_comments = false;
  bool nested_block = false;
  bool ruby_block = false;
  bool pod = false;
  bool single_quote_is_char = false;
  bool multiline_strings = false;
  bool triple_double = false;
  bool triple_single = false;
  bool triple_escapes = true;
  bool backtick_raw = false;
  bool backtick_template = false;
  bool backtick_string = false;
  bool backtick_identifier = false;
  bool preprocessor = false;
  bool regex_literals = false;
  bool dollar_in_identifier = false;
};

Profile make_profile(Language lang) {
  Profile p;
  switch (lang) {
    case L::Cpp:
      p.slash_comments = true;
      p.single_quote_is_char = true;
      p.preprocessor = true;
      break;
    case L::CSharp:
      p.slash_comments = true;
      p.single_quote_is_char = true;
      p.preprocessor = true;
      p.triple_double = true;
      p.triple_escapes = false;
      break;
    case L::Go:
      p.slash_comments = true;
      p.single_quote_is_char = true;
      p.backtick_raw = true;
      break;
    case L::Java:
      p.slash_comments = true;
      p.single_quote_is_char = true;
      p.triple_double = true;
      p.dollar_in_identifier = true;
      break;
    case L::JavaScript:
    case L::TypeScript:
      p.slash_comments = true;
      p.backtick_template = true;
      p.regex_literals = true;
      p.dollar_in_identifier = true;
      break;
    case L::Kotlin:
      p.slash_comments = true;
      p.nested_block = true;
      p.single_quote_is_char = true;
      p.triple_double = true;
      p.triple_escapes = false;
      p.backtick_identifier = true;
      break;
    case L::Scala:
      p.slash_comments = true;
      p.nested_block = true;
      p.single_quote_is_char = true;
      p.triple_double = true;
      p.triple_escapes = false;
      p.backtick_identifier = true;
      p.dollar_in_identifier = true;
      break;
    case L::Swift:
      p.slash_comments = true;
      p.nested_block = true;
      p.triple_double = true;
      p.backtick_identifier = true;
      break;
    case L::Perl:
      p.hash_comments = true;
      p.pod = true;
      p.multiline_strings = true;
      p.backtick_string = true;
      p.regex_literals = true;
      break;
    case L::Php:
      p.slash_comments = true;
      p.hash_comments = true;
      p.multiline_strings = true;
      p.backtick_string = true;
      break;
    case L::Python:
      p.hash_comments = true;
      p.triple_double = true;
      p.triple_single = true;
      break;
    case L::Ruby:
      p.hash_comments = true;
      p.ruby_block = true;
      p.multiline_strings = true;
      p.backtick_string = true;
      p.regex_literals = true;
      break;
  }
  return p;
}

using WordSet = std::unordered_set<std::string_view>;

WordSet words(std::initializer_list<std::string_view> list) { return WordSet(list); }

const WordSet& keyword_set(Language lang) {
  static const std::array<WordSet, 13> sets = [] {
    std::array<WordSet, 13> s;
    auto at = [&](L l) -> WordSet& { return s[static_cast<std::size_t>(l)]; };
    at(L::Cpp) = words(
        {"alignas", "alignof", "and", "and_eq", "asm", "auto", "bitand", "bitor", "bool",
         "break", "case", "catch", "char", "char8_t", "char16_t", "char32_t", "class",
         "compl", "concept", "const", "consteval", "constexpr", "constinit", "const_cast",
         "continue", "co_await", "co_return", "co_yield", "decltype", "default", "delete",
         "do", "double", "dynamic_cast", "else", "enum", "explicit", "export", "extern",
         "false", "float", "for", "friend", "goto", "if", "inline", "int", "long",
         "mutable", "namespace", "new", "noexcept", "not", "not_eq", "nullptr",
         "operator", "or", "or_eq", "private", "protected", "public", "register",
         "reinterpret_cast", "requires", "return", "short", "signed", "sizeof", "static",
         "static_assert", "static_cast", "struct", "switch", "template", "this",
         "thread_local", "throw", "true", "try", "typedef", "typeid", "typename", "union",
         "unsigned", "using", "virtual", "void", "volatile", "wchar_t", "while", "xor",
         "xor_eq"});
    at(L::CSharp) = words(
        {"abstract", "as", "base", "bool", "break", "byte", "case", "catch", "char",
         "checked", "class", "const", "continue", "decimal", "default", "delegate", "do",
         "double", "else", "enum", "event", "explicit", "extern", "false", "finally",
         "fixed", "float", "for", "foreach", "goto", "if", "implicit", "in", "int",
         "interface", "internal", "is", "lock", "long", "namespace", "new", "null",
         "object", "operator", "out", "override", "params", "private", "protected",
         "public", "readonly", "ref", "return", "sbyte", "sealed", "short", "sizeof",
         "stackalloc", "static", "string", "struct", "switch", "this", "throw", "true",
         "try", "typeof", "uint", "ulong", "unchecked", "unsafe", "ushort", "using",
         "virtual", "void", "volatile", "while", "var", "async", "await", "yield"});
    at(L::Go) = words({"break", "case", "chan", "const", "continue", "default", "defer",
                       "else", "fallthrough", "for", "func", "go", "goto", "if", "import",
                       "interface", "map", "package", "range", "return", "select",
                       "struct", "switch", "type", "var", "true", "false", "nil"});
    at(L::Java) = words(
        {"abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
         "class", "const", "continue", "default", "do", "double", "else", "enum",
         "extends", "final", "finally", "float", "for", "goto", "if", "implements",
         "import", "instanceof", "int", "interface", "long", "native", "new", "package",
         "private", "protected", "public", "return", "short", "static", "strictfp",
         "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try",
         "void", "volatile", "while", "true", "false", "null", "var", "record", "yield"});
    at(L::JavaScript) = words(
        {"break", "case", "catch", "class", "const", "continue", "debugger", "default",
         "delete", "do", "else", "export", "extends", "false", "finally", "for",
         "function", "if", "import", "in", "instanceof", "new", "null", "return", "super",
         "switch", "this", "throw", "true", "try", "typeof", "var", "void", "while",
         "with", "yield", "let", "static", "async", "await", "of", "undefined"});
    at(L::TypeScript) = at(L::JavaScript);
    for (auto w : {"any", "as", "boolean", "declare", "enum", "implements", "interface",
                   "keyof", "module", "namespace", "never", "number", "private",
                   "protected", "public", "readonly", "string", "type", "unknown",
                   "abstract"}) {
      at(L::TypeScript).insert(w);
    }
    at(L::Kotlin) = words(
        {"as", "break", "class", "continue", "do", "else", "false", "for", "fun", "if",
         "in", "interface", "is", "null", "object", "package", "return", "super", "this",
         "throw", "true", "try", "typealias", "typeof", "val", "var", "when", "while",
         "catch", "finally", "import", "override", "private", "protected", "public",
         "internal", "open", "data", "sealed", "const", "lateinit", "inline", "suspend",
         "abstract", "companion"});
    at(L::Perl) = words({"my", "our", "local", "sub", "if", "elsif", "else", "unless",
                         "while", "until", "for", "foreach", "do", "last", "next", "redo",
                         "return", "use", "no", "package", "require", "and", "or", "not",
                         "eq", "ne", "lt", "gt", "le", "ge", "cmp", "defined", "undef"});
    at(L::Php) = words(
        {"abstract", "and", "array", "as", "break", "callable", "case", "catch", "class",
         "clone", "const", "continue", "declare", "default", "do", "echo", "else",
         "elseif", "empty", "extends", "final", "finally", "fn", "for", "foreach",
         "function", "global", "goto", "if", "implements", "include", "instanceof",
         "interface", "isset", "list", "match", "namespace", "new", "or", "print",
         "private", "protected", "public", "readonly", "require", "return", "static",
         "switch", "throw", "trait", "try", "unset", "use", "var", "while", "xor", "yield",
         "true", "false", "null"});
    at(L::Python) = words(
        {"False", "None", "True", "and", "as", "assert", "async", "await", "break",
         "class", "continue", "def", "del", "elif", "else", "except", "finally", "for",
         "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or",
         "pass", "raise", "return", "try", "while", "with", "yield"});
    at(L::Ruby) = words({"BEGIN", "END", "alias", "and", "begin", "break", "case", "class",
                         "def", "defined?", "do", "else", "elsif", "end", "ensure",
                         "false", "for", "if", "in", "module", "next", "nil", "not", "or",
                         "redo", "rescue", "retry", "return", "self", "super", "then",
                         "true", "undef", "unless", "until", "when", "while", "yield"});
    at(L::Scala) = words(
        {"abstract", "case", "catch", "class", "def", "do", "else", "extends", "false",
         "final", "finally", "for", "forSome", "if", "implicit", "import", "lazy", "match",
         "new", "null", "object", "override", "package", "private", "protected", "return",
         "sealed", "super", "this", "throw", "trait", "try", "true", "type", "val", "var",
         "while", "with", "yield", "given", "using", "then", "enum", "export"});
    at(L::Swift) = words(
        {"associatedtype", "class", "deinit", "enum", "extension", "fileprivate", "func",
         "import", "init", "inout", "internal", "let", "open", "operator", "private",
         "protocol", "public", "rethrows", "static", "struct", "subscript", "typealias",
         "var", "break", "case", "continue", "default", "defer", "do", "else",
         "fallthrough", "for", "guard", "if", "in", "repeat", "return", "switch", "where",
         "while", "as", "catch", "false", "is", "nil", "self", "Self", "super", "throw",
         "throws", "true", "try"});
    return s;
  }();
  return sets[static_cast<std::size_t>(lang)];
}

const WordSet& deletable_words() {
  static const WordSet set = words(
      {"return", "break", "continue", "static", "final", "const", "public", "private",
       "protected", "new", "await", "async", "var", "let", "val", "my", "readonly",
       "inline", "virtual", "override", "abstract", "this", "self", "pass", "next",
       "unsigned", "volatile", "internal", "open", "lateinit", "local", "our"});
  return set;
}

struct OpTable {
  std::vector<std::string_view> ops;  // longest first
};

OpTable make_ops(Language lang) {
  std::vector<std::string_view> ops = {
      "...", "<<=", ">>=", "**=", "&&=", "||=", "?\?=", "->", "=>", "::", "==", "!=",
      "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
      "^=", "<<", ">>", "..", "?.",
  };
  auto add = [&](std::initializer_list<std::string_view> extra) {
    ops.insert(ops.end(), extra.begin(), extra.end());
  };
  switch (lang) {
    case L::Cpp: add({"<=>", "->*", ".*"}); break;
    case L::CSharp: add({"??", "?."}); break;
    case L::Go: add({"<-", ":=", "&^", "&^="}); break;
    case L::Java: add({">>>", ">>>="}); break;
    case L::JavaScript:
    case L::TypeScript: add({"===", "!==", ">>>", ">>>=", "**", "??"}); break;
    case L::Kotlin: add({"!!", "?:", "!==", "==="}); break;
    case L::Perl: add({"<=>", "**", "=~", "!~", "//", "//="}); break;
    case L::Php: add({"===", "!==", "<=>", "**", "??", "?->", "?>"}); break;
    case L::Python: add({"**", "//", "//=", ":=", "@="}); break;
    case L::Ruby: add({"===", "<=>", "**", "=~", "!~", "&."}); break;
    case L::Scala: add({"<-", ">>>"}); break;
    case L::Swift: add({"..<", "??", "==="}); break;
  }
  std::stable_sort(ops.begin(), ops.end(),
                   [](std::string_view a, std::string_view b) { return a.size() > b.size(); });
  ops.erase(std::unique(ops.begin(), ops.end()), ops.end());
  return {std::move(ops)};
}

bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

bool is_ident_char(unsigned char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

bool is_hspace(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

char closing_delimiter(char open) {
  switch (open) {
    case '(': return ')';
    case '[': return ']';
    case '{': return '}';
    case '<': return '>';
    default: return open;
  }
}

class Lexer {
 public:
  Lexer(std::string_view src, Language lang)
      : src_(src), lang_(lang), profile_(make_profile(lang)), ops_(make_ops(lang)) {}

  LexResult run() {
    while (pos_ < src_.size()) step();
    if (lang_ == L::Python) mark_docstrings();
    return std::move(result_);
  }

 private:
  char peek(std::size_t offset = 0) const {
    return pos_ + offset < src_.size() ? src_[pos_ + offset] : '\0';
  }
  bool starts_with(std::string_view s, std::size_t at) const {
    return src_.substr(at, s.size()) == s;
  }
  bool starts_with(std::string_view s) const { return starts_with(s, pos_); }

  bool at_line_start(std::size_t at) const { return at == 0 || src_[at - 1] == '\n'; }

  bool only_space_before_on_line(std::size_t at) const {
    while (at > 0 && src_[at - 1] != '\n') {
      if (!is_hspace(src_[at - 1])) return false;
      --at;
    }
    return true;
  }

  void push(TokenKind kind, std::size_t begin, std::size_t end) {
    Token t;
    t.kind = kind;
    t.begin = begin;
    t.end = end;
    result_.tokens.push_back(t);
  }
  void push_string(TokenKind kind, std::size_t begin, std::size_t end, std::size_t cb,
                   std::size_t ce) {
    Token t;
    t.kind = kind;
    t.begin = begin;
    t.end = end;
    t.content_begin = cb;
    t.content_end = std::max(cb, ce);
    result_.tokens.push_back(t);
  }

  const Token* last_significant() const {
    for (auto it = result_.tokens.rbegin(); it != result_.tokens.rend(); ++it) {
      if (it->is_significant()) return &*it;
    }
    return nullptr;
  }

  /// True when a `/` or `%` at the current position starts an operand
  /// (regex / percent literal) rather than an operator.
  bool operand_expected() const {
    const Token* prev = last_significant();
    if (prev == nullptr) return true;
    std::string_view text = prev->text(src_);
    switch (prev->kind) {
      case TokenKind::Operator:
        return text != "++" && text != "--";
      case TokenKind::Punct:
        return text != ")" && text != "]" && text != "}";
      case TokenKind::Keyword:
        return text != "this" && text != "super" && text != "self" && text != "true" &&
               text != "false" && text != "null" && text != "nil" && text != "undefined";
      case TokenKind::Identifier:
        if (lang_ == L::Perl || lang_ == L::Ruby) {
          return text == "split" || text == "grep" || text == "map" || text == "when" ||
                 text == "scan" || text == "match" || text == "sub" || text == "gsub";
        }
        return false;
      default:
        return false;
    }
  }

  void step() {
    const std::size_t start = pos_;
    const char c = peek();

    if (c == '\n') {
      push(TokenKind::Newline, start, start + 1);
      ++pos_;
      return;
    }
    if (is_hspace(c)) {
      ++pos_;
      return;
    }

    if (at_line_start(start)) {
      if (profile_.ruby_block && starts_with("=begin") &&
          (start + 6 == src_.size() || !is_ident_char(src_[start + 6]))) {
        lex_ruby_block();
        return;
      }
      if (profile_.pod && c == '=' && is_ident_start(static_cast<unsigned char>(peek(1)))) {
        lex_pod();
        return;
      }
    }

    if (start == 0 && starts_with("#!")) {
      lex_line_comment();
      return;
    }
    if (profile_.preprocessor && c == '#' && only_space_before_on_line(start)) {
      lex_preprocessor();
      return;
    }
    if (lang_ == L::Php) {
      if (starts_with("<?php")) {
        push(TokenKind::Punct, start, start + 5);
        pos_ += 5;
        return;
      }
      if (starts_with("<?=")) {
        push(TokenKind::Punct, start, start + 3);
        pos_ += 3;
        return;
      }
    }
    if (profile_.hash_comments && c == '#') {
      lex_line_comment();
      return;
    }
    if (profile_.slash_comments && c == '/' && peek(1) == '/') {
      lex_line_comment();
      return;
    }
    if (profile_.slash_comments && c == '/' && peek(1) == '*') {
      lex_block_comment();
      return;
    }
    if (profile_.regex_literals && c == '/' && operand_expected() && lex_regex(start)) {
      return;
    }
    if (lang_ == L::Ruby && c == '%' && operand_expected() && lex_ruby_percent()) {
      return;
    }

    if (c == '"' || c == '\'' || c == '`') {
      lex_quote(start, start);
      return;
    }
    if (lang_ == L::CSharp && (c == '@' || c == '$')) {
      std::size_t q = start;
      while (q < src_.size() && (src_[q] == '@' || src_[q] == '$') && q - start < 2) ++q;
      if (q < src_.size() && src_[q] == '"') {
        const bool verbatim = src_.substr(start, q - start).find('@') != std::string_view::npos;
        lex_csharp_string(start, q, verbatim);
        return;
      }
      if (c == '@' && is_ident_start(static_cast<unsigned char>(peek(1)))) {
        ++pos_;
        lex_identifier(start);
        return;
      }
    }

    if (is_ident_start(static_cast<unsigned char>(c)) ||
        (profile_.dollar_in_identifier && c == '$')) {
      lex_identifier(start);
      return;
    }
    if (c == '$' && (lang_ == L::Php || lang_ == L::Perl || lang_ == L::Ruby)) {
      if (lex_sigil(start)) return;
    }
    if (c == '@' && (lang_ == L::Perl || lang_ == L::Ruby)) {
      if (lex_sigil(start)) return;
    }
    if (is_digit(static_cast<unsigned char>(c))) {
      lex_number(start);
      return;
    }
    lex_operator(start);
  }

  void lex_line_comment() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
    push(TokenKind::LineComment, start, pos_);
  }

  void lex_block_comment() {
    const std::size_t start = pos_;
    pos_ += 2;
    int depth = 1;
    while (pos_ < src_.size()) {
      if (profile_.nested_block && starts_with("/*")) {
        ++depth;
        pos_ += 2;
        continue;
      }
      if (starts_with("*/")) {
        pos_ += 2;
        if (--depth == 0) {
          push(TokenKind::BlockComment, start, pos_);
          return;
        }
        continue;
      }
      ++pos_;
    }
    result_.unterminated_comment = true;
    push(TokenKind::BlockComment, start, pos_);
  }

  std::size_t line_end(std::size_t at) const {
    const std::size_t nl = src_.find('\n', at);
    return nl == std::string_view::npos ? src_.size() : nl;
  }

  void lex_ruby_block() {
    const std::size_t start = pos_;
    std::size_t line = line_end(start);
    while (line < src_.size()) {
      const std::size_t next = line + 1;
      if (starts_with("=end", next) &&
          (next + 4 == src_.size() || !is_ident_char(src_[next + 4]))) {
        pos_ = line_end(next);
        push(TokenKind::BlockComment, start, pos_);
        return;
      }
      line = line_end(next);
    }
    pos_ = src_.size();
    result_.unterminated_comment = true;
    push(TokenKind::BlockComment, start, pos_);
  }

  void lex_pod() {
    const std::size_t start = pos_;
    std::size_t cursor = start;
    while (cursor < src_.size()) {
      const std::size_t end = line_end(cursor);
      if (starts_with("=cut", cursor) &&
          (cursor + 4 == src_.size() || !is_ident_char(src_[cursor + 4]))) {
        pos_ = end;
        push(TokenKind::BlockComment, start, pos_);
        return;
      }
      cursor = end + 1;
    }
    // POD running to end of file is legal Perl.
    pos_ = src_.size();
    push(TokenKind::BlockComment, start, pos_);
  }

  void lex_preprocessor() {
    const std::size_t start = pos_;
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '\n') break;
      if (c == '\\' && peek(1) == '\n') {
        pos_ += 2;
        continue;
      }
      if (c == '/' && (peek(1) == '/' || peek(1) == '*')) break;
      if (c == '"') {
        ++pos_;
        while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
          if (src_[pos_] == '\\') ++pos_;
          ++pos_;
        }
        if (pos_ < src_.size() && src_[pos_] == '"') ++pos_;
        continue;
      }
      ++pos_;
    }
    std::size_t end = pos_;
    while (end > start && is_hspace(src_[end - 1])) --end;
    push(TokenKind::Preprocessor, start, end);
  }

  /// Scans a simple quoted literal whose opening quote is at `open`.
  /// Returns the position just past the closing quote (or where scanning
  /// stopped for unterminated literals) and the content end.
  std::pair<std::size_t, std::size_t> scan_quoted(std::size_t open, char quote, bool escapes,
                                                  bool multiline, bool interpolation) const {
    std::size_t p = open + 1;
    int brace_depth = 0;
    while (p < src_.size()) {
      const char c = src_[p];
      if (escapes && c == '\\') {
        p += 2;
        continue;
      }
      if (interpolation) {
        if (brace_depth == 0 && (c == '$' || c == '#') && p + 1 < src_.size() &&
            src_[p + 1] == '{') {
          brace_depth = 1;
          p += 2;
          continue;
        }
        if (brace_depth > 0) {
          if (c == '{') ++brace_depth;
          if (c == '}') --brace_depth;
          if (c == '"' || c == '\'' || c == '`') {
            p = scan_quoted(p, c, true, false, false).first;
            continue;
          }
          ++p;
          continue;
        }
      }
      if (c == quote) return {p + 1, p};
      if (c == '\n' && !multiline) return {p, p};
      ++p;
    }
    return {src_.size(), src_.size()};
  }

  std::pair<std::size_t, std::size_t> scan_triple(std::size_t open, char quote,
                                                  bool escapes) const {
    const std::string delim(3, quote);
    std::size_t p = open + 3;
    while (p < src_.size()) {
      if (escapes && src_[p] == '\\') {
        p += 2;
        continue;
      }
      if (src_.substr(p, 3) == delim) {
        // Extra quotes directly before the closing delimiter belong to the content.
        std::size_t close = p;
        while (close + 3 < src_.size() && src_[close + 3] == quote) ++close;
        return {close + 3, close};
      }
      ++p;
    }
    return {src_.size(), src_.size()};
  }

  /// `token_begin` may precede `open` when a prefix (r, b, u8, s, ...) is present.
  void lex_quote(std::size_t token_begin, std::size_t open) {
    const char q = src_[open];
    const bool triple = open + 2 < src_.size() && src_[open + 1] == q && src_[open + 2] == q;
    if (triple && ((q == '"' && profile_.triple_double) || (q == '\'' && profile_.triple_single))) {
      // A backslash keeps a quote from closing even in Python raw strings.
      auto [end, content_end] = scan_triple(open, q, lang_ == L::Python || profile_.triple_escapes);
      pos_ = end;
      push_string(TokenKind::String, token_begin, end, open + 3, content_end);
      return;
    }
    if (q == '`') {
      if (profile_.backtick_raw) {
        auto [end, ce] = scan_quoted(open, '`', false, true, false);
        pos_ = end;
        push_string(TokenKind::String, token_begin, end, open + 1, ce);
        return;
      }
      if (profile_.backtick_template) {
        auto [end, ce] = scan_quoted(open, '`', true, true, true);
        pos_ = end;
        push_string(TokenKind::String, token_begin, end, open + 1, ce);
        return;
      }
      if (profile_.backtick_string) {
        auto [end, ce] = scan_quoted(open, '`', true, true, false);
        pos_ = end;
        push_string(TokenKind::String, token_begin, end, open + 1, ce);
        return;
      }
      if (profile_.backtick_identifier) {
        auto [end, ce] = scan_quoted(open, '`', false, false, false);
        pos_ = end;
        push(TokenKind::Identifier, token_begin, end);
        return;
      }
      push(TokenKind::Other, open, open + 1);
      pos_ = open + 1;
      return;
    }
    if (q == '\'' && profile_.single_quote_is_char) {
      auto [end, ce] = scan_quoted(open, '\'', true, false, false);
      if (end > src_.size() || src_[end - 1] != '\'' || end == open + 1) {
        // Not a character literal (e.g. a Scala symbol); treat the quote as punctuation.
        push(TokenKind::Other, open, open + 1);
        pos_ = open + 1;
        return;
      }
      pos_ = end;
      push_string(TokenKind::Char, token_begin, end, open + 1, ce);
      return;
    }
    if (q == '\'' && lang_ == L::Swift) {
      push(TokenKind::Other, open, open + 1);
      pos_ = open + 1;
      return;
    }
    const bool interpolation = q == '"' && (lang_ == L::Ruby || lang_ == L::Kotlin ||
                                           lang_ == L::Scala || lang_ == L::Php);
    auto [end, ce] = scan_quoted(open, q, true, profile_.multiline_strings, interpolation);
    pos_ = end;
    push_string(TokenKind::String, token_begin, end, open + 1, ce);
  }

  void lex_csharp_string(std::size_t token_begin, std::size_t open, bool verbatim) {
    if (!verbatim) {
      lex_quote(token_begin, open);
      return;
    }
    std::size_t p = open + 1;
    while (p < src_.size()) {
      if (src_[p] == '"') {
        if (p + 1 < src_.size() && src_[p + 1] == '"') {
          p += 2;
          continue;
        }
        pos_ = p + 1;
        push_string(TokenKind::String, token_begin, pos_, open + 1, p);
        return;
      }
      ++p;
    }
    pos_ = src_.size();
    push_string(TokenKind::String, token_begin, pos_, open + 1, pos_);
  }

  void lex_cpp_raw_string(std::size_t token_begin, std::size_t open) {
    // R"delim( ... )delim"
    const std::size_t paren = src_.find('(', open + 1);
    if (paren == std::string_view::npos || paren - open > 17) {
      lex_quote(token_begin, open);
      return;
    }
    const std::string closing =
        ")" + std::string(src_.substr(open + 1, paren - open - 1)) + "\"";
    const std::size_t close = src_.find(closing, paren + 1);
    if (close == std::string_view::npos) {
      pos_ = src_.size();
      push_string(TokenKind::String, token_begin, pos_, paren + 1, pos_);
      return;
    }
    pos_ = close + closing.size();
    push_string(TokenKind::String, token_begin, pos_, paren + 1, close);
  }

  bool perl_quote_like(std::string_view word) const {
    return word == "q" || word == "qq" || word == "qw" || word == "qr" || word == "m" ||
           word == "s" || word == "tr" || word == "y";
  }

  std::size_t scan_delimited(std::size_t open) const {
    const char o = src_[open];
    const char c = closing_delimiter(o);
    int depth = 1;
    std::size_t p = open + 1;
    while (p < src_.size()) {
      const char ch = src_[p];
      if (ch == '\\') {
        p += 2;
        continue;
      }
      if (o != c && ch == o) ++depth;
      if (ch == c && --depth == 0) return p;
      ++p;
    }
    return src_.size();
  }

  bool lex_perl_quote(std::size_t start, std::string_view word) {
    std::size_t open = pos_;
    const char d = open < src_.size() ? src_[open] : '\0';
    if (std::string_view("/{([<|!").find(d) == std::string_view::npos || d == '\0') return false;
    if (const Token* prev = last_significant();
        prev != nullptr && (prev->text(src_) == "->" || prev->text(src_) == "{") &&
        (word != "qw" && word != "qq")) {
      // Hash subscript or method call: `$h{s}`, `->y(...)`.
      return false;
    }
    std::size_t close = scan_delimited(open);
    const std::size_t content_begin = open + 1;
    std::size_t content_end = close;
    if (word == "s" || word == "tr" || word == "y") {
      if (close < src_.size() && closing_delimiter(d) != d) {
        std::size_t second = close + 1;
        while (second < src_.size() && std::isspace(static_cast<unsigned char>(src_[second])))
          ++second;
        close = second < src_.size() ? scan_delimited(second) : src_.size();
      } else if (close < src_.size()) {
        close = scan_delimited(close);
      }
    }
    std::size_t end = std::min(close + 1, src_.size());
    const bool is_regex = word == "m" || word == "qr" || word == "s" || word == "tr" ||
                          word == "y";
    if (is_regex) {
      while (end < src_.size() && std::isalpha(static_cast<unsigned char>(src_[end]))) ++end;
      push(TokenKind::Regex, start, end);
    } else {
      push_string(TokenKind::String, start, end, content_begin, content_end);
    }
    pos_ = end;
    return true;
  }

  bool lex_ruby_percent() {
    const std::size_t start = pos_;
    std::size_t p = start + 1;
    char kind = 'Q';
    if (p < src_.size() && std::string_view("wWiIqQrs").find(src_[p]) != std::string_view::npos) {
      kind = src_[p];
      ++p;
    }
    if (p >= src_.size()) return false;
    const char d = src_[p];
    if (std::string_view("([{<|!/").find(d) == std::string_view::npos) return false;
    const std::size_t close = scan_delimited(p);
    std::size_t end = std::min(close + 1, src_.size());
    if (kind == 'r') {
      while (end < src_.size() && std::isalpha(static_cast<unsigned char>(src_[end]))) ++end;
      push(TokenKind::Regex, start, end);
    } else {
      push_string(TokenKind::String, start, end, p + 1, close);
    }
    pos_ = end;
    return true;
  }

  bool lex_regex(std::size_t start) {
    std::size_t p = start + 1;
    bool in_class = false;
    while (p < src_.size()) {
      const char c = src_[p];
      if (c == '\n') return false;
      if (c == '\\') {
        p += 2;
        continue;
      }
      if (c == '[') in_class = true;
      if (c == ']') in_class = false;
      if (c == '/' && !in_class) break;
      ++p;
    }
    if (p >= src_.size()) return false;
    ++p;
    while (p < src_.size() && std::isalpha(static_cast<unsigned char>(src_[p]))) ++p;
    push(TokenKind::Regex, start, p);
    pos_ = p;
    return true;
  }

  bool lex_sigil(std::size_t start) {
    std::size_t p = start + 1;
    if (lang_ == L::Ruby && src_[start] == '@' && p < src_.size() && src_[p] == '@') ++p;
    if (lang_ == L::Perl && src_[start] == '$' && p < src_.size() && src_[p] == '#') ++p;
    if (p < src_.size() && (is_ident_start(static_cast<unsigned char>(src_[p])) ||
                            (lang_ == L::Perl && is_digit(static_cast<unsigned char>(src_[p]))))) {
      while (p < src_.size() && is_ident_char(static_cast<unsigned char>(src_[p]))) ++p;
      // Perl package separators ($Foo::bar).
      while (lang_ == L::Perl && src_.substr(p, 2) == "::" && p + 2 < src_.size() &&
             is_ident_start(static_cast<unsigned char>(src_[p + 2]))) {
        p += 2;
        while (p < src_.size() && is_ident_char(static_cast<unsigned char>(src_[p]))) ++p;
      }
      push(TokenKind::Identifier, start, p);
      pos_ = p;
      return true;
    }
    return false;
  }

  void lex_identifier(std::size_t start) {
    std::size_t p = pos_;
    while (p < src_.size() && (is_ident_char(static_cast<unsigned char>(src_[p])) ||
                               (profile_.dollar_in_identifier && src_[p] == '$'))) {
      ++p;
    }
    if (lang_ == L::Ruby && p < src_.size() && (src_[p] == '?' || src_[p] == '!') &&
        (p + 1 >= src_.size() || (src_[p + 1] != '=' && src_[p + 1] != ':'))) {
      ++p;
    }
    const std::string_view word = src_.substr(start, p - start);
    const char next = p < src_.size() ? src_[p] : '\0';

    // String prefixes.
    if (next == '"' || next == '\'') {
      if (lang_ == L::Python && word.size() <= 2 &&
          word.find_first_not_of("rRbBuUfF") == std::string_view::npos) {
        lex_quote(start, p);
        return;
      }
      if (lang_ == L::Cpp) {
        if (word == "R" || word == "u8R" || word == "uR" || word == "UR" || word == "LR") {
          if (next == '"') {
            lex_cpp_raw_string(start, p);
            return;
          }
        }
        if (word == "u8" || word == "u" || word == "U" || word == "L") {
          lex_quote(start, p);
          return;
        }
      }
      if (lang_ == L::Scala && next == '"') {
        lex_quote(start, p);
        return;
      }
    }
    if (lang_ == L::Perl && perl_quote_like(word)) {
      pos_ = p;
      if (lex_perl_quote(start, word)) return;
    }

    pos_ = p;
    push(is_keyword(lang_, word) ? TokenKind::Keyword : TokenKind::Identifier, start, p);
  }

  void lex_number(std::size_t start) {
    std::size_t p = start;
    const bool hex = src_.substr(start, 2) == "0x" || src_.substr(start, 2) == "0X";
    while (p < src_.size()) {
      const char c = src_[p];
      if (is_ident_char(static_cast<unsigned char>(c))) {
        ++p;
        if (!hex && (c == 'e' || c == 'E') && p < src_.size() &&
            (src_[p] == '+' || src_[p] == '-')) {
          ++p;
        }
        continue;
      }
      if (c == '.' && p + 1 < src_.size() && is_digit(static_cast<unsigned char>(src_[p + 1]))) {
        p += 2;
        continue;
      }
      if (c == '\'' && lang_ == L::Cpp && p + 1 < src_.size() &&
          std::isxdigit(static_cast<unsigned char>(src_[p + 1]))) {
        p += 2;
        continue;
      }
      break;
    }
    pos_ = p;
    push(TokenKind::Number, start, p);
  }

  void lex_operator(std::size_t start) {
    for (std::string_view op : ops_.ops) {
      if (starts_with(op, start)) {
        pos_ = start + op.size();
        push(TokenKind::Operator, start, pos_);
        return;
      }
    }
    const char c = src_[start];
    pos_ = start + 1;
    if (std::string_view("()[]{},;.").find(c) != std::string_view::npos) {
      push(TokenKind::Punct, start, pos_);
    } else if (std::string_view("+-*/%=<>!&|^~?:@#\\").find(c) != std::string_view::npos) {
      push(TokenKind::Operator, start, pos_);
    } else {
      push(TokenKind::Other, start, pos_);
    }
  }

  void mark_docstrings() {
    auto& toks = result_.tokens;
    int depth = 0;
    bool line_has_code = false;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      Token& t = toks[i];
      if (t.kind == TokenKind::Newline) {
        if (depth == 0) line_has_code = false;
        continue;
      }
      if (t.is_comment()) continue;
      const std::string_view text = t.text(src_);
      if (t.kind == TokenKind::String && !line_has_code && depth == 0) {
        const std::size_t quote = text.find_first_of("\"'");
        const bool triple = quote != std::string_view::npos && quote + 3 <= text.size() &&
                            text[quote + 1] == text[quote] && text[quote + 2] == text[quote];
        bool alone = true;
        for (std::size_t j = i + 1; j < toks.size(); ++j) {
          if (toks[j].kind == TokenKind::Newline) break;
          if (toks[j].is_comment()) continue;
          alone = false;
          break;
        }
        if (triple && alone) {
          t.kind = TokenKind::DocString;
          continue;
        }
      }
      line_has_code = true;
      if (t.kind == TokenKind::Punct) {
        if (text == "(" || text == "[" || text == "{") ++depth;
        if ((text == ")" || text == "]" || text == "}") && depth > 0) --depth;
      }
    }
  }

  std::string_view src_;
  Language lang_;
  Profile profile_;
  OpTable ops_;
  std::size_t pos_ = 0;
  LexResult result_;
};

}  // namespace

LexResult lex(std::string_view source, Language lang) { return Lexer(source, lang).run(); }

bool is_keyword(Language lang, std::string_view word) {
  return keyword_set(lang).contains(word);
}

bool is_deletable_keyword(Language lang, std::string_view word) {
  return is_keyword(lang, word) && deletable_words().contains(word);
}

std::size_t identifier_name_offset(std::string_view identifier) {
  std::size_t i = 0;
  while (i < identifier.size() && !is_ident_start(static_cast<unsigned char>(identifier[i])) &&
         identifier[i] != '`') {
    ++i;
  }
  return i;
}

}  // namespace racg
