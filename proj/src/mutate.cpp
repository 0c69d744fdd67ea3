#include "racg/mutate.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "racg/errors.hpp"
#include "racg/hash.hpp"
#include "racg/lexer.hpp"

namespace racg {

std::string_view to_string(MutationType type) {
  switch (type) {
    case MutationType::LogicalKeyword: return "logical";
    case MutationType::ControlFlow: return "controlflow";
    case MutationType::Syntax: return "syntax";
    case MutationType::Lexicon: return "lexicon";
  }
  return "unknown";
}

MutationType mutation_from_string(std::string_view name) {
  std::string lower;
  for (char c : name) {
    if (c != '_' && c != '-') lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (lower == "logical" || lower == "logicalkeyword") return MutationType::LogicalKeyword;
  if (lower == "controlflow") return MutationType::ControlFlow;
  if (lower == "syntax") return MutationType::Syntax;
  if (lower == "lexicon" || lower == "lexical") return MutationType::Lexicon;
  throw std::invalid_argument("unknown mutation type: " + std::string(name));
}

std::string_view to_string(SiteKind kind) {
  switch (kind) {
    case SiteKind::LogicOperator: return "logic_operator";
    case SiteKind::BranchClause: return "branch_clause";
    case SiteKind::IdentifierChar: return "identifier_char";
    case SiteKind::Identifier: return "identifier";
    case SiteKind::StringConstant: return "string_constant";
    case SiteKind::Keyword: return "keyword";
  }
  return "unknown";
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t SitePrng::next() {
  return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
}

std::uint64_t SitePrng::uniform(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

std::uint64_t document_seed(std::uint64_t seed, std::string_view doc_id) {
  return splitmix64(seed ^ fnv1a64(doc_id));
}

std::optional<std::string_view> invert_logic_token(std::string_view token) {
  static constexpr std::pair<std::string_view, std::string_view> kTable[] = {
      {"and", "or"}, {"or", "and"},   {"&&", "||"},   {"||", "&&"},   {"==", "!="},
      {"!=", "=="},  {"===", "!=="},  {"!==", "==="}, {"<", ">="},    {">=", "<"},
      {">", "<="},   {"<=", ">"},     {"!", ""},      {"not", ""},
  };
  for (const auto& [from, to] : kTable) {
    if (token == from) return to;
  }
  return std::nullopt;
}

namespace {

using L = Language;

bool has_word_logic(Language lang, std::string_view word) {
  switch (lang) {
    case L::Python:
    case L::Cpp:
    case L::Ruby:
    case L::Perl:
      return word == "and" || word == "or" || word == "not";
    case L::Php:
      return word == "and" || word == "or";
    default:
      return false;
  }
}

bool has_angle_generics(Language lang) {
  switch (lang) {
    case L::Cpp:
    case L::CSharp:
    case L::Java:
    case L::Kotlin:
    case L::Swift:
    case L::TypeScript:
      return true;
    default:
      return false;
  }
}

/// Token view shared by the site finders.
struct Tokens {
  std::string_view src;
  Language lang;
  std::vector<Token> all;
  std::vector<std::size_t> sig;  // indices into `all` of significant tokens

  Tokens(std::string_view code, Language language) : src(code), lang(language) {
    all = lex(code, language).tokens;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all[i].is_significant()) sig.push_back(i);
    }
  }

  std::string_view text(std::size_t sig_pos) const { return all[sig[sig_pos]].text(src); }
  const Token& tok(std::size_t sig_pos) const { return all[sig[sig_pos]]; }
  std::size_t count() const { return sig.size(); }

  bool is(std::size_t sig_pos, std::string_view s) const {
    return sig_pos < sig.size() && text(sig_pos) == s;
  }

  /// Position of the bracket closing the one at `open_pos`, or npos.
  std::size_t match(std::size_t open_pos) const {
    const std::string_view open = text(open_pos);
    const std::string_view close = open == "(" ? ")" : open == "[" ? "]" : "}";
    int depth = 0;
    for (std::size_t p = open_pos; p < sig.size(); ++p) {
      const Token& t = tok(p);
      if (t.kind != TokenKind::Punct) continue;
      const std::string_view s = text(p);
      if (s == open) ++depth;
      if (s == close && --depth == 0) return p;
    }
    return std::string_view::npos;
  }

  bool first_on_line(std::size_t sig_pos) const {
    const std::size_t idx = sig[sig_pos];
    for (std::size_t i = idx; i-- > 0;) {
      if (all[i].kind == TokenKind::Newline) return true;
      if (all[i].is_significant()) return false;
    }
    return true;
  }
};

constexpr std::size_t npos = std::string_view::npos;

/// Marks `<`/`>` tokens that open or close generic argument lists.
std::vector<bool> generic_angles(const Tokens& t) {
  std::vector<bool> generic(t.count(), false);
  if (!has_angle_generics(t.lang)) return generic;
  for (std::size_t i = 0; i < t.count(); ++i) {
    if (generic[i] || t.text(i) != "<") continue;
    if (i == 0) continue;
    const Token& prev = t.tok(i - 1);
    const std::string_view ptext = t.text(i - 1);
    const bool after_name = prev.kind == TokenKind::Identifier ||
                            (prev.kind == TokenKind::Keyword &&
                             (ptext == "template" || ptext == "Array" || ptext == "function")) ||
                            ptext == "." || ptext == "::";
    if (!after_name) continue;
    int depth = 1;
    std::size_t j = i + 1;
    bool closed = false;
    for (; j < t.count(); ++j) {
      const Token& tk = t.tok(j);
      const std::string_view s = t.text(j);
      if (s == "<") {
        ++depth;
        continue;
      }
      if (s == ">" || s == ">>" || s == ">>>") {
        depth -= static_cast<int>(s.size());
        if (depth <= 0) {
          closed = true;
          break;
        }
        continue;
      }
      const bool allowed =
          tk.kind == TokenKind::Identifier || tk.kind == TokenKind::Keyword ||
          (tk.kind == TokenKind::Number && t.lang == L::Cpp) || s == "," || s == "." ||
          s == "[" || s == "]" || s == "?" || s == "::" || s == "*" || s == "&" || s == ":" ||
          s == "(" || s == ")";
      if (!allowed) break;
      if (s == "(" || s == ")") {
        // Function types inside generics are rare; parentheses usually mean a call.
        if (t.lang != L::Cpp) break;
      }
    }
    if (!closed) continue;
    for (std::size_t k = i; k <= j; ++k) {
      const std::string_view s = t.text(k);
      if (s == "<" || s == ">" || s == ">>" || s == ">>>") generic[k] = true;
    }
  }
  return generic;
}

std::vector<MutationSite> logic_sites(const Tokens& t) {
  std::vector<MutationSite> sites;
  const auto generic = generic_angles(t);
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    const std::string_view s = t.text(i);
    bool candidate = false;
    if (tk.kind == TokenKind::Operator) {
      if (s == "&&" || s == "||" || s == "==" || s == "!=" || s == "<" || s == ">" ||
          s == "<=" || s == ">=") {
        candidate = !generic[i];
      } else if (s == "===" || s == "!==") {
        candidate = true;
      } else if (s == "!") {
        // Prefix negation only; a postfix `!` is a non-null assertion.
        if (i == 0) {
          candidate = true;
        } else {
          const Token& prev = t.tok(i - 1);
          const std::string_view ptext = t.text(i - 1);
          const bool operand_before =
              prev.kind == TokenKind::Identifier || prev.kind == TokenKind::Number ||
              prev.kind == TokenKind::String || prev.kind == TokenKind::Char ||
              ptext == ")" || ptext == "]";
          candidate = !operand_before;
        }
      }
      if (candidate && i > 0 && t.text(i - 1) == "operator") candidate = false;
    } else if (tk.kind == TokenKind::Keyword && has_word_logic(t.lang, s)) {
      candidate = true;
    }
    if (candidate) {
      sites.push_back({tk.begin, tk.end, SiteKind::LogicOperator, std::string(s)});
    }
  }
  return sites;
}

// --- ControlFlow -----------------------------------------------------------

enum class ClauseKind { ElseIf, Else, Continue };

struct Clause {
  std::size_t start;
  std::size_t end;
  ClauseKind kind;
  std::string replacement;
};

bool newline_terminated(Language lang) {
  return lang == L::Kotlin || lang == L::Scala || lang == L::Swift || lang == L::Go ||
         lang == L::JavaScript || lang == L::TypeScript;
}

/// Byte end of the statement starting at significant position `p`.
std::size_t statement_end(const Tokens& t, std::size_t p) {
  if (p >= t.count()) return t.src.size();
  if (t.is(p, "{")) {
    const std::size_t m = t.match(p);
    return m == npos ? t.src.size() : t.tok(m).end;
  }
  int depth = 0;
  const std::size_t first = t.sig[p];
  std::size_t last_end = t.all[first].end;
  for (std::size_t i = first; i < t.all.size(); ++i) {
    const Token& tk = t.all[i];
    if (tk.kind == TokenKind::Newline) {
      if (depth == 0 && newline_terminated(t.lang) && i > first) return last_end;
      continue;
    }
    if (tk.is_comment()) continue;
    const std::string_view s = tk.text(t.src);
    if (tk.kind == TokenKind::Punct) {
      if (s == "(" || s == "[" || s == "{") ++depth;
      if (s == ")" || s == "]" || s == "}") {
        if (depth == 0) return last_end;
        --depth;
      }
      if (s == ";" && depth == 0) return tk.end;
    }
    last_end = tk.end;
  }
  return last_end;
}

/// Byte end of an `if` statement whose keyword is at significant position `p`.
std::size_t if_statement_end(const Tokens& t, std::size_t p) {
  std::size_t q = p + 1;
  if (t.lang == L::Go || t.lang == L::Swift || !t.is(q, "(")) {
    int depth = 0;
    for (; q < t.count(); ++q) {
      const std::string_view s = t.text(q);
      if (s == "(" || s == "[") ++depth;
      if (s == ")" || s == "]") --depth;
      if (s == "{" && depth == 0) break;
      if (s == ";" && depth == 0) return t.tok(q).end;
    }
    if (q >= t.count()) return t.src.size();
    const std::size_t m = t.match(q);
    return m == npos ? t.src.size() : t.tok(m).end;
  }
  const std::size_t close = t.match(q);
  if (close == npos) return t.src.size();
  return statement_end(t, close + 1);
}

std::size_t line_start_of(std::string_view src, std::size_t pos) {
  while (pos > 0 && src[pos - 1] != '\n') --pos;
  return pos;
}

std::size_t indent_width(std::string_view src, std::size_t line_start) {
  std::size_t w = 0;
  for (std::size_t i = line_start; i < src.size(); ++i) {
    if (src[i] == ' ') {
      ++w;
    } else if (src[i] == '\t') {
      w += 8 - (w % 8);
    } else {
      break;
    }
  }
  return w;
}

/// End of an indentation-delimited clause whose header starts on the line at
/// `header_line`; includes the final newline of the last body line.
std::size_t python_clause_end(const Tokens& t, std::size_t header_line) {
  const std::string_view src = t.src;
  const std::size_t header_indent = indent_width(src, header_line);
  auto inside_token = [&](std::size_t offset) {
    for (const auto& tk : t.all) {
      if (tk.begin < offset && offset < tk.end) return true;
      if (tk.begin >= offset) break;
    }
    return false;
  };
  // The header's logical line may continue inside brackets.
  int depth = 0;
  std::size_t cursor = header_line;
  for (const auto& tk : t.all) {
    if (tk.end <= header_line) continue;
    if (tk.kind == TokenKind::Newline && depth == 0) {
      cursor = tk.end;
      break;
    }
    if (tk.kind == TokenKind::Punct) {
      const std::string_view s = tk.text(src);
      if (s == "(" || s == "[" || s == "{") ++depth;
      if (s == ")" || s == "]" || s == "}") --depth;
    }
    cursor = tk.end;
  }
  std::size_t end = cursor;
  std::size_t line = cursor;
  while (line < src.size()) {
    std::size_t nl = src.find('\n', line);
    const std::size_t line_end = nl == std::string_view::npos ? src.size() : nl + 1;
    std::size_t first = line;
    while (first < src.size() && (src[first] == ' ' || src[first] == '\t' || src[first] == '\r'))
      ++first;
    const bool blank = first >= src.size() || src[first] == '\n' || src[first] == '#';
    if (!blank && !inside_token(line) && indent_width(src, line) <= header_indent) break;
    if (!blank || inside_token(line)) end = line_end;
    line = line_end;
  }
  return end;
}

std::vector<Clause> python_clauses(const Tokens& t) {
  std::vector<Clause> out;
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    if (tk.kind != TokenKind::Keyword) continue;
    const std::string_view s = t.text(i);
    if ((s == "elif" || s == "else") && t.first_on_line(i)) {
      if (s == "else" && !t.is(i + 1, ":")) continue;
      const std::size_t start = line_start_of(t.src, tk.begin);
      out.push_back({start, python_clause_end(t, start),
                     s == "elif" ? ClauseKind::ElseIf : ClauseKind::Else, ""});
    } else if (s == "continue") {
      out.push_back({tk.begin, tk.end, ClauseKind::Continue, "pass"});
    }
  }
  return out;
}

std::vector<Clause> ruby_clauses(const Tokens& t) {
  std::vector<Clause> out;
  auto opens_block = [&](std::size_t i) {
    const std::string_view s = t.text(i);
    if (t.tok(i).kind != TokenKind::Keyword) return false;
    if (s == "def" || s == "class" || s == "module" || s == "begin" || s == "case") return true;
    if (s == "do") {
      // `while x do` shares its `end` with the loop keyword.
      for (std::size_t j = i; j-- > 0;) {
        if (t.first_on_line(j + 1) && j + 1 <= i) {
          const std::string_view head = t.text(j + 1);
          return head != "while" && head != "until" && head != "for";
        }
      }
      return true;
    }
    if (s == "if" || s == "unless" || s == "while" || s == "until" || s == "for") {
      return t.first_on_line(i) || t.tok(i - 1).kind == TokenKind::Operator;
    }
    return false;
  };
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    if (tk.kind != TokenKind::Keyword) continue;
    const std::string_view s = t.text(i);
    if (s == "next") {
      out.push_back({tk.begin, tk.end, ClauseKind::Continue, "nil"});
      continue;
    }
    if ((s != "elsif" && s != "else") || !t.first_on_line(i)) continue;
    int depth = 0;
    std::size_t term = npos;
    for (std::size_t j = i + 1; j < t.count(); ++j) {
      const std::string_view w = t.text(j);
      if (opens_block(j)) {
        ++depth;
      } else if (t.tok(j).kind == TokenKind::Keyword && w == "end") {
        if (depth == 0) {
          term = j;
          break;
        }
        --depth;
      } else if (depth == 0 && s == "elsif" && t.first_on_line(j) &&
                 (w == "elsif" || w == "else")) {
        term = j;
        break;
      }
    }
    const std::size_t start = line_start_of(t.src, tk.begin);
    const std::size_t end =
        term == npos ? t.src.size() : line_start_of(t.src, t.tok(term).begin);
    if (end > start) {
      out.push_back({start, end, s == "elsif" ? ClauseKind::ElseIf : ClauseKind::Else, ""});
    }
  }
  return out;
}

/// Pulls `pos` back over the spaces and tabs before it.
std::size_t eat_hspace_before(std::string_view src, std::size_t pos) {
  while (pos > 0 && (src[pos - 1] == ' ' || src[pos - 1] == '\t')) --pos;
  return pos;
}

std::vector<Clause> brace_clauses(const Tokens& t) {
  std::vector<Clause> out;
  const bool perl = t.lang == L::Perl;
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    if (tk.kind != TokenKind::Keyword) continue;
    const std::string_view s = t.text(i);
    if (s == "else") {
      if (t.is(i + 1, "if")) {
        out.push_back({eat_hspace_before(t.src, tk.begin), if_statement_end(t, i + 1), ClauseKind::ElseIf, ""});
        continue;
      }
      if (t.is(i + 1, "->") || t.is(i + 1, ":") || t.is(i + 1, "=>")) continue;
      if (i + 1 >= t.count()) continue;
      out.push_back({eat_hspace_before(t.src, tk.begin), statement_end(t, i + 1), ClauseKind::Else, ""});
    } else if (s == "elseif" || s == "elsif") {
      out.push_back({eat_hspace_before(t.src, tk.begin), if_statement_end(t, i), ClauseKind::ElseIf, ""});
    } else if ((!perl && s == "continue") || (perl && s == "next")) {
      std::size_t end = tk.end;
      // Include a loop label: `continue outer;`, `next LINE`.
      if (i + 1 < t.count() && t.tok(i + 1).kind == TokenKind::Identifier &&
          !t.first_on_line(i + 1)) {
        end = t.tok(i + 1).end;
      }
      if (t.lang == L::Kotlin && t.src.substr(end, 1) == "@") continue;
      out.push_back({tk.begin, end, ClauseKind::Continue, perl ? "1" : ""});
    }
  }
  return out;
}

std::vector<Clause> find_clauses(const Tokens& t) {
  switch (t.lang) {
    case L::Python: return python_clauses(t);
    case L::Ruby: return ruby_clauses(t);
    default: return brace_clauses(t);
  }
}

MutationSite clause_site(std::string_view src, const Clause& c) {
  return {c.start, c.end, SiteKind::BranchClause, std::string(src.substr(c.start, c.end - c.start))};
}

// --- Syntax / Lexicon ------------------------------------------------------

std::vector<MutationSite> identifier_char_sites(const Tokens& t) {
  std::vector<MutationSite> sites;
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    if (tk.kind != TokenKind::Identifier) continue;
    for (std::size_t p = tk.begin; p < tk.end; ++p) {
      const char c = t.src[p];
      if (c >= 'a' && c <= 'z') sites.push_back({p, p + 1, SiteKind::IdentifierChar, std::string(1, c)});
    }
  }
  return sites;
}

struct LexiconSites {
  std::vector<MutationSite> identifiers;
  std::vector<MutationSite> strings;
  std::vector<MutationSite> keywords;
};

LexiconSites lexicon_sites(const Tokens& t) {
  LexiconSites out;
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    const std::string_view s = t.text(i);
    if (tk.kind == TokenKind::Identifier) {
      const std::size_t off = identifier_name_offset(s);
      if (off < s.size() && s[off] != '`') {
        out.identifiers.push_back({tk.begin, tk.end, SiteKind::Identifier, std::string(s)});
      }
    } else if (tk.kind == TokenKind::String && tk.content_end > tk.content_begin) {
      out.strings.push_back({tk.content_begin, tk.content_end, SiteKind::StringConstant,
                             std::string(t.src.substr(tk.content_begin,
                                                      tk.content_end - tk.content_begin))});
    } else if (tk.kind == TokenKind::Keyword && is_deletable_keyword(t.lang, s)) {
      out.keywords.push_back({tk.begin, tk.end, SiteKind::Keyword, std::string(s)});
    }
  }
  return out;
}

std::string splice(std::string_view src, std::size_t start, std::size_t end,
                   std::string_view replacement) {
  std::string out;
  out.reserve(src.size() + replacement.size());
  out.append(src.substr(0, start));
  out.append(replacement);
  out.append(src.substr(end));
  return out;
}

constexpr std::string_view kAlnum = "abcdefghijklmnopqrstuvwxyz0123456789";

std::string fresh_identifier(SitePrng& prng, const Tokens& t) {
  std::set<std::string_view> taken;
  for (std::size_t i = 0; i < t.count(); ++i) {
    const Token& tk = t.tok(i);
    if (tk.kind == TokenKind::Identifier || tk.kind == TokenKind::Keyword) {
      const std::string_view s = t.text(i);
      taken.insert(s.substr(identifier_name_offset(s)));
    }
  }
  while (true) {
    std::string name;
    name += kAlnum[prng.uniform(26)];
    for (int i = 0; i < 7; ++i) name += kAlnum[prng.uniform(kAlnum.size())];
    if (!taken.contains(name) && !is_keyword(t.lang, name)) return name;
  }
}

}  // namespace

std::vector<MutationSite> find_sites(std::string_view code, Language language,
                                     MutationType mutation) {
  const Tokens t(code, language);
  switch (mutation) {
    case MutationType::LogicalKeyword:
      return logic_sites(t);
    case MutationType::ControlFlow: {
      std::vector<MutationSite> sites;
      for (const auto& c : find_clauses(t)) sites.push_back(clause_site(code, c));
      return sites;
    }
    case MutationType::Syntax:
      return identifier_char_sites(t);
    case MutationType::Lexicon: {
      LexiconSites ls = lexicon_sites(t);
      std::vector<MutationSite> sites = std::move(ls.identifiers);
      sites.insert(sites.end(), ls.strings.begin(), ls.strings.end());
      sites.insert(sites.end(), ls.keywords.begin(), ls.keywords.end());
      std::sort(sites.begin(), sites.end(),
                [](const MutationSite& a, const MutationSite& b) { return a.start < b.start; });
      return sites;
    }
  }
  return {};
}

MutationRecord apply_mutation(const CodeDocument& doc, MutationType mutation, std::uint64_t seed) {
  MutationRecord rec;
  rec.doc_id = doc.doc_id;
  rec.mutation = mutation;
  rec.seed = seed;
  rec.original = doc.code;
  rec.mutated = doc.code;

  const std::string_view code = doc.code;
  const Tokens t(code, doc.language);
  SitePrng prng(document_seed(seed, doc.doc_id));

  auto commit = [&](MutationSite site, std::string replacement) {
    rec.mutated = splice(code, site.start, site.end, replacement);
    rec.replacement = std::move(replacement);
    rec.site = std::move(site);
    rec.applied = rec.mutated != rec.original;
    if (!rec.applied) {
      rec.site.reset();
      rec.replacement.clear();
      rec.mutated = rec.original;
    }
  };

  switch (mutation) {
    case MutationType::LogicalKeyword: {
      const auto sites = logic_sites(t);
      if (sites.empty()) break;
      const MutationSite& site = sites[prng.uniform(sites.size())];
      commit(site, std::string(*invert_logic_token(site.token_text)));
      break;
    }
    case MutationType::ControlFlow: {
      const auto clauses = find_clauses(t);
      std::vector<const Clause*> candidates;
      for (const auto& c : clauses) {
        if (c.kind == ClauseKind::ElseIf) candidates.push_back(&c);
      }
      if (candidates.empty()) {
        for (const auto& c : clauses) candidates.push_back(&c);
      }
      if (candidates.empty()) break;
      const Clause& chosen = *candidates[prng.uniform(candidates.size())];
      commit(clause_site(code, chosen), chosen.replacement);
      break;
    }
    case MutationType::Syntax: {
      const auto sites = identifier_char_sites(t);
      if (sites.empty()) break;
      const MutationSite& site = sites[prng.uniform(sites.size())];
      commit(site, std::string(1, static_cast<char>(site.token_text[0] - 'a' + 'A')));
      break;
    }
    case MutationType::Lexicon: {
      const LexiconSites ls = lexicon_sites(t);
      std::vector<int> groups;
      if (!ls.identifiers.empty()) groups.push_back(0);
      if (!ls.strings.empty()) groups.push_back(1);
      if (!ls.keywords.empty()) groups.push_back(2);
      if (groups.empty()) break;
      const int group = groups[prng.uniform(groups.size())];
      if (group == 0) {
        const MutationSite& site = ls.identifiers[prng.uniform(ls.identifiers.size())];
        const std::size_t off = identifier_name_offset(site.token_text);
        const std::string renamed = site.token_text.substr(0, off) + fresh_identifier(prng, t);
        std::string out;
        std::size_t cursor = 0;
        for (const auto& occ : ls.identifiers) {
          if (occ.token_text != site.token_text) continue;
          out.append(code.substr(cursor, occ.start - cursor));
          out.append(renamed);
          cursor = occ.end;
        }
        out.append(code.substr(cursor));
        rec.mutated = std::move(out);
        rec.replacement = renamed;
        rec.site = site;
        rec.applied = true;
      } else if (group == 1) {
        const MutationSite& site = ls.strings[prng.uniform(ls.strings.size())];
        std::string replacement;
        do {
          replacement.clear();
          for (std::size_t i = 0; i < site.token_text.size(); ++i) {
            replacement += kAlnum[prng.uniform(kAlnum.size())];
          }
        } while (replacement == site.token_text);
        commit(site, std::move(replacement));
      } else {
        const MutationSite& site = ls.keywords[prng.uniform(ls.keywords.size())];
        commit(site, "");
      }
      break;
    }
  }
  return rec;
}

PerturbedDocuments perturb_retrieved(std::span<const CodeDocument> docs, MutationType mutation,
                                     std::uint64_t seed) {
  PerturbedDocuments out;
  out.documents.reserve(docs.size());
  out.records.reserve(docs.size());
  for (const auto& doc : docs) {
    MutationRecord rec = apply_mutation(doc, mutation, seed);
    CodeDocument mutated = doc;
    mutated.code = rec.mutated;
    out.documents.push_back(std::move(mutated));
    out.records.push_back(std::move(rec));
  }
  return out;
}

double applicability_rate(const Corpus& corpus, std::span<const Language> languages,
                          MutationType mutation) {
  std::size_t total = 0;
  std::size_t applicable = 0;
  for (const auto& doc : corpus.documents()) {
    if (std::find(languages.begin(), languages.end(), doc.language) == languages.end()) continue;
    ++total;
    if (!find_sites(doc.code, doc.language, mutation).empty()) ++applicable;
  }
  if (total == 0) throw EmptySelection("no documents in the selected languages");
  return static_cast<double>(applicable) / static_cast<double>(total);
}

}  // namespace racg
