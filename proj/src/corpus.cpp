#include "racg/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "racg/errors.hpp"
#include "racg/execute.hpp"
#include "racg/hash.hpp"
#include "racg/lexer.hpp"

namespace racg {

using nlohmann::json;

std::string_view to_string(CorpusVariant variant) {
  return variant == CorpusVariant::Doc ? "doc" : "docnonl";
}

CorpusVariant corpus_variant_from_string(std::string_view name) {
  if (name == "doc" || name == "Doc") return CorpusVariant::Doc;
  if (name == "docnonl" || name == "DocNoNL" || name == "doc-no-nl") return CorpusVariant::DocNoNL;
  throw std::invalid_argument("unknown corpus variant: " + std::string(name));
}

Corpus::Corpus(std::vector<CodeDocument> documents, std::vector<GoldenEntry> golden,
               CorpusVariant variant)
    : documents_(std::move(documents)), golden_(std::move(golden)), variant_(variant) {
  by_id_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    by_id_.emplace(documents_[i].doc_id, i);
  }
}

const CodeDocument* Corpus::find(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

std::optional<std::string> Corpus::golden_doc(std::string_view family_id,
                                              Language language) const {
  for (const auto& g : golden_) {
    if (g.family_id == family_id && g.language == language) return g.doc_id;
  }
  return std::nullopt;
}

std::vector<std::string> Corpus::golden_docs(std::string_view family_id) const {
  std::vector<std::string> ids;
  for (const auto& g : golden_) {
    if (g.family_id == family_id) ids.push_back(g.doc_id);
  }
  return ids;
}

std::vector<const CodeDocument*> Corpus::in_language(Language language) const {
  std::vector<const CodeDocument*> out;
  for (const auto& d : documents_) {
    if (d.language == language) out.push_back(&d);
  }
  return out;
}

std::string Corpus::document_text(const CodeDocument& doc) const {
  if (variant_ == CorpusVariant::Doc && doc.nl_comment && !doc.nl_comment->empty()) {
    return *doc.nl_comment + "\n" + doc.code;
  }
  return doc.code;
}

std::uint64_t Corpus::content_hash() const {
  ContentHasher h;
  h.add(to_string(variant_));
  for (const auto& d : documents_) {
    h.add(d.doc_id).add(to_string(d.language)).add(d.code).add(d.family_id);
    h.add(d.nl_comment ? "1" + *d.nl_comment : std::string("0"));
  }
  for (const auto& g : golden_) {
    h.add(g.family_id).add(to_string(g.language)).add(g.doc_id);
  }
  return h.digest();
}

namespace {

std::string require_string(const json& obj, const char* field, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(line_no, std::string("missing field '") + field + "'");
  if (!it->is_string()) throw ParseError(line_no, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

Language require_language(const json& obj, std::size_t line_no) {
  const std::string name = require_string(obj, "language", line_no);
  auto lang = parse_language(name);
  if (!lang) throw ParseError(line_no, "unknown language '" + name + "'");
  return *lang;
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    fn(obj, line_no);
  }
}

json to_json(const CodeDocument& doc) {
  json obj = {{"doc_id", doc.doc_id},
              {"language", to_string(doc.language)},
              {"code", doc.code}};
  if (doc.nl_comment) obj["nl_comment"] = *doc.nl_comment;
  obj["family_id"] = doc.family_id;
  return obj;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::vector<CodeDocument> docs;
  std::set<std::string> seen;
  for_each_json_line(path, [&](const json& obj, std::size_t line_no) {
    CodeDocument doc;
    doc.doc_id = require_string(obj, "doc_id", line_no);
    doc.language = require_language(obj, line_no);
    doc.code = require_string(obj, "code", line_no);
    doc.family_id = require_string(obj, "family_id", line_no);
    if (auto it = obj.find("nl_comment"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(line_no, "field 'nl_comment' must be a string");
      doc.nl_comment = it->get<std::string>();
    }
    if (!seen.insert(doc.doc_id).second) throw DuplicateId(doc.doc_id);
    docs.push_back(std::move(doc));
  });

  std::vector<GoldenEntry> golden;
  std::filesystem::path golden_path =
      options.golden_path.value_or(path.parent_path() / "golden.jsonl");
  if (options.golden_path || std::filesystem::exists(golden_path)) {
    for_each_json_line(golden_path, [&](const json& obj, std::size_t line_no) {
      GoldenEntry g;
      g.family_id = require_string(obj, "family_id", line_no);
      g.language = require_language(obj, line_no);
      g.doc_id = require_string(obj, "doc_id", line_no);
      golden.push_back(std::move(g));
    });
  }
  return Corpus(std::move(docs), std::move(golden), options.variant);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& golden_path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& doc : corpus.documents()) out << to_json(doc).dump() << '\n';
  }
  std::ofstream out(golden_path.value_or(path.parent_path() / "golden.jsonl"), std::ios::binary);
  if (!out) throw Error("cannot write golden annotations");
  for (const auto& g : corpus.golden()) {
    out << json{{"family_id", g.family_id}, {"language", to_string(g.language)}, {"doc_id", g.doc_id}}
               .dump()
        << '\n';
  }
}

std::vector<CodeInstance> load_instances(const std::filesystem::path& path) {
  std::vector<CodeInstance> out;
  for_each_json_line(path, [&](const json& obj, std::size_t line_no) {
    CodeInstance inst;
    inst.instance_id = require_string(obj, "instance_id", line_no);
    inst.language = require_language(obj, line_no);
    inst.nl_prompt = require_string(obj, "nl_prompt", line_no);
    inst.reference_solution = require_string(obj, "reference_solution", line_no);
    inst.test_cases = require_string(obj, "test_cases", line_no);
    inst.entry_point = require_string(obj, "entry_point", line_no);
    inst.family_id = require_string(obj, "family_id", line_no);
    out.push_back(std::move(inst));
  });
  return out;
}

void save_instances(std::span<const CodeInstance> instances, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& inst : instances) {
    out << json{{"instance_id", inst.instance_id},
                {"language", to_string(inst.language)},
                {"nl_prompt", inst.nl_prompt},
                {"reference_solution", inst.reference_solution},
                {"test_cases", inst.test_cases},
                {"entry_point", inst.entry_point},
                {"family_id", inst.family_id}}
               .dump()
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Comment stripping

namespace {

bool word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

bool hspace(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

StripResult strip_comment_text(std::string_view code, Language language) {
  const LexResult lexed = lex(code, language);
  const auto& toks = lexed.tokens;

  // A comment is trailing when only whitespace and further comments follow
  // it on its line.
  std::vector<bool> trailing(toks.size(), false);
  bool tail = true;
  for (std::size_t i = toks.size(); i-- > 0;) {
    if (toks[i].kind == TokenKind::Newline) {
      tail = true;
    } else if (toks[i].is_comment()) {
      trailing[i] = tail;
    } else {
      tail = false;
    }
  }

  std::string out;
  out.reserve(code.size());
  std::vector<std::size_t> removal_points;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const Token& t = toks[i];
    if (!t.is_comment()) continue;
    std::size_t begin = t.begin;
    std::size_t end = t.end;
    if (trailing[i]) {
      while (begin > cursor && hspace(code[begin - 1])) --begin;
      while (end < code.size() && hspace(code[end])) ++end;
    }
    out.append(code.substr(cursor, begin - cursor));
    if (!trailing[i] && !out.empty() && word_byte(out.back()) && end < code.size() &&
        word_byte(code[end])) {
      out += ' ';
    }
    removal_points.push_back(out.size());
    cursor = end;
  }
  out.append(code.substr(cursor));

  if (removal_points.empty()) return {std::string(code), lexed.unterminated_comment};

  // Drop lines that held only comments.
  std::string result;
  result.reserve(out.size());
  std::size_t line_start = 0;
  std::size_t r = 0;
  while (line_start <= out.size()) {
    std::size_t nl = out.find('\n', line_start);
    const bool last = nl == std::string::npos;
    const std::size_t line_end = last ? out.size() : nl;
    bool touched = false;
    while (r < removal_points.size() && removal_points[r] <= line_end) {
      if (removal_points[r] >= line_start) touched = true;
      ++r;
    }
    bool blank = true;
    for (std::size_t i = line_start; i < line_end; ++i) {
      if (!hspace(out[i])) {
        blank = false;
        break;
      }
    }
    if (!(touched && blank)) {
      result.append(out, line_start, line_end - line_start);
      if (!last) result += '\n';
    }
    if (last) break;
    line_start = nl + 1;
  }
  return {std::move(result), lexed.unterminated_comment};
}

CodeDocument strip_comments(const CodeDocument& doc, std::vector<std::string>* warnings) {
  CodeDocument out = doc;
  StripResult stripped = strip_comment_text(doc.code, doc.language);
  if (stripped.unterminated_comment && warnings != nullptr) {
    warnings->push_back(doc.doc_id + ": unterminated block comment stripped to end of input");
  }
  out.code = std::move(stripped.code);
  out.nl_comment.reset();
  return out;
}

Corpus make_variant(const Corpus& corpus, CorpusVariant variant) {
  if (variant == CorpusVariant::Doc) {
    if (corpus.variant() != CorpusVariant::Doc) {
      throw std::invalid_argument("cannot restore comments of a DocNoNL corpus");
    }
    return corpus;
  }
  std::vector<CodeDocument> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents()) docs.push_back(strip_comments(d));
  return Corpus(std::move(docs), corpus.golden(), CorpusVariant::DocNoNL);
}

// ---------------------------------------------------------------------------
// Validation

std::string_view to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::EmptyCode: return "empty_code";
    case Violation::Kind::DuplicateDocId: return "duplicate_doc_id";
    case Violation::Kind::CommentInPureCode: return "comment_in_pure_code";
    case Violation::Kind::GoldenMissingDoc: return "golden_missing_doc";
    case Violation::Kind::GoldenLanguageMismatch: return "golden_language_mismatch";
    case Violation::Kind::GoldenFamilyMismatch: return "golden_family_mismatch";
    case Violation::Kind::DuplicateGolden: return "duplicate_golden";
    case Violation::Kind::EmptySolution: return "empty_solution";
    case Violation::Kind::EmptyTests: return "empty_tests";
    case Violation::Kind::DuplicateInstance: return "duplicate_instance";
    case Violation::Kind::EntryPointMissing: return "entry_point_missing";
  }
  return "unknown";
}

ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport report;
  auto add = [&](Violation::Kind kind, std::string doc_id, std::string family, std::string msg) {
    report.violations.push_back({kind, std::move(doc_id), std::move(family), std::move(msg)});
  };

  std::set<std::string> ids;
  for (const auto& d : corpus.documents()) {
    if (!ids.insert(d.doc_id).second) {
      add(Violation::Kind::DuplicateDocId, d.doc_id, d.family_id, "doc_id appears more than once");
    }
    if (d.code.empty()) add(Violation::Kind::EmptyCode, d.doc_id, d.family_id, "code is empty");
    if (corpus.variant() == CorpusVariant::DocNoNL) {
      if (d.nl_comment) {
        add(Violation::Kind::CommentInPureCode, d.doc_id, d.family_id,
            "nl_comment present in a DocNoNL corpus");
      }
      const auto lexed = lex(d.code, d.language);
      if (std::any_of(lexed.tokens.begin(), lexed.tokens.end(),
                      [](const Token& t) { return t.is_comment(); })) {
        add(Violation::Kind::CommentInPureCode, d.doc_id, d.family_id,
            "code contains comments in a DocNoNL corpus");
      }
    }
  }

  std::set<std::pair<std::string, Language>> golden_keys;
  for (const auto& g : corpus.golden()) {
    if (!golden_keys.insert({g.family_id, g.language}).second) {
      add(Violation::Kind::DuplicateGolden, g.doc_id, g.family_id,
          "second golden document for language " + std::string(to_string(g.language)));
    }
    const CodeDocument* doc = corpus.find(g.doc_id);
    if (doc == nullptr) {
      add(Violation::Kind::GoldenMissingDoc, g.doc_id, g.family_id, "golden doc_id not in corpus");
      continue;
    }
    if (doc->language != g.language) {
      add(Violation::Kind::GoldenLanguageMismatch, g.doc_id, g.family_id,
          "golden annotated as " + std::string(to_string(g.language)) + " but document is " +
              std::string(to_string(doc->language)));
    }
    if (doc->family_id != g.family_id) {
      add(Violation::Kind::GoldenFamilyMismatch, g.doc_id, g.family_id,
          "document belongs to family " + doc->family_id);
    }
  }
  return report;
}

ValidationReport validate_instances(std::span<const CodeInstance> instances) {
  ValidationReport report;
  std::set<std::pair<std::string, Language>> keys;
  for (const auto& inst : instances) {
    auto add = [&](Violation::Kind kind, std::string msg) {
      report.violations.push_back({kind, inst.instance_id, inst.family_id, std::move(msg)});
    };
    if (inst.reference_solution.empty()) add(Violation::Kind::EmptySolution, "empty reference solution");
    if (inst.test_cases.empty()) add(Violation::Kind::EmptyTests, "empty test_cases");
    if (!keys.insert({inst.family_id, inst.language}).second) {
      add(Violation::Kind::DuplicateInstance, "family/language pair repeated");
    }
    const auto lexed = lex(inst.reference_solution, inst.language);
    const bool found = std::any_of(lexed.tokens.begin(), lexed.tokens.end(), [&](const Token& t) {
      if (t.kind != TokenKind::Identifier) return false;
      const auto text = t.text(inst.reference_solution);
      return text == inst.entry_point || text.substr(identifier_name_offset(text)) == inst.entry_point;
    });
    if (!found) add(Violation::Kind::EntryPointMissing, "entry point '" + inst.entry_point + "' not found");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Verification

std::size_t VerificationReport::verified_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.verified; }));
}

namespace {

std::string last_diagnostic_line(const ExecutionResult& r) {
  const std::string& text = r.stderr_tail.empty() ? r.stdout_tail : r.stderr_tail;
  std::size_t end = text.find_last_not_of(" \t\r\n");
  if (end == std::string::npos) return std::string(to_string(r.verdict));
  std::size_t begin = text.rfind('\n', end);
  begin = begin == std::string::npos ? 0 : begin + 1;
  return text.substr(begin, end - begin + 1);
}

}  // namespace

VerificationReport verify_solutions(std::span<const CodeInstance> instances, Executor& executor,
                                    int rounds) {
  if (rounds < 1) throw DomainError("verification needs at least one round");
  VerificationReport report;
  for (const auto& inst : instances) {
    VerificationEntry entry;
    entry.instance_id = inst.instance_id;
    entry.language = inst.language;
    entry.family_id = inst.family_id;
    entry.verified = true;
    for (int round = 0; round < rounds; ++round) {
      const ExecutionResult result = executor.execute(inst.reference_solution, inst);
      entry.rounds.push_back(result.verdict);
      if (result.verdict != Verdict::Pass) {
        if (entry.verified) entry.failing_test = last_diagnostic_line(result);
        entry.verified = false;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace racg
