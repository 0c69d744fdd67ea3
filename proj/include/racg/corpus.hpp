#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "racg/language.hpp"

namespace racg {

class Executor;
enum class Verdict;

/// One benchmark problem in one language.
struct CodeInstance {
  std::string instance_id;
  Language language = Language::Python;
  std::string nl_prompt;
  std::string reference_solution;
  std::string test_cases;
  std::string entry_point;
  std::string family_id;

  bool operator==(const CodeInstance&) const = default;
};

/// A retrievable corpus entry. `nl_comment` holds the natural-language
/// comment block in the language's own comment syntax, so that
/// `*nl_comment + "\n" + code` is still valid source.
struct CodeDocument {
  std::string doc_id;
  Language language = Language::Python;
  std::string code;
  std::optional<std::string> nl_comment;
  std::string family_id;

  bool operator==(const CodeDocument&) const = default;
};

enum class CorpusVariant { Doc, DocNoNL };

std::string_view to_string(CorpusVariant variant);
CorpusVariant corpus_variant_from_string(std::string_view name);

struct GoldenEntry {
  std::string family_id;
  Language language = Language::Python;
  std::string doc_id;

  bool operator==(const GoldenEntry&) const = default;
};

/// Immutable collection of documents plus golden annotations.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<CodeDocument> documents, std::vector<GoldenEntry> golden,
         CorpusVariant variant = CorpusVariant::Doc);

  const std::vector<CodeDocument>& documents() const { return documents_; }
  const std::vector<GoldenEntry>& golden() const { return golden_; }
  CorpusVariant variant() const { return variant_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  const CodeDocument* find(std::string_view doc_id) const;
  /// First golden doc_id annotated for (family, language), if any.
  std::optional<std::string> golden_doc(std::string_view family_id, Language language) const;
  /// All golden doc_ids of a family, across languages, in annotation order.
  std::vector<std::string> golden_docs(std::string_view family_id) const;
  std::vector<const CodeDocument*> in_language(Language language) const;

  /// Text handed to retrievers and prompts: comment block plus code in the
  /// Doc variant, code only in DocNoNL.
  std::string document_text(const CodeDocument& doc) const;

  /// Order-sensitive content hash of documents, golden entries and variant.
  std::uint64_t content_hash() const;

  bool operator==(const Corpus& other) const {
    return documents_ == other.documents_ && golden_ == other.golden_ &&
           variant_ == other.variant_;
  }

 private:
  std::vector<CodeDocument> documents_;
  std::vector<GoldenEntry> golden_;
  CorpusVariant variant_ = CorpusVariant::Doc;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct LoadOptions {
  /// Defaults to `golden.jsonl` next to the corpus file when it exists.
  std::optional<std::filesystem::path> golden_path;
  CorpusVariant variant = CorpusVariant::Doc;
};

/// Reads a JSON Lines corpus. Throws ParseError on malformed lines and
/// DuplicateId on repeated doc_id.
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& options = {});

void save_corpus(const Corpus& corpus, const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& golden_path = std::nullopt);

std::vector<CodeInstance> load_instances(const std::filesystem::path& path);
void save_instances(std::span<const CodeInstance> instances, const std::filesystem::path& path);

struct StripResult {
  std::string code;
  bool unterminated_comment = false;
};

/// Removes line, block and documentation comments. Trailing whitespace in
/// front of a removed end-of-line comment goes with it, and lines left
/// holding nothing but whitespace are dropped. Everything else is kept
/// byte-for-byte.
StripResult strip_comment_text(std::string_view code, Language language);

/// Strips comments from the code and clears `nl_comment`. An unterminated
/// block comment is stripped to end of input and reported through
/// `warnings` when provided.
CodeDocument strip_comments(const CodeDocument& doc,
                            std::vector<std::string>* warnings = nullptr);

/// Doc -> Doc is the identity; Doc/DocNoNL -> DocNoNL strips every document.
/// Throws std::invalid_argument when asked to restore comments.
Corpus make_variant(const Corpus& corpus, CorpusVariant variant);

struct Violation {
  enum class Kind {
    EmptyCode,
    DuplicateDocId,
    CommentInPureCode,
    GoldenMissingDoc,
    GoldenLanguageMismatch,
    GoldenFamilyMismatch,
    DuplicateGolden,
    EmptySolution,
    EmptyTests,
    DuplicateInstance,
    EntryPointMissing,
  };
  Kind kind;
  std::string doc_id;
  std::string family_id;
  std::string message;
};

std::string_view to_string(Violation::Kind kind);

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate_corpus(const Corpus& corpus);
ValidationReport validate_instances(std::span<const CodeInstance> instances);

struct VerificationEntry {
  std::string instance_id;
  Language language = Language::Python;
  std::string family_id;
  std::vector<Verdict> rounds;
  bool verified = false;
  /// Last diagnostic line of the first failing round, when any round failed.
  std::string failing_test;
};

struct VerificationReport {
  std::vector<VerificationEntry> entries;
  std::size_t verified_count() const;
};

/// Runs every reference solution against its own tests `rounds` times. An
/// instance is verified iff every round passes. SandboxUnavailable from the
/// executor propagates.
VerificationReport verify_solutions(std::span<const CodeInstance> instances, Executor& executor,
                                    int rounds);

}  // namespace racg
