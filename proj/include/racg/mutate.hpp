#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "racg/corpus.hpp"
#include "racg/language.hpp"

namespace racg {

enum class MutationType { LogicalKeyword, ControlFlow, Syntax, Lexicon };

inline constexpr std::array<MutationType, 4> kAllMutations = {
    MutationType::LogicalKeyword, MutationType::ControlFlow, MutationType::Syntax,
    MutationType::Lexicon};

/// "logical", "controlflow", "syntax", "lexicon".
std::string_view to_string(MutationType type);
MutationType mutation_from_string(std::string_view name);

inline constexpr std::uint64_t kDefaultSeed = 42;

enum class SiteKind { LogicOperator, BranchClause, IdentifierChar, Identifier, StringConstant, Keyword };

std::string_view to_string(SiteKind kind);

struct MutationSite {
  std::size_t start = 0;
  std::size_t end = 0;
  SiteKind kind = SiteKind::Identifier;
  std::string token_text;

  bool operator==(const MutationSite&) const = default;
};

struct MutationRecord {
  std::string doc_id;
  MutationType mutation = MutationType::LogicalKeyword;
  /// The rewritten site; empty when nothing was applicable.
  std::optional<MutationSite> site;
  /// Text the site was rewritten to (empty for deletions).
  std::string replacement;
  /// Full document code before and after.
  std::string original;
  std::string mutated;
  std::uint64_t seed = kDefaultSeed;
  bool applied = false;

  bool operator==(const MutationRecord&) const = default;
};

/// Counter-based generator: the i-th draw is a pure function of (key, i),
/// so a document's draws never depend on what else is in the batch.
class SitePrng {
 public:
  explicit SitePrng(std::uint64_t key) : key_(key) {}
  std::uint64_t next();
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t uniform(std::uint64_t bound);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Per-document key: the experiment seed mixed with FNV-1a(doc_id).
std::uint64_t document_seed(std::uint64_t seed, std::string_view doc_id);

/// Inverse of a logic token under the fixed involution table, or "" for
/// the deleted negations (`!`, `not`). nullopt when `token` is not a logic
/// token.
std::optional<std::string_view> invert_logic_token(std::string_view token);

/// All places where `mutation` could be applied. Sites never lie inside
/// comments; LogicalKeyword and ControlFlow sites never lie inside strings.
std::vector<MutationSite> find_sites(std::string_view code, Language language,
                                     MutationType mutation);

/// Applies one seeded mutation. When there is no site the record has
/// applied=false and the code is unchanged.
MutationRecord apply_mutation(const CodeDocument& doc, MutationType mutation,
                              std::uint64_t seed = kDefaultSeed);

struct PerturbedDocuments {
  std::vector<CodeDocument> documents;
  std::vector<MutationRecord> records;
};

/// Mutates each document independently; output order follows input order.
PerturbedDocuments perturb_retrieved(std::span<const CodeDocument> docs, MutationType mutation,
                                     std::uint64_t seed = kDefaultSeed);

/// Fraction of documents in `languages` with at least one site. Throws
/// EmptySelection when no document matches.
double applicability_rate(const Corpus& corpus, std::span<const Language> languages,
                          MutationType mutation);

}  // namespace racg
