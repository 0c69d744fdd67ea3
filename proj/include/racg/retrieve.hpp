#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "racg/corpus.hpp"
#include "racg/language.hpp"

namespace racg {

struct Query {
  std::string family_id;
  std::string text;
  Language target_language = Language::Python;
  Language source_language = Language::Python;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

struct RetrievalResult {
  std::string query_family;
  std::vector<ScoredDoc> ranked;
  std::size_t k = 0;

  std::vector<std::string> doc_ids() const;
};

/// Lowercased alphanumeric runs; camelCase and snake_case compounds are
/// followed by their parts.
std::vector<std::string> tokenize_for_retrieval(std::string_view text);

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

class SparseIndex {
 public:
  struct Posting {
    std::uint32_t doc;  // index into doc_ids()
    std::uint32_t tf;
  };

  /// Indexes (doc_id, text) pairs. Throws DuplicateId.
  explicit SparseIndex(std::span<const std::pair<std::string, std::string>> docs);

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  const std::map<std::string, std::vector<Posting>, std::less<>>& postings() const {
    return postings_;
  }
  std::optional<std::size_t> doc_index(std::string_view doc_id) const;
  std::size_t document_frequency(std::string_view term) const;
  double idf(std::string_view term) const;

  /// BM25 score for every document, indexed like doc_ids().
  std::vector<double> score_all(std::span<const std::string> query_terms) const;

 private:
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::map<std::string, std::vector<Posting>, std::less<>> postings_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// Index over the documents of one language (or several). Throws
/// EmptySelection when there are none.
SparseIndex build_index(const Corpus& corpus, Language language);
SparseIndex build_index(const Corpus& corpus, std::span<const Language> languages);

/// Okapi BM25 over the distinct query terms. Throws UnknownDoc.
double bm25_score(const SparseIndex& index, std::span<const std::string> query_terms,
                  std::string_view doc_id);

/// Exactly min(k, doc_count) results, by score then ascending doc_id.
RetrievalResult search(const SparseIndex& index, const Query& query, std::size_t k);

/// Turns the score vector into a ranked top-k list with the shared
/// tie-breaking rule.
RetrievalResult rank_top_k(std::string family_id, std::span<const std::string> doc_ids,
                           std::span<const double> scores, std::size_t k);

// --- Embedding retrieval ---------------------------------------------------

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  /// One vector per text, in input order.
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

struct HttpEmbeddingOptions {
  std::size_t batch_size = 32;
  std::size_t jobs = 1;
  double timeout_s = 60.0;
  /// Sent as a bearer token; defaults to $EMBEDDING_API_KEY.
  std::optional<std::string> api_key;
};

/// Client for POST {endpoint}/embed.
class HttpEmbeddingClient : public EmbeddingClient {
 public:
  explicit HttpEmbeddingClient(std::string endpoint, HttpEmbeddingOptions options = {});
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

 private:
  std::vector<std::vector<float>> embed_batch(const std::vector<std::string>& texts) const;

  std::string endpoint_;
  HttpEmbeddingOptions options_;
  std::string api_key_;
};

/// Write-once document vector cache keyed by doc_id and text hash, so a
/// corpus is embedded once no matter how many queries run against it.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(EmbeddingStore&& other) noexcept
      : entries_(std::move(other.entries_)), index_(std::move(other.index_)), dim_(other.dim_) {}

  /// Vectors for `docs`, embedding only the ones not cached yet.
  std::vector<std::vector<float>> vectors_for(EmbeddingClient& client,
                                              std::span<const std::pair<std::string, std::string>> docs);
  std::size_t size() const;
  std::size_t dim() const;

  /// Binary file: u64 little-endian header length, JSON header
  /// {"dim", "doc_ids", "text_hashes"}, then little-endian f32 rows.
  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string doc_id;
    std::uint64_t text_hash;
    std::vector<float> vector;
  };
  mutable std::mutex mutex_;
  std::vector<Entry> entries_;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> index_;
  std::size_t dim_ = 0;
};

/// Cosine similarity of every row against the query. Zero vectors score 0.
/// Throws DimensionMismatch.
std::vector<double> cosine_scores(std::span<const std::vector<float>> rows,
                                  std::span<const float> query);

/// Ranks the query's source-language documents by cosine similarity.
/// Without a store, document vectors are computed for this call only.
RetrievalResult embed_search(EmbeddingClient& client, const Corpus& corpus, const Query& query,
                             std::size_t k, EmbeddingStore* store = nullptr);

// --- Oracle and metrics ----------------------------------------------------

/// The golden document of (family, source language). Throws MissingGolden.
const CodeDocument& oracle_retrieve(const Corpus& corpus, const Query& query);

std::size_t golden_hits(const RetrievalResult& result, const std::set<std::string>& golden_ids,
                        std::size_t k);
double precision_at_k(const RetrievalResult& result, const std::set<std::string>& golden_ids,
                      std::size_t k);
/// Throws DomainError when total_golden is 0.
double recall_at_k(const RetrievalResult& result, const std::set<std::string>& golden_ids,
                   std::size_t total_golden, std::size_t k);

/// (doc_id, retrieval text) pairs for the given languages.
std::vector<std::pair<std::string, std::string>> retrieval_texts(
    const Corpus& corpus, std::span<const Language> languages);

}  // namespace racg
