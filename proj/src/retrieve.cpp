#include "racg/retrieve.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>

#include "racg/errors.hpp"
#include "racg/hash.hpp"
#include "racg/http.hpp"
#include "racg/parallel.hpp"

namespace racg {

std::vector<std::string> RetrievalResult::doc_ids() const {
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back(r.doc_id);
  return out;
}

namespace {

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// camelCase / PascalCase / ACRONYMWord boundaries.
void split_camel(std::string_view word, std::vector<std::string>& parts) {
  std::size_t start = 0;
  for (std::size_t i = 1; i <= word.size(); ++i) {
    bool boundary = i == word.size();
    if (!boundary) {
      const char prev = word[i - 1];
      const char cur = word[i];
      boundary = (is_lower(prev) && is_upper(cur)) ||
                 (is_upper(prev) && is_upper(cur) && i + 1 < word.size() && is_lower(word[i + 1]));
    }
    if (boundary) {
      if (i > start) parts.push_back(lower(word.substr(start, i - start)));
      start = i;
    }
  }
}

}  // namespace

std::vector<std::string> tokenize_for_retrieval(std::string_view text) {
  std::vector<std::string> terms;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word(text[j])) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;
    while (!chunk.empty() && chunk.front() == '_') chunk.remove_prefix(1);
    while (!chunk.empty() && chunk.back() == '_') chunk.remove_suffix(1);
    if (chunk.empty()) continue;
    terms.push_back(lower(chunk));
    std::vector<std::string> parts;
    std::size_t s = 0;
    while (s < chunk.size()) {
      std::size_t e = chunk.find('_', s);
      if (e == std::string_view::npos) e = chunk.size();
      if (e > s) split_camel(chunk.substr(s, e - s), parts);
      s = e + 1;
    }
    if (parts.size() > 1) terms.insert(terms.end(), parts.begin(), parts.end());
  }
  return terms;
}

// --- Sparse index ----------------------------------------------------------

SparseIndex::SparseIndex(std::span<const std::pair<std::string, std::string>> docs) {
  doc_ids_.reserve(docs.size());
  doc_lengths_.reserve(docs.size());
  std::uint64_t total = 0;
  for (const auto& [id, text] : docs) {
    if (!by_id_.emplace(id, doc_ids_.size()).second) throw DuplicateId(id);
    const auto doc = static_cast<std::uint32_t>(doc_ids_.size());
    doc_ids_.push_back(id);
    const auto terms = tokenize_for_retrieval(text);
    doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    total += terms.size();
    std::map<std::string_view, std::uint32_t> tf;
    for (const auto& t : terms) ++tf[t];
    for (const auto& [term, count] : tf) {
      auto it = postings_.find(term);
      if (it == postings_.end()) it = postings_.emplace(std::string(term), std::vector<Posting>{}).first;
      it->second.push_back({doc, count});
    }
  }
  avg_doc_length_ = doc_ids_.empty() ? 0.0 : static_cast<double>(total) / doc_ids_.size();
}

std::optional<std::size_t> SparseIndex::doc_index(std::string_view doc_id) const {
  auto it = by_id_.find(std::string(doc_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t SparseIndex::document_frequency(std::string_view term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

double SparseIndex::idf(std::string_view term) const {
  const double n = static_cast<double>(doc_count());
  const double df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> SparseIndex::score_all(std::span<const std::string> query_terms) const {
  std::vector<double> scores(doc_count(), 0.0);
  std::vector<std::string_view> distinct(query_terms.begin(), query_terms.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (std::string_view term : distinct) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const Posting& p : it->second) {
      const double tf = p.tf;
      const double norm =
          avg_doc_length_ > 0 ? doc_lengths_[p.doc] / avg_doc_length_ : 0.0;
      scores[p.doc] += w * tf * (kBm25K1 + 1.0) / (tf + kBm25K1 * (1.0 - kBm25B + kBm25B * norm));
    }
  }
  return scores;
}

std::vector<std::pair<std::string, std::string>> retrieval_texts(
    const Corpus& corpus, std::span<const Language> languages) {
  std::vector<std::pair<std::string, std::string>> docs;
  for (const auto& d : corpus.documents()) {
    if (std::find(languages.begin(), languages.end(), d.language) == languages.end()) continue;
    docs.emplace_back(d.doc_id, corpus.document_text(d));
  }
  return docs;
}

SparseIndex build_index(const Corpus& corpus, Language language) {
  const Language langs[] = {language};
  return build_index(corpus, langs);
}

SparseIndex build_index(const Corpus& corpus, std::span<const Language> languages) {
  const auto docs = retrieval_texts(corpus, languages);
  if (docs.empty()) throw EmptySelection("no documents to index in the selected languages");
  return SparseIndex(docs);
}

double bm25_score(const SparseIndex& index, std::span<const std::string> query_terms,
                  std::string_view doc_id) {
  const auto doc = index.doc_index(doc_id);
  if (!doc) throw UnknownDoc(std::string(doc_id));
  return index.score_all(query_terms)[*doc];
}

RetrievalResult rank_top_k(std::string family_id, std::span<const std::string> doc_ids,
                           std::span<const double> scores, std::size_t k) {
  RetrievalResult result;
  result.query_family = std::move(family_id);
  result.k = k;
  std::vector<std::size_t> order(doc_ids.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return doc_ids[a] < doc_ids[b];
                    });
  for (std::size_t i = 0; i < take; ++i) {
    result.ranked.push_back({doc_ids[order[i]], scores[order[i]]});
  }
  return result;
}

RetrievalResult search(const SparseIndex& index, const Query& query, std::size_t k) {
  if (k < 1) throw DomainError("k must be at least 1");
  const auto terms = tokenize_for_retrieval(query.text);
  const auto scores = index.score_all(terms);
  return rank_top_k(query.family_id, index.doc_ids(), scores, k);
}

// --- Embeddings ------------------------------------------------------------

HttpEmbeddingClient::HttpEmbeddingClient(std::string endpoint, HttpEmbeddingOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {
  if (options_.api_key) {
    api_key_ = *options_.api_key;
  } else if (const char* env = std::getenv("EMBEDDING_API_KEY")) {
    api_key_ = env;
  }
  if (options_.batch_size == 0) options_.batch_size = 1;
}

std::vector<std::vector<float>> HttpEmbeddingClient::embed_batch(
    const std::vector<std::string>& texts) const {
  std::map<std::string, std::string> headers;
  if (!api_key_.empty()) headers["Authorization"] = "Bearer " + api_key_;
  const nlohmann::json request = {{"texts", texts}};
  const HttpResponse res = post_json(endpoint_, "/embed", request.dump(), headers, options_.timeout_s);
  if (res.status == 0) {
    throw EmbeddingServiceError(0, redact("embedding request failed: " + res.error, api_key_));
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res.body);
  } catch (const nlohmann::json::exception&) {
    throw EmbeddingServiceError(res.status, "embedding service returned invalid JSON (status " +
                                                std::to_string(res.status) + ")");
  }
  if (res.status < 200 || res.status >= 300) {
    std::string message = body.is_object() && body.contains("error") && body["error"].is_string()
                              ? body["error"].get<std::string>()
                              : std::string("HTTP ") + std::to_string(res.status);
    throw EmbeddingServiceError(res.status, redact("embedding service error: " + message, api_key_));
  }
  if (!body.is_object() || !body.contains("vectors") || !body["vectors"].is_array()) {
    throw EmbeddingServiceError(res.status, "embedding response lacks a vectors array");
  }
  std::vector<std::vector<float>> out;
  try {
    out = body["vectors"].get<std::vector<std::vector<float>>>();
  } catch (const nlohmann::json::exception&) {
    throw EmbeddingServiceError(res.status, "embedding vectors must be arrays of numbers");
  }
  if (out.size() != texts.size()) {
    throw EmbeddingServiceError(res.status, "embedding service returned " +
                                                std::to_string(out.size()) + " vectors for " +
                                                std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : out) {
    if (v.size() != out.front().size()) throw DimensionMismatch("embedding vectors differ in length");
  }
  return out;
}

std::vector<std::vector<float>> HttpEmbeddingClient::embed(const std::vector<std::string>& texts) {
  const std::size_t batch = options_.batch_size;
  const std::size_t n_batches = (texts.size() + batch - 1) / batch;
  std::vector<std::vector<std::vector<float>>> results(n_batches);
  parallel_for(n_batches, options_.jobs, [&](std::size_t b) {
    const auto first = texts.begin() + static_cast<std::ptrdiff_t>(b * batch);
    const auto last = texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), (b + 1) * batch));
    results[b] = embed_batch(std::vector<std::string>(first, last));
  });
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (auto& r : results) {
    for (auto& v : r) out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<float>> EmbeddingStore::vectors_for(
    EmbeddingClient& client, std::span<const std::pair<std::string, std::string>> docs) {
  std::vector<std::pair<std::string, std::uint64_t>> keys;
  keys.reserve(docs.size());
  for (const auto& [id, text] : docs) keys.emplace_back(id, fnv1a64(text));

  std::vector<std::string> missing_texts;
  std::vector<std::size_t> missing_pos;
  {
    std::lock_guard lock(mutex_);
    std::set<std::pair<std::string, std::uint64_t>> queued;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (!index_.contains(keys[i]) && queued.insert(keys[i]).second) {
        missing_texts.push_back(docs[i].second);
        missing_pos.push_back(i);
      }
    }
  }
  if (!missing_texts.empty()) {
    auto vectors = client.embed(missing_texts);
    if (vectors.size() != missing_texts.size()) {
      throw EmbeddingServiceError(0, "embedding client returned the wrong number of vectors");
    }
    std::lock_guard lock(mutex_);
    for (std::size_t j = 0; j < vectors.size(); ++j) {
      if (dim_ == 0) dim_ = vectors[j].size();
      if (vectors[j].size() != dim_) throw DimensionMismatch("embedding vectors differ in length");
      const auto& key = keys[missing_pos[j]];
      if (index_.contains(key)) continue;  // another thread stored it first
      index_.emplace(key, entries_.size());
      entries_.push_back({key.first, key.second, std::move(vectors[j])});
    }
  }
  std::vector<std::vector<float>> out;
  out.reserve(docs.size());
  std::lock_guard lock(mutex_);
  for (const auto& key : keys) out.push_back(entries_[index_.at(key)].vector);
  return out;
}

std::size_t EmbeddingStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::size_t EmbeddingStore::dim() const {
  std::lock_guard lock(mutex_);
  return dim_;
}

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw ParseError(0, "truncated vector cache file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void EmbeddingStore::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  nlohmann::json header = {{"dim", dim_}, {"doc_ids", nlohmann::json::array()},
                           {"text_hashes", nlohmann::json::array()}};
  for (const auto& e : entries_) {
    header["doc_ids"].push_back(e.doc_id);
    header["text_hashes"].push_back(to_hex(e.text_hash));
  }
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vector cache " + path.string());
  write_le<std::uint64_t>(out, h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& e : entries_) {
    for (float f : e.vector) write_le<float>(out, f);
  }
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read vector cache " + path.string());
  const auto header_len = read_le<std::uint64_t>(in);
  std::string h(header_len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw ParseError(0, "truncated vector cache header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("vector cache header: ") + e.what());
  }
  EmbeddingStore store;
  store.dim_ = header.at("dim").get<std::size_t>();
  const auto ids = header.at("doc_ids").get<std::vector<std::string>>();
  const auto hashes = header.value("text_hashes", std::vector<std::string>(ids.size(), "0"));
  if (hashes.size() != ids.size()) throw ParseError(0, "vector cache header is inconsistent");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<float> v(store.dim_);
    for (auto& f : v) f = read_le<float>(in);
    const std::uint64_t th = std::stoull(hashes[i], nullptr, 16);
    store.index_.emplace(std::make_pair(ids[i], th), store.entries_.size());
    store.entries_.push_back({ids[i], th, std::move(v)});
  }
  return store;
}

std::vector<double> cosine_scores(std::span<const std::vector<float>> rows,
                                  std::span<const float> query) {
  const auto dim = static_cast<Eigen::Index>(query.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != query.size()) {
      throw DimensionMismatch("document vector has dimension " + std::to_string(rows[r].size()) +
                              ", query has " + std::to_string(query.size()));
    }
    for (Eigen::Index c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  Eigen::VectorXd q(dim);
  for (Eigen::Index c = 0; c < dim; ++c) q(c) = query[c];
  const double qn = q.norm();
  Eigen::VectorXd norms = m.rowwise().norm();
  Eigen::VectorXd dots = m * q;
  std::vector<double> out(rows.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double denom = norms(static_cast<Eigen::Index>(r)) * qn;
    out[r] = denom > 0 ? dots(static_cast<Eigen::Index>(r)) / denom : 0.0;
  }
  return out;
}

RetrievalResult embed_search(EmbeddingClient& client, const Corpus& corpus, const Query& query,
                             std::size_t k, EmbeddingStore* store) {
  if (k < 1) throw DomainError("k must be at least 1");
  const Language langs[] = {query.source_language};
  const auto docs = retrieval_texts(corpus, langs);
  if (docs.empty()) throw EmptySelection("no documents in the source language");
  EmbeddingStore local;
  EmbeddingStore& s = store != nullptr ? *store : local;
  const auto doc_vectors = s.vectors_for(client, docs);
  const auto qv = client.embed({query.text});
  if (qv.size() != 1) throw EmbeddingServiceError(0, "expected one query vector");
  const auto scores = cosine_scores(doc_vectors, qv.front());
  std::vector<std::string> ids;
  ids.reserve(docs.size());
  for (const auto& d : docs) ids.push_back(d.first);
  return rank_top_k(query.family_id, ids, scores, k);
}

// --- Oracle and metrics ----------------------------------------------------

const CodeDocument& oracle_retrieve(const Corpus& corpus, const Query& query) {
  const auto id = corpus.golden_doc(query.family_id, query.source_language);
  if (!id) {
    throw MissingGolden("no golden document for family " + query.family_id + " in " +
                        std::string(to_string(query.source_language)));
  }
  const CodeDocument* doc = corpus.find(*id);
  if (doc == nullptr) throw MissingGolden("golden document " + *id + " is not in the corpus");
  return *doc;
}

std::size_t golden_hits(const RetrievalResult& result, const std::set<std::string>& golden_ids,
                        std::size_t k) {
  std::size_t hits = 0;
  const std::size_t n = std::min(k, result.ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (golden_ids.contains(result.ranked[i].doc_id)) ++hits;
  }
  return hits;
}

double precision_at_k(const RetrievalResult& result, const std::set<std::string>& golden_ids,
                      std::size_t k) {
  if (k < 1) throw DomainError("k must be at least 1");
  return static_cast<double>(golden_hits(result, golden_ids, k)) / static_cast<double>(k);
}

double recall_at_k(const RetrievalResult& result, const std::set<std::string>& golden_ids,
                   std::size_t total_golden, std::size_t k) {
  if (total_golden < 1) throw DomainError("total_golden must be at least 1");
  return static_cast<double>(golden_hits(result, golden_ids, k)) /
         static_cast<double>(total_golden);
}

}  // namespace racg
