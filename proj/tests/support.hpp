#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "racg/corpus.hpp"
#include "racg/execute.hpp"
#include "racg/generate.hpp"
#include "racg/hash.hpp"
#include "racg/retrieve.hpp"

namespace racg::testing {

inline std::filesystem::path data_dir() { return RACG_TEST_DATA_DIR; }

inline Corpus fixture_corpus(CorpusVariant variant = CorpusVariant::Doc) {
  LoadOptions opts;
  opts.golden_path = data_dir() / "golden.jsonl";
  opts.variant = variant;
  return load_corpus(data_dir() / "corpus.jsonl", opts);
}

inline std::vector<CodeInstance> fixture_instances(std::optional<Language> only = std::nullopt) {
  std::vector<CodeInstance> out;
  for (auto& inst : load_instances(data_dir() / "instances.jsonl")) {
    if (!only || inst.language == *only) out.push_back(std::move(inst));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("racg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// --- mock services -----------------------------------------------------------

/// Bag-of-words feature hashing into a fixed dimension.
inline std::vector<float> hash_vector(const std::string& text, std::size_t dim = 64) {
  std::vector<float> v(dim, 0.0f);
  for (const auto& tok : tokenize_for_retrieval(text)) v[fnv1a64(tok) % dim] += 1.0f;
  return v;
}

class HashEmbedder : public EmbeddingClient {
 public:
  std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override {
    calls += 1;
    texts_seen += texts.size();
    std::vector<std::vector<float>> out;
    for (const auto& t : texts) out.push_back(hash_vector(t));
    return out;
  }
  std::atomic<int> calls{0};
  std::atomic<std::size_t> texts_seen{0};
};

/// The contents of the first fenced block after "Reference 1", if any.
inline std::optional<std::string> first_reference(const std::string& prompt) {
  const std::size_t ref = prompt.find("Reference 1 (");
  if (ref == std::string::npos) return std::nullopt;
  std::size_t line = prompt.find('\n', ref) + 1;
  std::size_t ticks = 0;
  while (prompt[line + ticks] == '`') ++ticks;
  const std::string fence(ticks, '`');
  const std::size_t body = prompt.find('\n', line) + 1;
  const std::size_t close = prompt.find("\n" + fence + "\n", body - 1);
  return prompt.substr(body, close + 1 - body);
}

inline std::string fenced(const std::string& code, std::string_view tag) {
  std::string out = "```" + std::string(tag) + "\n" + code;
  if (out.back() != '\n') out += '\n';
  return out + "```\n";
}

/// Echoes the top-ranked reference back as the answer. Prompts without
/// references get the answer from `fallback` (keyed by task text) or a stub.
class EchoGenerator : public Generator {
 public:
  explicit EchoGenerator(Language target, std::map<std::string, std::string> fallback = {})
      : target_(target), fallback_(std::move(fallback)) {}

  std::string generate(const std::string& prompt) override {
    calls += 1;
    if (auto ref = first_reference(prompt)) return "Here you go:\n" + fenced(*ref, fence_tag(target_));
    for (const auto& [key, code] : fallback_) {
      // Keys are '|'-separated fragments that must all occur in the prompt.
      bool all = true;
      std::size_t start = 0;
      while (all && start <= key.size()) {
        const std::size_t bar = std::min(key.find('|', start), key.size());
        all = prompt.find(key.substr(start, bar - start)) != std::string::npos;
        start = bar + 1;
      }
      if (all) return fenced(code, fence_tag(target_));
    }
    return fenced("raise NotImplementedError()\n", fence_tag(target_));
  }
  std::atomic<int> calls{0};

 private:
  Language target_;
  std::map<std::string, std::string> fallback_;
};

/// In-process HTTP server on a random local port.
class MockServer {
 public:
  MockServer() = default;
  ~MockServer() { stop(); }

  httplib::Server& server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

/// POST /embed answering with hash vectors.
class MockEmbeddingService {
 public:
  MockEmbeddingService() {
    mock_.server().Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      requests += 1;
      std::lock_guard lock(mutex_);
      last_auth = req.get_header_value("Authorization");
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& t : body.at("texts")) vectors.push_back(hash_vector(t.get<std::string>()));
      res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
    });
    mock_.start();
  }
  std::string url() const { return mock_.url(); }

  std::atomic<int> requests{0};
  std::string last_auth;

 private:
  std::mutex mutex_;
  MockServer mock_;
};

/// Passes a task when the answer is an unmodified corpus document that
/// names the task's entry point (case and underscores ignored). Cheap and
/// deterministic, so matrix runs do not depend on installed compilers.
class FakeExecutor : public Executor {
 public:
  explicit FakeExecutor(const Corpus& corpus) {
    for (const auto& d : corpus.documents()) {
      clean_.insert(d.code);
      clean_.insert(corpus.document_text(d));
      clean_.insert(strip_comments(d).code);
    }
  }
  ExecutionResult execute(std::string_view code, const CodeInstance& instance) override {
    calls += 1;
    ExecutionResult r;
    r.verdict = clean_.contains(std::string(code)) && squash(code).find(squash(instance.entry_point)) != std::string::npos
                    ? Verdict::Pass
                    : Verdict::TestFailure;
    return r;
  }
  std::atomic<int> calls{0};

 private:
  static std::string squash(std::string_view s) {
    std::string out;
    for (char c : s) {
      if (c != '_') out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
  }
  std::set<std::string> clean_;
};

/// Baseline answers for EchoGenerator: the reference solution of every
/// other instance per language.
inline std::map<std::string, std::string> half_known(std::span<const CodeInstance> instances) {
  std::map<std::string, std::string> out;
  std::map<Language, int> seen;
  for (const auto& inst : instances) {
    if (seen[inst.language]++ % 2 != 0) continue;
    out["expert " + std::string(display_name(inst.language)) + " programmer|Task:\n" + inst.nl_prompt + "\n"] =
        inst.reference_solution;
  }
  return out;
}

// --- comment-stripping oracle ------------------------------------------------

/// Comment syntax of one language, written out by hand.
struct CommentRules {
  std::vector<std::string> line;        // line comment openers
  bool block = false;                   // /* ... */
  bool nested = false;                  // nestable block comments
  bool hash_bang = false;               // "#!" on the first line
  bool ruby_begin = false;              // =begin ... =end
  bool pod = false;                     // =word ... =cut
  bool python_docstrings = false;
  bool preprocessor = false;            // '#' directives are code
  std::string quotes = "\"'";           // single-line string delimiters
  bool triple_double = false;           // """..."""
  bool triple_single = false;           // '''...'''
  bool backtick_raw = false;            // `...` without escapes
  bool backtick_template = false;       // `...` with ${...}
  bool cpp_raw = false;                 // R"d(...)d"
  bool csharp_verbatim = false;         // @"..." with "" escapes
  bool perl_last_index = false;         // $#name is code
};

inline CommentRules comment_rules(Language lang) {
  CommentRules r;
  switch (lang) {
    case Language::Cpp:
      r.line = {"//"}; r.block = true; r.preprocessor = true; r.cpp_raw = true;
      break;
    case Language::CSharp:
      r.line = {"//"}; r.block = true; r.preprocessor = true; r.csharp_verbatim = true;
      r.triple_double = true;
      break;
    case Language::Go:
      r.line = {"//"}; r.block = true; r.backtick_raw = true;
      break;
    case Language::Java:
      r.line = {"//"}; r.block = true; r.triple_double = true;
      break;
    case Language::JavaScript:
    case Language::TypeScript:
      r.line = {"//"}; r.block = true; r.backtick_template = true;
      break;
    case Language::Kotlin:
    case Language::Scala:
    case Language::Swift:
      r.line = {"//"}; r.block = true; r.nested = true; r.triple_double = true;
      if (lang == Language::Swift) r.quotes = "\"";
      break;
    case Language::Perl:
      r.line = {"#"}; r.hash_bang = true; r.pod = true; r.perl_last_index = true;
      break;
    case Language::Php:
      r.line = {"//", "#"}; r.block = true;
      break;
    case Language::Python:
      r.line = {"#"}; r.hash_bang = true; r.python_docstrings = true;
      r.triple_double = true; r.triple_single = true;
      break;
    case Language::Ruby:
      r.line = {"#"}; r.hash_bang = true; r.ruby_begin = true;
      break;
  }
  return r;
}

struct Span {
  std::size_t begin;
  std::size_t end;
};

/// Comment byte ranges found by a single left-to-right scan.
inline std::vector<Span> oracle_comment_spans(std::string_view s, Language lang) {
  const CommentRules r = comment_rules(lang);
  std::vector<Span> spans;
  std::size_t i = 0;
  int depth = 0;  // bracket depth, used for docstrings
  bool line_has_code = false;
  auto at = [&](std::size_t p, std::string_view w) { return s.substr(p, w.size()) == w; };
  auto line_start = [&](std::size_t p) { return p == 0 || s[p - 1] == '\n'; };
  auto to_eol = [&](std::size_t p) {
    const std::size_t nl = s.find('\n', p);
    return nl == std::string_view::npos ? s.size() : nl;
  };
  // Skips a quoted string starting at p (the opening delimiter); returns the end.
  auto skip_quoted = [&](std::size_t p, char q, bool escapes) {
    std::size_t j = p + 1;
    while (j < s.size() && s[j] != q) {
      if (escapes && s[j] == '\\') ++j;
      ++j;
    }
    return std::min(j + 1, s.size());
  };

  while (i < s.size()) {
    const char c = s[i];
    if (c == '\n') {
      if (depth == 0) line_has_code = false;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (line_start(i) && r.ruby_begin && at(i, "=begin")) {
      std::size_t e = s.find("\n=end", i);
      e = e == std::string_view::npos ? s.size() : to_eol(e + 1);
      spans.push_back({i, e});
      i = e;
      continue;
    }
    if (line_start(i) && r.pod && c == '=' && i + 1 < s.size() && std::isalpha(static_cast<unsigned char>(s[i + 1]))) {
      std::size_t e = s.find("\n=cut", i);
      e = e == std::string_view::npos ? s.size() : to_eol(e + 1);
      spans.push_back({i, e});
      i = e;
      continue;
    }
    if (i == 0 && r.hash_bang && at(i, "#!")) {
      spans.push_back({0, to_eol(0)});
      i = to_eol(0);
      continue;
    }
    if (r.preprocessor && c == '#' && !line_has_code) {
      i = to_eol(i);
      line_has_code = true;
      continue;
    }
    if (r.perl_last_index && at(i, "$#")) {
      i += 2;
      line_has_code = true;
      continue;
    }
    bool is_line = false;
    for (const auto& opener : r.line) is_line = is_line || at(i, opener);
    if (is_line) {
      spans.push_back({i, to_eol(i)});
      i = to_eol(i);
      continue;
    }
    if (r.block && at(i, "/*")) {
      std::size_t j = i + 2;
      int level = 1;
      while (j < s.size() && level > 0) {
        if (r.nested && at(j, "/*")) {
          ++level;
          j += 2;
        } else if (at(j, "*/")) {
          --level;
          j += 2;
        } else {
          ++j;
        }
      }
      spans.push_back({i, j});
      i = j;
      continue;
    }
    // Literals.
    const bool tdq = r.triple_double && at(i, "\"\"\"");
    const bool tsq = r.triple_single && at(i, "'''");
    if (tdq || tsq) {
      const std::string delim = tdq ? "\"\"\"" : "'''";
      std::size_t j = i + 3;
      while (j < s.size() && !at(j, delim)) j += s[j] == '\\' && lang == Language::Python ? 2 : 1;
      const std::size_t end = std::min(j + 3, s.size());
      bool alone = true;
      for (std::size_t k = end; k < s.size() && s[k] != '\n'; ++k) {
        if (s[k] == '#') break;
        if (s[k] != ' ' && s[k] != '\t') {
          alone = false;
          break;
        }
      }
      if (r.python_docstrings && !line_has_code && depth == 0 && alone) {
        spans.push_back({i, end});
      } else {
        line_has_code = true;
      }
      i = end;
      continue;
    }
    if (r.cpp_raw && at(i, "R\"")) {
      const std::size_t open = s.find('(', i);
      const std::string close = ")" + std::string(s.substr(i + 2, open - i - 2)) + "\"";
      i = s.find(close, open) + close.size();
      line_has_code = true;
      continue;
    }
    if (r.csharp_verbatim && at(i, "@\"")) {
      std::size_t j = i + 2;
      while (j < s.size()) {
        if (at(j, "\"\"")) {
          j += 2;
        } else if (s[j] == '"') {
          break;
        } else {
          ++j;
        }
      }
      i = j + 1;
      line_has_code = true;
      continue;
    }
    if (c == '`' && (r.backtick_raw || r.backtick_template)) {
      std::size_t j = i + 1;
      int interp = 0;
      while (j < s.size()) {
        if (r.backtick_template && s[j] == '\\') {
          j += 2;
          continue;
        }
        if (r.backtick_template && at(j, "${")) {
          ++interp;
          j += 2;
          continue;
        }
        if (interp > 0 && s[j] == '"') {
          j = skip_quoted(j, '"', true);
          continue;
        }
        if (interp > 0 && s[j] == '}') {
          --interp;
          ++j;
          continue;
        }
        if (interp == 0 && s[j] == '`') break;
        ++j;
      }
      i = j + 1;
      line_has_code = true;
      continue;
    }
    if (r.quotes.find(c) != std::string::npos) {
      if (lang == Language::Ruby && c == '"') {
        // Interpolation may hold nested strings; skip braces wholesale.
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '"') {
          if (s[j] == '\\') {
            j += 2;
            continue;
          }
          if (at(j, "#{")) {
            j = s.find('}', j) + 1;
            continue;
          }
          ++j;
        }
        i = j + 1;
      } else {
        i = skip_quoted(i, c, true);
      }
      line_has_code = true;
      continue;
    }
    if (c == '(' || c == '[' || c == '{') ++depth;
    if ((c == ')' || c == ']' || c == '}') && depth > 0) --depth;
    line_has_code = true;
    ++i;
  }
  return spans;
}

/// Removes the spans: end-of-line comments take their leading blanks along,
/// inline comments between two word characters leave one space, and lines
/// that held a comment and end up blank disappear.
inline std::string oracle_strip(std::string_view s, Language lang) {
  const auto spans = oracle_comment_spans(s, lang);
  if (spans.empty()) return std::string(s);
  auto hspace = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };

  std::string out;
  std::vector<std::size_t> marks;
  std::size_t cursor = 0;
  for (std::size_t n = 0; n < spans.size(); ++n) {
    std::size_t b = spans[n].begin;
    std::size_t e = spans[n].end;
    // Trailing: only blanks and more comments until the newline.
    bool trailing = true;
    std::size_t p = e;
    std::size_t next = n + 1;
    while (p < s.size() && s[p] != '\n') {
      if (next < spans.size() && spans[next].begin == p) {
        p = spans[next].end;
        ++next;
        continue;
      }
      if (!hspace(s[p])) {
        trailing = false;
        break;
      }
      ++p;
    }
    if (trailing) {
      while (b > cursor && hspace(s[b - 1])) --b;
      while (e < s.size() && hspace(s[e])) ++e;
    }
    out.append(s.substr(cursor, b - cursor));
    if (!trailing && !out.empty() && word(out.back()) && e < s.size() && word(s[e])) out += ' ';
    marks.push_back(out.size());
    cursor = e;
  }
  out.append(s.substr(cursor));

  std::string result;
  std::size_t start = 0;
  std::size_t m = 0;
  while (true) {
    const std::size_t nl = out.find('\n', start);
    const std::size_t end = nl == std::string::npos ? out.size() : nl;
    bool touched = false;
    while (m < marks.size() && marks[m] <= end) {
      touched = touched || marks[m] >= start;
      ++m;
    }
    bool blank = true;
    for (std::size_t k = start; k < end; ++k) blank = blank && hspace(out[k]);
    if (!(touched && blank)) {
      result.append(out, start, end - start);
      if (nl != std::string::npos) result += '\n';
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return result;
}

struct Snippet {
  std::string id;
  Language language;
  std::string code;
};

inline std::vector<Snippet> comment_snippets() {
  std::vector<Snippet> out;
  std::ifstream in(data_dir() / "comments.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("id"), *parse_language(j.at("language").get<std::string>()),
                   j.at("code")});
  }
  return out;
}

// --- independent metric oracles ----------------------------------------------

/// pass@k by enumerating every k-subset of n samples (c of them correct).
inline double pass_at_k_enumerated(int n, int c, int k) {
  std::vector<int> pick(k);
  for (int i = 0; i < k; ++i) pick[i] = i;
  long long total = 0;
  long long hit = 0;
  while (true) {
    ++total;
    bool any = false;
    for (int i : pick) any = any || i < c;
    if (any) ++hit;
    int i = k - 1;
    while (i >= 0 && pick[i] == n - k + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

inline double brute_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0;
  double na = 0;
  double nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace racg::testing
