// Command-line entry point: corpus, mutation, retrieval and experiment
// workflows behind one binary.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "racg/corpus.hpp"
#include "racg/errors.hpp"
#include "racg/execute.hpp"
#include "racg/experiment.hpp"
#include "racg/generate.hpp"
#include "racg/mutate.hpp"
#include "racg/parallel.hpp"
#include "racg/retrieve.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace racg;

namespace {

struct Options {
  std::string corpus;
  std::string golden;
  std::string instances;
  std::string language;
  std::string source;
  std::string target;
  std::string setting = "doc";
  std::string mutation;
  std::string retriever;
  std::string variant = "docnonl";
  std::string query;
  std::string config;
  std::string runners;
  std::string cache_dir;
  std::string results;
  std::uint64_t seed = kDefaultSeed;
  std::size_t k = 3;
  std::string endpoint;
  std::string embed_endpoint;
  std::string model;
  int max_tokens = 1024;
  double timeout_s = 120.0;
  std::string out;
  bool json = false;
  std::size_t jobs = default_jobs();
  int n = 0;
  int c = 0;
  int kk = 0;
  std::optional<std::uint64_t> shuffle_seed;
  bool include_same = false;
};

/// Writes `text` to --out when given, stdout otherwise.
void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw Error("cannot write " + o.out);
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

Corpus open_corpus(const Options& o, CorpusVariant variant = CorpusVariant::Doc) {
  if (o.corpus.empty()) throw CLI::RequiredError("--corpus");
  LoadOptions lo;
  if (!o.golden.empty()) lo.golden_path = o.golden;
  lo.variant = variant;
  return load_corpus(o.corpus, lo);
}

Language need_language(const std::string& name, const char* flag) {
  if (name.empty()) throw CLI::RequiredError(flag);
  const auto lang = parse_language(name);
  if (!lang) throw CLI::ValidationError(flag, "unknown language '" + name + "'");
  return *lang;
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& r : rows) {
    widths.resize(std::max(widths.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << r[i];
      if (i + 1 < r.size()) out << std::string(widths[i] - r[i].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- subcommands -----------------------------------------------------------

int corpus_validate(const Options& o) {
  const Corpus corpus = open_corpus(o);
  ValidationReport report = validate_corpus(corpus);
  if (!o.instances.empty()) {
    const auto instances = load_instances(o.instances);
    const auto more = validate_instances(instances);
    report.violations.insert(report.violations.end(), more.violations.begin(), more.violations.end());
  }
  if (o.json) {
    json v = json::array();
    for (const auto& x : report.violations) {
      v.push_back({{"kind", to_string(x.kind)},
                   {"doc_id", x.doc_id},
                   {"family_id", x.family_id},
                   {"message", x.message}});
    }
    emit(o, json{{"documents", corpus.size()}, {"violations", v}}.dump(2));
  } else {
    std::vector<std::vector<std::string>> rows = {{"kind", "doc_id", "family_id", "message"}};
    for (const auto& x : report.violations) {
      rows.push_back({std::string(to_string(x.kind)), x.doc_id, x.family_id, x.message});
    }
    emit(o, std::to_string(corpus.size()) + " documents, " +
                std::to_string(report.violations.size()) + " violations\n" +
                (report.violations.empty() ? "" : table(rows)));
  }
  return 0;
}

int corpus_variant(const Options& o) {
  const CorpusVariant target = corpus_variant_from_string(o.variant);
  const Corpus corpus = open_corpus(o);
  if (o.out.empty()) throw CLI::RequiredError("--out");
  std::vector<std::string> warnings;
  Corpus result;
  if (target == CorpusVariant::DocNoNL) {
    std::vector<CodeDocument> docs;
    for (const auto& d : corpus.documents()) docs.push_back(strip_comments(d, &warnings));
    result = Corpus(std::move(docs), corpus.golden(), target);
  } else {
    result = make_variant(corpus, target);
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  const fs::path out = o.out;
  save_corpus(result, out, out.parent_path() / (out.stem().string() + ".golden.jsonl"));
  if (o.json) {
    std::cout << json{{"documents", result.size()}, {"variant", to_string(target)},
                      {"warnings", warnings}, {"out", o.out}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << "wrote " << result.size() << " documents (" << to_string(target) << ") to "
              << o.out << '\n';
  }
  return 0;
}

int mutate_cmd(const Options& o) {
  if (o.mutation.empty()) throw CLI::RequiredError("--type");
  const MutationType type = mutation_from_string(o.mutation);
  const Corpus corpus = open_corpus(o);
  std::optional<Language> only;
  if (!o.language.empty()) only = need_language(o.language, "--language");

  std::vector<CodeDocument> docs;
  std::vector<MutationRecord> records;
  std::map<Language, std::pair<std::size_t, std::size_t>> per_lang;  // applied, total
  for (const auto& d : corpus.documents()) {
    if (only && d.language != *only) {
      docs.push_back(d);
      continue;
    }
    MutationRecord rec = apply_mutation(d, type, o.seed);
    auto& [applied, total] = per_lang[d.language];
    ++total;
    if (rec.applied) ++applied;
    CodeDocument m = d;
    m.code = rec.mutated;
    docs.push_back(std::move(m));
    records.push_back(std::move(rec));
  }
  if (!o.out.empty()) {
    const fs::path out = o.out;
    save_corpus(Corpus(docs, corpus.golden(), corpus.variant()), out,
                out.parent_path() / (out.stem().string() + ".golden.jsonl"));
    std::ofstream log(out.parent_path() / (out.stem().string() + ".mutations.jsonl"), std::ios::binary);
    for (const auto& r : records) {
      json j = {{"doc_id", r.doc_id},   {"mutation", to_string(r.mutation)},
                {"seed", r.seed},       {"applied", r.applied},
                {"replacement", r.replacement}};
      j["site"] = r.site ? json{{"start", r.site->start},
                                {"end", r.site->end},
                                {"kind", to_string(r.site->kind)},
                                {"text", r.site->token_text}}
                         : json(nullptr);
      log << j.dump() << '\n';
    }
  }
  json summary = {{"mutation", to_string(type)}, {"seed", o.seed}, {"languages", json::object()}};
  std::vector<std::vector<std::string>> rows = {{"language", "applied", "total", "rate"}};
  for (const auto& [lang, counts] : per_lang) {
    const double rate = counts.second ? static_cast<double>(counts.first) / counts.second : 0.0;
    summary["languages"][std::string(to_string(lang))] = {
        {"applied", counts.first}, {"total", counts.second}, {"rate", rate}};
    rows.push_back({std::string(to_string(lang)), std::to_string(counts.first),
                    std::to_string(counts.second), num(100.0 * rate, 2) + "%"});
  }
  std::cout << (o.json ? summary.dump(2) + "\n" : table(rows));
  return 0;
}

int index_cmd(const Options& o) {
  const Corpus corpus = open_corpus(o, corpus_variant_from_string(o.variant.empty() ? "doc" : o.variant));
  const Language lang = need_language(o.language.empty() ? o.source : o.language, "--language");
  const SparseIndex index = build_index(corpus, lang);
  json j = {{"language", to_string(lang)},
            {"doc_count", index.doc_count()},
            {"avg_doc_length", index.avg_doc_length()},
            {"terms", index.postings().size()}};
  emit(o, o.json ? j.dump(2)
                 : table({{"language", "doc_count", "avg_doc_length", "terms"},
                          {std::string(to_string(lang)), std::to_string(index.doc_count()),
                           num(index.avg_doc_length(), 2), std::to_string(index.postings().size())}}));
  return 0;
}

RetrievalResult run_search(const Corpus& corpus, const Query& q,
                           RetrieverKind kind, const SparseIndex* index, EmbeddingClient* embedder,
                           EmbeddingStore* store, std::size_t k) {
  if (kind == RetrieverKind::Embedding) return embed_search(*embedder, corpus, q, k, store);
  if (kind == RetrieverKind::Oracle) {
    RetrievalResult r;
    r.query_family = q.family_id;
    r.k = k;
    r.ranked.push_back({oracle_retrieve(corpus, q).doc_id, 1.0});
    return r;
  }
  return search(*index, q, k);
}

int search_cmd(const Options& o) {
  if (o.query.empty()) throw CLI::RequiredError("--query");
  const Corpus corpus = open_corpus(o);
  const Language src = need_language(o.source.empty() ? o.language : o.source, "--source");
  const RetrieverKind kind = retriever_from_string(o.retriever.empty() ? "sparse" : o.retriever);
  Query q{"", o.query, src, src};
  if (!o.target.empty()) q.target_language = need_language(o.target, "--target");
  std::optional<SparseIndex> index;
  std::optional<HttpEmbeddingClient> client;
  if (kind == RetrieverKind::Sparse) index.emplace(build_index(corpus, src));
  if (kind == RetrieverKind::Embedding) {
    if (o.embed_endpoint.empty()) throw CLI::RequiredError("--embed-endpoint");
    client.emplace(o.embed_endpoint, HttpEmbeddingOptions{32, o.jobs, 60.0, std::nullopt});
  }
  if (kind == RetrieverKind::Oracle) throw CLI::ValidationError("--retriever", "search takes sparse or embedding");
  const RetrievalResult r = run_search(corpus, q, kind, index ? &*index : nullptr,
                                       client ? &*client : nullptr, nullptr, o.k);
  json j = json::array();
  std::vector<std::vector<std::string>> rows = {{"rank", "doc_id", "score"}};
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    j.push_back({{"doc_id", r.ranked[i].doc_id}, {"score", r.ranked[i].score}});
    rows.push_back({std::to_string(i + 1), r.ranked[i].doc_id, num(r.ranked[i].score)});
  }
  emit(o, o.json ? j.dump(2) : table(rows));
  return 0;
}

int eval_retrieval(const Options& o) {
  const Corpus corpus = open_corpus(o, corpus_variant_from_string(o.variant.empty() ? "docnonl" : o.variant));
  if (o.instances.empty()) throw CLI::RequiredError("--instances");
  const auto instances = load_instances(o.instances);
  std::vector<Language> searched;
  if (o.source.empty() || o.source == "all") {
    std::set<Language> present;
    for (const auto& d : corpus.documents()) present.insert(d.language);
    searched.assign(present.begin(), present.end());
  } else {
    searched.push_back(need_language(o.source, "--source"));
  }
  const RetrieverKind kind = retriever_from_string(o.retriever.empty() ? "sparse" : o.retriever);
  if (kind == RetrieverKind::Oracle) throw CLI::ValidationError("--retriever", "evaluate sparse or embedding");

  std::optional<SparseIndex> index;
  std::optional<HttpEmbeddingClient> client;
  EmbeddingStore store;
  if (kind == RetrieverKind::Sparse) index.emplace(build_index(corpus, searched));
  if (kind == RetrieverKind::Embedding) {
    if (o.embed_endpoint.empty()) throw CLI::RequiredError("--embed-endpoint");
    client.emplace(o.embed_endpoint, HttpEmbeddingOptions{32, o.jobs, 60.0, std::nullopt});
  }
  // One query per family: the first instance prompt in the target language
  // (or any language when no target is given).
  std::map<std::string, const CodeInstance*> queries;
  std::optional<Language> tgt;
  if (!o.target.empty()) tgt = need_language(o.target, "--target");
  for (const auto& inst : instances) {
    if (tgt && inst.language != *tgt) continue;
    queries.emplace(inst.family_id, &inst);
  }
  if (queries.empty()) throw EmptySelection("no queries for the chosen target language");

  double p_sum = 0;
  double r_sum = 0;
  std::size_t n = 0;
  json per_family = json::array();
  for (const auto& [family, inst] : queries) {
    std::set<std::string> golden;
    for (const auto& g : corpus.golden()) {
      if (g.family_id == family &&
          std::find(searched.begin(), searched.end(), g.language) != searched.end()) {
        golden.insert(g.doc_id);
      }
    }
    if (golden.empty()) continue;
    RetrievalResult r;
    if (kind == RetrieverKind::Sparse) {
      r = search(*index, Query{family, inst->nl_prompt, inst->language, searched.front()}, o.k);
    } else {
      // Embedding search over several languages: rank every searched language together.
      std::vector<std::pair<std::string, std::string>> docs = retrieval_texts(corpus, searched);
      const auto vectors = store.vectors_for(*client, docs);
      const auto qv = client->embed({inst->nl_prompt});
      const auto scores = cosine_scores(vectors, qv.front());
      std::vector<std::string> ids;
      for (const auto& d : docs) ids.push_back(d.first);
      r = rank_top_k(family, ids, scores, o.k);
    }
    const double p = precision_at_k(r, golden, o.k);
    const double rc = recall_at_k(r, golden, golden.size(), o.k);
    p_sum += p;
    r_sum += rc;
    ++n;
    per_family.push_back({{"family_id", family}, {"precision", p}, {"recall", rc}});
  }
  if (n == 0) throw EmptySelection("no family has golden documents in the searched languages");
  json j = {{"retriever", to_string(kind)},
            {"k", o.k},
            {"queries", n},
            {"precision_at_k", p_sum / n},
            {"recall_at_k", r_sum / n},
            {"per_family", per_family}};
  emit(o, o.json ? j.dump(2)
                 : table({{"retriever", "k", "queries", "precision@k", "recall@k"},
                          {std::string(to_string(kind)), std::to_string(o.k), std::to_string(n),
                           num(100.0 * p_sum / n, 2) + "%", num(100.0 * r_sum / n, 2) + "%"}}));
  return 0;
}

RunnerRegistry load_runners(const Options& o) {
  return o.runners.empty() ? RunnerRegistry::defaults() : RunnerRegistry::from_file(o.runners);
}

GenerationParams generation_params(const Options& o) {
  GenerationParams g;
  g.endpoint = o.endpoint;
  g.model_name = o.model;
  g.max_tokens = o.max_tokens;
  g.timeout_s = o.timeout_s;
  return g;
}

int run_cell_cmd(const Options& o) {
  ExperimentConfig cfg = parse_setting_spec(o.setting);
  if (!o.mutation.empty()) cfg.mutation = mutation_from_string(o.mutation);
  if (!o.retriever.empty()) cfg.retriever = retriever_from_string(o.retriever);
  cfg.target_language = need_language(o.target, "--target");
  if (cfg.setting != Setting::Baseline) cfg.source_language = need_language(o.source, "--source");
  cfg.k = o.k;
  cfg.seed = o.seed;
  cfg.generation = generation_params(o);
  cfg = normalized(cfg);
  cfg.validate();
  if (cfg.generation.endpoint.empty()) throw CLI::RequiredError("--endpoint");
  if (o.instances.empty()) throw CLI::RequiredError("--instances");

  const Corpus corpus = open_corpus(o);
  std::vector<CodeInstance> instances;
  for (auto& inst : load_instances(o.instances)) {
    if (inst.language == cfg.target_language) instances.push_back(std::move(inst));
  }
  HttpChatGenerator generator(cfg.generation);
  LocalExecutor executor(load_runners(o));
  std::optional<HttpEmbeddingClient> embedder;
  EmbeddingStore store;
  if (cfg.retriever == RetrieverKind::Embedding) {
    if (o.embed_endpoint.empty()) throw CLI::RequiredError("--embed-endpoint");
    embedder.emplace(o.embed_endpoint, HttpEmbeddingOptions{32, o.jobs, 60.0, std::nullopt});
  }
  PipelineServices services{&generator, &executor, embedder ? &*embedder : nullptr, &store, o.jobs};
  const CellResult cell = run_cell(cfg, corpus, instances, services);
  if (o.json || !o.out.empty()) {
    emit(o, json::parse(cell_to_json(cell)).dump(2));
  } else {
    std::cout << cfg.label() << ' ' << (cfg.source_language ? to_string(*cfg.source_language) : "-")
              << "->" << to_string(cfg.target_language) << ": pass@1 " << num(cell.pass_rate, 2)
              << "% (" << cell.passed() << '/' << cell.n_tasks << ")\n";
  }
  return 0;
}

void write_reports(const ResultsTable& results, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "results.csv", std::ios::binary);
  write_csv_report(results, csv);
  std::ofstream md(dir / "results.md", std::ios::binary);
  write_markdown_report(results, md);
  std::ofstream audit(dir / "audit.jsonl", std::ios::binary);
  write_audit_log(results, audit);
  const auto categories = categorize_all(results);
  std::ofstream cat(dir / "categories.csv", std::ios::binary);
  write_category_csv(categories, cat);
}

int run_matrix_cmd(const Options& o) {
  if (o.config.empty()) throw CLI::RequiredError("--config");
  if (o.instances.empty()) throw CLI::RequiredError("--instances");
  if (o.out.empty()) throw CLI::RequiredError("--out");
  ExperimentPlan plan = load_experiment_plan(o.config);
  for (auto& t : plan.templates) {
    if (!o.endpoint.empty()) t.generation.endpoint = o.endpoint;
    if (!o.model.empty()) t.generation.model_name = o.model;
  }
  const std::string embed_endpoint =
      !o.embed_endpoint.empty() ? o.embed_endpoint : plan.embedding_endpoint.value_or("");
  const Corpus corpus = open_corpus(o);
  const auto instances = load_instances(o.instances);

  HttpChatGenerator generator(plan.templates.front().generation);
  LocalExecutor executor(load_runners(o));
  std::optional<HttpEmbeddingClient> embedder;
  if (!embed_endpoint.empty()) {
    embedder.emplace(embed_endpoint, HttpEmbeddingOptions{32, o.jobs, 60.0, std::nullopt});
  }
  EmbeddingStore store;
  PipelineServices services{&generator, &executor, embedder ? &*embedder : nullptr, &store, o.jobs};
  MatrixOptions mo;
  mo.include_same_language = plan.include_same_language || o.include_same;
  mo.shuffle_seed = o.shuffle_seed;
  mo.cache_dir = o.cache_dir.empty() ? fs::path(o.out) / "cells" : fs::path(o.cache_dir);
  mo.log = [](const std::string& m) { std::cerr << m << '\n'; };
  const ResultsTable results =
      run_matrix(plan.templates, plan.languages, corpus, instances, services, mo);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  std::ofstream(dir / "results.json", std::ios::binary) << results_to_json(results) << '\n';
  write_reports(results, dir);
  if (o.json) {
    std::cout << json{{"cells", results.cells.size()},
                      {"baselines", results.baseline.size()},
                      {"failures", results.failures.size()},
                      {"cache_hits", results.cache_hits.size()},
                      {"out", o.out}}
                     .dump(2)
              << '\n';
  } else {
    std::cout << results.baseline.size() << " baselines, " << results.cells.size() << " cells, "
              << results.failures.size() << " failed, " << results.cache_hits.size()
              << " from cache; reports in " << o.out << '\n';
  }
  return results.failures.empty() ? 0 : 1;
}

int report_cmd(const Options& o) {
  if (o.results.empty()) throw CLI::RequiredError("--results");
  std::ifstream in(o.results, std::ios::binary);
  if (!in) throw Error("cannot read " + o.results);
  std::stringstream buf;
  buf << in.rdbuf();
  const ResultsTable results = results_from_json(buf.str());
  if (!o.out.empty()) {
    write_reports(results, o.out);
    std::cout << "reports written to " << o.out << '\n';
    return 0;
  }
  std::ostringstream text;
  if (o.json) {
    std::ostringstream csv;
    write_csv_report(results, csv);
    json cats = json::array();
    for (const auto& c : categorize_all(results)) {
      cats.push_back({{"mutation", c.mutation ? json(to_string(*c.mutation)) : json(nullptr)},
                      {"counts", c.counts}});
    }
    std::cout << json{{"csv", csv.str()}, {"categories", cats}}.dump(2) << '\n';
  } else {
    write_markdown_report(results, text);
    std::cout << text.str();
  }
  return 0;
}

int pass_at_k_cmd(const Options& o) {
  const double v = pass_at_k(o.n, o.c, o.kk);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  if (o.json) {
    emit(o, json{{"n", o.n}, {"c", o.c}, {"k", o.kk}, {"pass_at_k", v}}.dump());
  } else {
    emit(o, buf);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual retrieval-augmented code generation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--out", o.out, "Output file or directory");
  app.add_flag("--json", o.json, "Machine-readable JSON output");
  app.add_option("--jobs", o.jobs, "Parallel workers")->check(CLI::PositiveNumber);

  auto corpus_opts = [&](CLI::App* sub) {
    sub->add_option("--corpus", o.corpus, "Corpus JSONL")->required();
    sub->add_option("--golden", o.golden, "Golden annotations JSONL");
  };

  auto* validate = app.add_subcommand("corpus-validate", "Check corpus and instance invariants");
  corpus_opts(validate);
  validate->add_option("--instances", o.instances, "Instances JSONL");

  auto* variant = app.add_subcommand("corpus-variant", "Write the Doc or Doc w/o NL variant");
  corpus_opts(variant);
  variant->add_option("--variant", o.variant, "doc or docnonl")->capture_default_str();

  auto* mutate = app.add_subcommand("mutate", "Apply one mutation operator to every document");
  corpus_opts(mutate);
  mutate->add_option("--type,--mutation", o.mutation, "logical, controlflow, syntax or lexicon")->required();
  mutate->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  mutate->add_option("--language", o.language, "Only mutate this language");

  auto* index = app.add_subcommand("index", "Build a BM25 index and print its statistics");
  corpus_opts(index);
  index->add_option("--language,--source", o.language, "Language to index")->required();
  index->add_option("--variant", o.variant, "doc or docnonl");

  auto* search = app.add_subcommand("search", "Rank documents for a query");
  corpus_opts(search);
  search->add_option("--source,--language", o.source, "Corpus language")->required();
  search->add_option("--target", o.target, "Target language");
  search->add_option("--query", o.query, "Query text")->required();
  search->add_option("--k", o.k, "Results to return")->capture_default_str()->check(CLI::PositiveNumber);
  search->add_option("--retriever", o.retriever, "sparse or embedding");
  search->add_option("--embed-endpoint", o.embed_endpoint, "Embedding service URL");

  auto* eval = app.add_subcommand("eval-retrieval", "Precision@K and Recall@K against golden documents");
  corpus_opts(eval);
  eval->add_option("--instances", o.instances, "Instances JSONL (query text)")->required();
  eval->add_option("--source,--language", o.source, "Corpus language, or 'all'");
  eval->add_option("--target", o.target, "Language of the query instances");
  eval->add_option("--k", o.k, "Cut-off")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--retriever", o.retriever, "sparse or embedding");
  eval->add_option("--embed-endpoint", o.embed_endpoint, "Embedding service URL");
  eval->add_option("--variant", o.variant, "doc or docnonl (default docnonl)");

  auto gen_opts = [&](CLI::App* sub) {
    sub->add_option("--endpoint", o.endpoint, "Chat-completions base URL");
    sub->add_option("--model", o.model, "Model name");
    sub->add_option("--max-tokens", o.max_tokens, "Completion token limit")->capture_default_str();
    sub->add_option("--timeout-s", o.timeout_s, "Generation timeout")->capture_default_str();
    sub->add_option("--embed-endpoint", o.embed_endpoint, "Embedding service URL");
    sub->add_option("--runners", o.runners, "Runner registry file");
    sub->add_option("--instances", o.instances, "Instances JSONL")->required();
  };

  auto* cell = app.add_subcommand("run-cell", "Run one experiment cell");
  corpus_opts(cell);
  gen_opts(cell);
  cell->add_option("--setting", o.setting, "baseline, injection, doc, docnonl or attack")->capture_default_str();
  cell->add_option("--source", o.source, "Corpus language");
  cell->add_option("--target", o.target, "Target language")->required();
  cell->add_option("--mutation", o.mutation, "Mutation for attack cells");
  cell->add_option("--retriever", o.retriever, "oracle, sparse or embedding");
  cell->add_option("--k", o.k, "Retrieval window")->capture_default_str()->check(CLI::PositiveNumber);
  cell->add_option("--seed", o.seed, "Mutation seed")->capture_default_str();

  auto* matrix = app.add_subcommand("run-matrix", "Run an experiment plan over a language matrix");
  corpus_opts(matrix);
  gen_opts(matrix);
  matrix->add_option("--config", o.config, "Experiment plan file")->required();
  matrix->add_option("--cache-dir", o.cache_dir, "Cell cache directory (default <out>/cells)");
  matrix->add_option("--shuffle-seed", o.shuffle_seed, "Run cells in a shuffled order");
  matrix->add_flag("--include-same-language", o.include_same, "Also run source == target cells");

  auto* report = app.add_subcommand("report", "Render reports from a saved results.json");
  report->add_option("--results", o.results, "results.json from run-matrix")->required();

  auto* pak = app.add_subcommand("pass-at-k", "Unbiased pass@k estimate");
  pak->add_option("--n", o.n, "Samples")->required();
  pak->add_option("--c", o.c, "Correct samples")->required();
  pak->add_option("--k", o.kk, "k")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*validate) return corpus_validate(o);
    if (*variant) return corpus_variant(o);
    if (*mutate) return mutate_cmd(o);
    if (*index) return index_cmd(o);
    if (*search) return search_cmd(o);
    if (*eval) return eval_retrieval(o);
    if (*cell) return run_cell_cmd(o);
    if (*matrix) return run_matrix_cmd(o);
    if (*report) return report_cmd(o);
    if (*pak) return pass_at_k_cmd(o);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
