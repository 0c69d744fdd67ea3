#include "racg/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "racg/config.hpp"
#include "racg/errors.hpp"
#include "racg/hash.hpp"
#include "racg/parallel.hpp"

namespace racg {

using nlohmann::json;

std::string_view to_string(Setting setting) {
  switch (setting) {
    case Setting::Baseline: return "baseline";
    case Setting::Injection: return "injection";
    case Setting::Doc: return "doc";
    case Setting::DocNoNL: return "docnonl";
    case Setting::Attack: return "attack";
  }
  return "doc";
}

Setting setting_from_string(std::string_view name) {
  std::string n;
  for (char c : name) {
    if (c != '_' && c != '-' && c != ' ') n += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (n == "baseline") return Setting::Baseline;
  if (n == "injection") return Setting::Injection;
  if (n == "doc") return Setting::Doc;
  if (n == "docnonl" || n == "docw/onl") return Setting::DocNoNL;
  if (n == "attack") return Setting::Attack;
  throw std::invalid_argument("unknown setting: " + std::string(name));
}

std::string_view to_string(RetrieverKind kind) {
  switch (kind) {
    case RetrieverKind::Oracle: return "oracle";
    case RetrieverKind::Sparse: return "sparse";
    case RetrieverKind::Embedding: return "embedding";
  }
  return "sparse";
}

RetrieverKind retriever_from_string(std::string_view name) {
  if (name == "oracle") return RetrieverKind::Oracle;
  if (name == "sparse" || name == "bm25") return RetrieverKind::Sparse;
  if (name == "embedding" || name == "dense") return RetrieverKind::Embedding;
  throw std::invalid_argument("unknown retriever: " + std::string(name));
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (k < 1) fail("k must be at least 1");
  if (generation.temperature < 0) fail("temperature must be non-negative");
  if (setting == Setting::Baseline) {
    if (source_language || retriever) fail("baseline cells take no source language or retriever");
  } else {
    if (!source_language) fail(std::string(to_string(setting)) + " cells need a source language");
    if (!retriever) fail(std::string(to_string(setting)) + " cells need a retriever");
  }
  if (setting == Setting::Injection && retriever != RetrieverKind::Oracle) {
    fail("injection cells use the oracle retriever");
  }
  if (setting == Setting::Attack && !mutation) fail("attack cells need a mutation type");
  if (setting != Setting::Attack && mutation) fail("only attack cells take a mutation type");
}

TemplateId ExperimentConfig::template_id() const {
  return setting == Setting::Baseline ? TemplateId::BaselineV1 : TemplateId::RacgV1;
}

std::string ExperimentConfig::label() const {
  std::string out(to_string(setting));
  if (mutation) out += "-" + std::string(to_string(*mutation));
  if (retriever && setting != Setting::Injection) out += "/" + std::string(to_string(*retriever));
  return out;
}

ExperimentConfig normalized(ExperimentConfig config) {
  switch (config.setting) {
    case Setting::Baseline:
      config.source_language.reset();
      config.retriever.reset();
      config.mutation.reset();
      break;
    case Setting::Injection:
      config.retriever = RetrieverKind::Oracle;
      config.mutation.reset();
      break;
    case Setting::Attack:
      if (!config.retriever) config.retriever = RetrieverKind::Sparse;
      break;
    default:
      if (!config.retriever) config.retriever = RetrieverKind::Sparse;
      config.mutation.reset();
      break;
  }
  return config;
}

std::size_t CellResult::passed() const {
  return static_cast<std::size_t>(std::count_if(per_task.begin(), per_task.end(), [](const TaskRecord& t) {
    return t.verdict == Verdict::Pass;
  }));
}

// --- run_cell --------------------------------------------------------------

namespace {

template <typename E>
[[noreturn]] void rethrow_with_family(const E& e, const std::string& family) {
  if constexpr (std::is_base_of_v<ServiceError, E>) {
    if constexpr (std::is_same_v<E, GenerationTimeout>) {
      throw GenerationTimeout("family " + family + ": " + e.what());
    } else {
      throw E(e.status(), "family " + family + ": " + e.what());
    }
  } else {
    throw E("family " + family + ": " + e.what());
  }
}

}  // namespace

CellResult run_cell(const ExperimentConfig& raw_config, const Corpus& corpus,
                    std::span<const CodeInstance> instances, PipelineServices& services,
                    const CellResult* clean) {
  const ExperimentConfig config = normalized(raw_config);
  config.validate();
  if (instances.empty()) throw EmptySelection("cell has no instances");
  if (services.generator == nullptr || services.executor == nullptr) {
    throw std::invalid_argument("run_cell needs a generator and an executor");
  }
  for (const auto& inst : instances) {
    if (inst.language != config.target_language) {
      throw std::invalid_argument("instance " + inst.instance_id + " is not in the target language");
    }
  }

  const Corpus* working = &corpus;
  Corpus stripped;
  if (config.setting == Setting::DocNoNL && corpus.variant() == CorpusVariant::Doc) {
    stripped = make_variant(corpus, CorpusVariant::DocNoNL);
    working = &stripped;
  }

  std::optional<SparseIndex> index;
  if (config.setting != Setting::Baseline && config.retriever == RetrieverKind::Sparse &&
      !(config.setting == Setting::Attack && clean != nullptr)) {
    index.emplace(build_index(*working, *config.source_language));
  }
  if (config.retriever == RetrieverKind::Embedding && services.embedder == nullptr &&
      !(config.setting == Setting::Attack && clean != nullptr)) {
    throw std::invalid_argument("embedding retrieval needs an embedding client");
  }

  std::map<std::string, const TaskRecord*> clean_tasks;
  if (config.setting == Setting::Attack && clean != nullptr) {
    for (const auto& t : clean->per_task) clean_tasks[t.instance_id] = &t;
  }

  std::vector<const CodeInstance*> ordered;
  for (const auto& inst : instances) ordered.push_back(&inst);
  std::sort(ordered.begin(), ordered.end(), [](const CodeInstance* a, const CodeInstance* b) {
    return a->instance_id < b->instance_id;
  });

  std::vector<TaskRecord> records(ordered.size());
  parallel_for(ordered.size(), services.jobs, [&](std::size_t i) {
    const CodeInstance& inst = *ordered[i];
    TaskRecord& rec = records[i];
    rec.instance_id = inst.instance_id;
    rec.family_id = inst.family_id;
    try {
      std::vector<const CodeDocument*> docs;
      if (config.setting != Setting::Baseline) {
        const Query query{inst.family_id, inst.nl_prompt, config.target_language,
                          *config.source_language};
        std::vector<std::string> ids;
        if (!clean_tasks.empty() || (config.setting == Setting::Attack && clean != nullptr)) {
          auto it = clean_tasks.find(inst.instance_id);
          if (it == clean_tasks.end()) {
            throw TaskSetMismatch("clean cell has no record for " + inst.instance_id);
          }
          ids = it->second->retrieved;
        } else if (config.retriever == RetrieverKind::Oracle) {
          ids.push_back(oracle_retrieve(*working, query).doc_id);
        } else if (config.retriever == RetrieverKind::Sparse) {
          ids = search(*index, query, config.k).doc_ids();
        } else {
          ids = embed_search(*services.embedder, *working, query, config.k,
                             services.embedding_store)
                    .doc_ids();
        }
        for (const auto& id : ids) {
          const CodeDocument* d = working->find(id);
          if (d == nullptr) throw UnknownDoc(id);
          docs.push_back(d);
        }
        rec.retrieved = ids;
      }

      PromptSpec spec;
      spec.query_text = inst.nl_prompt;
      spec.target_language = config.target_language;
      spec.template_id = config.template_id();
      for (const CodeDocument* d : docs) {
        if (config.setting == Setting::Attack) {
          MutationRecord m = apply_mutation(*d, *config.mutation, config.seed);
          rec.perturbations.push_back({m.doc_id, m.applied, m.site, m.replacement});
          CodeDocument perturbed = *d;
          perturbed.code = std::move(m.mutated);
          spec.context_docs.push_back({d->language, working->document_text(perturbed)});
        } else {
          spec.context_docs.push_back({d->language, working->document_text(*d)});
        }
      }
      const BuiltPrompt prompt = build_prompt_within(std::move(spec), config.prompt_char_budget);
      rec.dropped_context = prompt.dropped_docs;
      rec.prompt_hash = to_hex(fnv1a64(prompt.text));

      const std::string response = services.generator->generate(prompt.text);
      rec.response_hash = to_hex(fnv1a64(response));
      GenerationOutcome outcome;
      try {
        outcome = extract_code(response, config.target_language);
      } catch (const EmptyResponse&) {
        rec.verdict = Verdict::TestFailure;
        rec.note = "empty response";
        return;
      }
      rec.extraction = std::string(to_string(outcome.extraction_method));
      rec.verdict = services.executor->execute(*outcome.extracted_code, inst).verdict;
    } catch (const GenerationTimeout& e) {
      rethrow_with_family(e, inst.family_id);
    } catch (const GenerationServiceError& e) {
      rethrow_with_family(e, inst.family_id);
    } catch (const EmbeddingServiceError& e) {
      rethrow_with_family(e, inst.family_id);
    } catch (const SandboxUnavailable& e) {
      rethrow_with_family(e, inst.family_id);
    } catch (const MissingGolden& e) {
      rethrow_with_family(e, inst.family_id);
    }
  });

  CellResult cell;
  cell.config = config;
  cell.n_tasks = records.size();
  cell.per_task = std::move(records);
  cell.pass_rate = 100.0 * static_cast<double>(cell.passed()) / static_cast<double>(cell.n_tasks);
  return cell;
}

// --- Tables and statistics -------------------------------------------------

std::vector<std::string> ResultsTable::labels() const {
  std::set<std::string> out;
  for (const auto& [key, _] : cells) out.insert(key.label);
  return {out.begin(), out.end()};
}

DeltaCell delta(double pass_rate, double baseline) {
  DeltaCell d;
  d.pass_rate = pass_rate;
  d.baseline = baseline;
  d.absolute = pass_rate - baseline;
  if (baseline != 0.0) d.relative = 100.0 * d.absolute / baseline;
  return d;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

DeltaTable delta_table(const ResultsTable& results, const std::string& label) {
  DeltaTable table;
  table.label = label;
  std::set<Language> sources;
  std::set<Language> targets;
  std::map<Language, std::vector<double>> rows;
  std::map<Language, std::vector<double>> cols;
  std::vector<double> all;
  for (const auto& [key, cell] : results.cells) {
    if (key.label != label) continue;
    auto base = results.baseline.find(key.target);
    if (base == results.baseline.end()) {
      throw MissingBaseline("no baseline for target " + std::string(to_string(key.target)));
    }
    const DeltaCell d = delta(cell.pass_rate, base->second.pass_rate);
    table.cells[{key.source, key.target}] = d;
    sources.insert(key.source);
    targets.insert(key.target);
    rows[key.source].push_back(d.absolute);
    cols[key.target].push_back(d.absolute);
    all.push_back(d.absolute);
  }
  table.sources.assign(sources.begin(), sources.end());
  table.targets.assign(targets.begin(), targets.end());
  for (const auto& [lang, v] : rows) table.row_means[lang] = mean_of(v);
  for (const auto& [lang, v] : cols) table.column_means[lang] = mean_of(v);
  table.grand_mean = mean_of(all);
  return table;
}

Stats aggregate_stats(std::span<const double> pass_rates, StdConvention convention) {
  if (pass_rates.empty()) throw EmptySelection("aggregate_stats needs at least one value");
  const double n = static_cast<double>(pass_rates.size());
  Stats s;
  s.mean = std::accumulate(pass_rates.begin(), pass_rates.end(), 0.0) / n;
  if (pass_rates.size() == 1) return s;
  double ss = 0.0;
  for (double x : pass_rates) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / (convention == StdConvention::Sample ? n - 1.0 : n));
  return s;
}

Stats aggregate_stats(std::span<const CellResult> cells, StdConvention convention) {
  std::vector<double> rates;
  for (const auto& c : cells) rates.push_back(c.pass_rate);
  return aggregate_stats(rates, convention);
}

std::size_t CaseCategories::positive_noise() const {
  auto it = counts.find(kPositiveNoise);
  return it == counts.end() ? 0 : it->second;
}

CaseCategories categorize_perturbation_effects(const CellResult& attack, const CellResult& clean,
                                               const CellResult& baseline) {
  if (attack.config.target_language != clean.config.target_language ||
      attack.config.target_language != baseline.config.target_language ||
      attack.config.source_language != clean.config.source_language) {
    throw TaskSetMismatch("cells differ in source or target language");
  }
  auto verdicts = [](const CellResult& c) {
    std::map<std::string, bool> out;
    for (const auto& t : c.per_task) out[t.instance_id] = t.verdict == Verdict::Pass;
    return out;
  };
  const auto a = verdicts(attack);
  const auto c = verdicts(clean);
  const auto b = verdicts(baseline);
  auto same_keys = [](const auto& x, const auto& y) {
    return x.size() == y.size() &&
           std::equal(x.begin(), x.end(), y.begin(), [](const auto& p, const auto& q) { return p.first == q.first; });
  };
  if (!same_keys(a, c) || !same_keys(a, b)) {
    throw TaskSetMismatch("attack, clean and baseline cells cover different tasks");
  }
  CaseCategories out;
  out.mutation = attack.config.mutation;
  for (const char* cat : {"PPP", "PPF", "PFP", "PFF", "FPP", "FPF", "FFP", "FFF"}) out.counts[cat] = 0;
  for (const auto& [id, pass] : a) {
    std::string cat;
    cat += b.at(id) ? 'P' : 'F';
    cat += c.at(id) ? 'P' : 'F';
    cat += pass ? 'P' : 'F';
    ++out.counts[cat];
    out.per_task[id] = cat;
  }
  return out;
}

// --- Serialization ---------------------------------------------------------

namespace {

json config_to_json(const ExperimentConfig& c) {
  json j = {{"setting", to_string(c.setting)},
            {"target", to_string(c.target_language)},
            {"k", c.k},
            {"seed", c.seed},
            {"template", to_string(c.template_id())},
            {"generation",
             {{"temperature", c.generation.temperature},
              {"max_tokens", c.generation.max_tokens},
              {"model", c.generation.model_name},
              {"endpoint", c.generation.endpoint},
              {"timeout_s", c.generation.timeout_s}}}};
  j["source"] = c.source_language ? json(to_string(*c.source_language)) : json(nullptr);
  j["mutation"] = c.mutation ? json(to_string(*c.mutation)) : json(nullptr);
  j["retriever"] = c.retriever ? json(to_string(*c.retriever)) : json(nullptr);
  j["prompt_char_budget"] = c.prompt_char_budget ? json(*c.prompt_char_budget) : json(nullptr);
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.setting = setting_from_string(j.at("setting").get<std::string>());
  c.target_language = language_from_string(j.at("target").get<std::string>());
  c.k = j.at("k").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("source").is_null()) c.source_language = language_from_string(j["source"].get<std::string>());
  if (!j.at("mutation").is_null()) c.mutation = mutation_from_string(j["mutation"].get<std::string>());
  if (!j.at("retriever").is_null()) c.retriever = retriever_from_string(j["retriever"].get<std::string>());
  if (!j.at("prompt_char_budget").is_null()) c.prompt_char_budget = j["prompt_char_budget"].get<std::size_t>();
  const json& g = j.at("generation");
  c.generation.temperature = g.at("temperature").get<double>();
  c.generation.max_tokens = g.at("max_tokens").get<int>();
  c.generation.model_name = g.at("model").get<std::string>();
  c.generation.endpoint = g.at("endpoint").get<std::string>();
  c.generation.timeout_s = g.at("timeout_s").get<double>();
  return c;
}

SiteKind site_kind_from_string(std::string_view s) {
  for (SiteKind k : {SiteKind::LogicOperator, SiteKind::BranchClause, SiteKind::IdentifierChar,
                     SiteKind::Identifier, SiteKind::StringConstant, SiteKind::Keyword}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown site kind: " + std::string(s));
}

json perturbation_to_json(const PerturbationNote& p) {
  json j = {{"doc_id", p.doc_id}, {"applied", p.applied}, {"replacement", p.replacement}};
  if (p.site) {
    j["site"] = {{"start", p.site->start},
                 {"end", p.site->end},
                 {"kind", to_string(p.site->kind)},
                 {"text", p.site->token_text}};
  } else {
    j["site"] = nullptr;
  }
  return j;
}

PerturbationNote perturbation_from_json(const json& j) {
  PerturbationNote p;
  p.doc_id = j.at("doc_id").get<std::string>();
  p.applied = j.at("applied").get<bool>();
  p.replacement = j.at("replacement").get<std::string>();
  if (!j.at("site").is_null()) {
    const json& s = j["site"];
    p.site = MutationSite{s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                          site_kind_from_string(s.at("kind").get<std::string>()),
                          s.at("text").get<std::string>()};
  }
  return p;
}

json task_to_json(const TaskRecord& t) {
  json perturbations = json::array();
  for (const auto& p : t.perturbations) perturbations.push_back(perturbation_to_json(p));
  return {{"instance_id", t.instance_id},
          {"family_id", t.family_id},
          {"verdict", to_string(t.verdict)},
          {"retrieved", t.retrieved},
          {"perturbations", perturbations},
          {"dropped_context", t.dropped_context},
          {"extraction", t.extraction},
          {"prompt_hash", t.prompt_hash},
          {"response_hash", t.response_hash},
          {"note", t.note}};
}

TaskRecord task_from_json(const json& j) {
  TaskRecord t;
  t.instance_id = j.at("instance_id").get<std::string>();
  t.family_id = j.at("family_id").get<std::string>();
  t.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  t.retrieved = j.at("retrieved").get<std::vector<std::string>>();
  for (const auto& p : j.at("perturbations")) t.perturbations.push_back(perturbation_from_json(p));
  t.dropped_context = j.at("dropped_context").get<std::size_t>();
  t.extraction = j.at("extraction").get<std::string>();
  t.prompt_hash = j.at("prompt_hash").get<std::string>();
  t.response_hash = j.at("response_hash").get<std::string>();
  t.note = j.at("note").get<std::string>();
  return t;
}

}  // namespace

std::string cell_to_json(const CellResult& cell) {
  json tasks = json::array();
  for (const auto& t : cell.per_task) tasks.push_back(task_to_json(t));
  const json j = {{"config", config_to_json(cell.config)},
                  {"pass_rate", cell.pass_rate},
                  {"n_tasks", cell.n_tasks},
                  {"per_task", tasks}};
  return j.dump();
}

CellResult cell_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    CellResult cell;
    cell.config = config_from_json(j.at("config"));
    cell.pass_rate = j.at("pass_rate").get<double>();
    cell.n_tasks = j.at("n_tasks").get<std::size_t>();
    for (const auto& t : j.at("per_task")) cell.per_task.push_back(task_from_json(t));
    return cell;
  } catch (const json::exception& e) {
    throw ParseError(1, std::string("cell record: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(1, std::string("cell record: ") + e.what());
  }
}

std::string cell_cache_key(const ExperimentConfig& config, const Corpus& corpus,
                           std::span<const CodeInstance> instances) {
  std::vector<const CodeInstance*> sorted;
  for (const auto& i : instances) sorted.push_back(&i);
  std::sort(sorted.begin(), sorted.end(),
            [](const CodeInstance* a, const CodeInstance* b) { return a->instance_id < b->instance_id; });
  ContentHasher inst_hash;
  for (const CodeInstance* i : sorted) {
    inst_hash.add(i->instance_id).add(to_string(i->language)).add(i->nl_prompt);
    inst_hash.add(i->reference_solution).add(i->test_cases).add(i->entry_point).add(i->family_id);
  }
  ContentHasher h;
  h.add(config_to_json(normalized(config)).dump());
  h.add(corpus.content_hash());
  h.add(inst_hash.digest());
  h.add(to_string(config.template_id()));
  return to_hex(h.digest());
}

// --- run_matrix ------------------------------------------------------------

namespace {

struct Job {
  CellKey key;
  ExperimentConfig config;
  bool baseline = false;
};

std::optional<CellResult> load_cached(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return cell_from_json(buf.str());
  } catch (const ParseError&) {
    return std::nullopt;  // a torn write; run the cell again
  }
}

void persist(const std::filesystem::path& path, const CellResult& cell) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << cell_to_json(cell) << '\n';
    if (!out) throw Error("cannot write cell cache " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string describe(const CellKey& key, bool baseline) {
  if (baseline) return "baseline " + std::string(to_string(key.target));
  return key.label + " " + std::string(to_string(key.source)) + "->" +
         std::string(to_string(key.target));
}

}  // namespace

ResultsTable run_matrix(std::span<const ExperimentConfig> raw_templates,
                        std::span<const Language> raw_languages, const Corpus& corpus,
                        std::span<const CodeInstance> instances, PipelineServices& services,
                        const MatrixOptions& options) {
  ResultsTable results;
  std::vector<ExperimentConfig> templates;
  for (const auto& t : raw_templates) templates.push_back(normalized(t));
  if (templates.empty()) return results;
  std::set<Language> language_set(raw_languages.begin(), raw_languages.end());
  const std::vector<Language> languages(language_set.begin(), language_set.end());

  std::map<Language, std::vector<CodeInstance>> by_target;
  for (const auto& inst : instances) {
    if (language_set.contains(inst.language)) by_target[inst.language].push_back(inst);
  }

  ExperimentConfig base_template = templates.front();
  for (const auto& t : templates) {
    if (t.setting == Setting::Baseline) {
      base_template = t;
      break;
    }
  }
  base_template.setting = Setting::Baseline;
  base_template = normalized(base_template);

  std::vector<Job> first_pass;
  std::vector<Job> attack_pass;
  std::set<CellKey> planned;
  auto plan = [&](ExperimentConfig cfg, Language source, Language target) {
    cfg.source_language = source;
    cfg.target_language = target;
    cfg = normalized(cfg);
    Job job{{cfg.label(), source, target}, cfg, false};
    if (!planned.insert(job.key).second) return;
    (cfg.setting == Setting::Attack ? attack_pass : first_pass).push_back(std::move(job));
  };
  for (Language target : languages) {
    ExperimentConfig cfg = base_template;
    cfg.target_language = target;
    first_pass.push_back({{cfg.label(), target, target}, cfg, true});
  }
  for (const auto& t : templates) {
    if (t.setting == Setting::Baseline) continue;
    for (Language source : languages) {
      for (Language target : languages) {
        if (source == target && !options.include_same_language) continue;
        if (t.setting == Setting::Attack) {
          ExperimentConfig clean = t;
          clean.setting = t.retriever == RetrieverKind::Oracle ? Setting::Injection : Setting::Doc;
          clean.mutation.reset();
          plan(clean, source, target);
        }
        plan(t, source, target);
      }
    }
  }
  if (options.shuffle_seed) {
    std::mt19937_64 rng(*options.shuffle_seed);
    std::shuffle(first_pass.begin(), first_pass.end(), rng);
    std::shuffle(attack_pass.begin(), attack_pass.end(), rng);
  }

  std::optional<Corpus> no_nl;
  auto corpus_for = [&](const ExperimentConfig& cfg) -> const Corpus& {
    if (cfg.setting == Setting::DocNoNL && corpus.variant() == CorpusVariant::Doc) {
      if (!no_nl) no_nl = make_variant(corpus, CorpusVariant::DocNoNL);
      return *no_nl;
    }
    return corpus;
  };
  if (options.cache_dir) std::filesystem::create_directories(*options.cache_dir);

  auto run_job = [&](const Job& job) {
    auto log = [&](const std::string& msg) {
      if (options.log) options.log(msg);
    };
    const auto it = by_target.find(job.key.target);
    if (it == by_target.end() || it->second.empty()) {
      results.failures.push_back({job.key, "no instances for target " +
                                               std::string(to_string(job.key.target))});
      return;
    }
    const Corpus& cell_corpus = corpus_for(job.config);
    std::optional<std::filesystem::path> cache_file;
    if (options.cache_dir) {
      cache_file = *options.cache_dir / (cell_cache_key(job.config, cell_corpus, it->second) + ".json");
      if (auto cached = load_cached(*cache_file)) {
        log("cache hit: " + describe(job.key, job.baseline));
        results.cache_hits.push_back(job.key);
        if (job.baseline) {
          results.baseline[job.key.target] = std::move(*cached);
        } else {
          results.cells[job.key] = std::move(*cached);
        }
        return;
      }
    }
    const CellResult* clean = nullptr;
    if (job.config.setting == Setting::Attack) {
      ExperimentConfig c = job.config;
      c.setting = c.retriever == RetrieverKind::Oracle ? Setting::Injection : Setting::Doc;
      c.mutation.reset();
      auto found = results.cells.find({c.label(), job.key.source, job.key.target});
      if (found != results.cells.end()) clean = &found->second;
    }
    log("running: " + describe(job.key, job.baseline));
    try {
      CellResult cell = run_cell(job.config, cell_corpus, it->second, services, clean);
      if (cache_file) persist(*cache_file, cell);
      if (job.baseline) {
        results.baseline[job.key.target] = std::move(cell);
      } else {
        results.cells[job.key] = std::move(cell);
      }
    } catch (const std::exception& e) {
      log("failed: " + describe(job.key, job.baseline) + ": " + e.what());
      results.failures.push_back({job.key, e.what()});
    }
  };
  for (const auto& job : first_pass) run_job(job);
  for (const auto& job : attack_pass) run_job(job);
  std::sort(results.failures.begin(), results.failures.end(),
            [](const CellFailure& a, const CellFailure& b) { return a.key < b.key; });
  std::sort(results.cache_hits.begin(), results.cache_hits.end());
  return results;
}

namespace {

json key_to_json(const CellKey& k) {
  return {{"label", k.label}, {"source", to_string(k.source)}, {"target", to_string(k.target)}};
}

CellKey key_from_json(const json& j) {
  return {j.at("label").get<std::string>(), language_from_string(j.at("source").get<std::string>()),
          language_from_string(j.at("target").get<std::string>())};
}

}  // namespace

std::string results_to_json(const ResultsTable& results) {
  json baseline = json::array();
  for (const auto& [_, cell] : results.baseline) baseline.push_back(json::parse(cell_to_json(cell)));
  json cells = json::array();
  for (const auto& [key, cell] : results.cells) {
    cells.push_back({{"key", key_to_json(key)}, {"cell", json::parse(cell_to_json(cell))}});
  }
  json failures = json::array();
  for (const auto& f : results.failures) {
    failures.push_back({{"key", key_to_json(f.key)}, {"message", f.message}});
  }
  json hits = json::array();
  for (const auto& k : results.cache_hits) hits.push_back(key_to_json(k));
  return json{{"baseline", baseline}, {"cells", cells}, {"failures", failures}, {"cache_hits", hits}}
      .dump();
}

ResultsTable results_from_json(const std::string& text) {
  ResultsTable results;
  try {
    const json j = json::parse(text);
    for (const auto& b : j.at("baseline")) {
      CellResult cell = cell_from_json(b.dump());
      results.baseline[cell.config.target_language] = std::move(cell);
    }
    for (const auto& c : j.at("cells")) {
      results.cells[key_from_json(c.at("key"))] = cell_from_json(c.at("cell").dump());
    }
    for (const auto& f : j.at("failures")) {
      results.failures.push_back({key_from_json(f.at("key")), f.at("message").get<std::string>()});
    }
    for (const auto& k : j.value("cache_hits", json::array())) {
      results.cache_hits.push_back(key_from_json(k));
    }
  } catch (const json::exception& e) {
    throw ParseError(1, std::string("results file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(1, std::string("results file: ") + e.what());
  }
  return results;
}

std::vector<CaseCategories> categorize_all(const ResultsTable& results) {
  std::vector<CaseCategories> out;
  for (const auto& [key, cell] : results.cells) {
    if (cell.config.setting != Setting::Attack) continue;
    ExperimentConfig clean_cfg = cell.config;
    clean_cfg.setting =
        clean_cfg.retriever == RetrieverKind::Oracle ? Setting::Injection : Setting::Doc;
    clean_cfg.mutation.reset();
    auto clean = results.cells.find({clean_cfg.label(), key.source, key.target});
    auto base = results.baseline.find(key.target);
    if (clean == results.cells.end() || base == results.baseline.end()) continue;
    out.push_back(categorize_perturbation_effects(cell, clean->second, base->second));
  }
  return out;
}

// --- Reports ---------------------------------------------------------------

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string signed_fixed(double v, int digits) {
  std::string s = fixed(v, digits);
  return s.front() == '-' ? s : "+" + s;
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void csv_row(std::ostream& out, const std::string& label, const CellResult& cell,
             const CellResult* baseline) {
  const auto& c = cell.config;
  out << csv_escape(label) << ',' << to_string(c.setting) << ','
      << (c.retriever ? to_string(*c.retriever) : "") << ','
      << (c.mutation ? to_string(*c.mutation) : "") << ','
      << (c.source_language ? to_string(*c.source_language) : "") << ','
      << to_string(c.target_language) << ',' << c.k << ',' << c.seed << ',' << cell.n_tasks << ','
      << cell.passed() << ',' << fixed(cell.pass_rate, 4) << ',';
  if (baseline == nullptr) {
    out << ",,\n";
    return;
  }
  const DeltaCell d = delta(cell.pass_rate, baseline->pass_rate);
  out << fixed(d.baseline, 4) << ',' << fixed(d.absolute, 4) << ','
      << (d.relative ? fixed(*d.relative, 4) : "NA") << '\n';
}

std::string md_cell(const DeltaCell& d) {
  std::string s = fixed(d.pass_rate, 2) + " (" + signed_fixed(d.absolute, 2) + ", ";
  s += d.relative ? signed_fixed(*d.relative, 1) + "%" : "rel. NA";
  return s + ")";
}

}  // namespace

void write_csv_report(const ResultsTable& results, std::ostream& out) {
  out << "label,setting,retriever,mutation,source,target,k,seed,n_tasks,passed,pass_rate,"
         "baseline_pass_rate,abs_delta,rel_delta_pct\n";
  for (const auto& [target, cell] : results.baseline) csv_row(out, "baseline", cell, nullptr);
  for (const auto& [key, cell] : results.cells) {
    auto base = results.baseline.find(key.target);
    csv_row(out, key.label, cell, base == results.baseline.end() ? nullptr : &base->second);
  }
}

void write_markdown_report(const ResultsTable& results, std::ostream& out) {
  out << "# Pass@1 results\n\n";
  if (!results.baseline.empty()) {
    out << "## baseline (no retrieval)\n\n| Target | Pass@1 | Tasks |\n|---|---|---|\n";
    std::vector<double> rates;
    for (const auto& [target, cell] : results.baseline) {
      out << "| " << display_name(target) << " | " << fixed(cell.pass_rate, 2) << " | "
          << cell.n_tasks << " |\n";
      rates.push_back(cell.pass_rate);
    }
    const Stats s = aggregate_stats(rates);
    out << "\nMean " << fixed(s.mean, 2) << ", sample std " << fixed(s.std, 2) << ".\n\n";
  }
  for (const auto& label : results.labels()) {
    DeltaTable table;
    try {
      table = delta_table(results, label);
    } catch (const MissingBaseline& e) {
      out << "## " << label << "\n\nNo deltas: " << e.what() << "\n\n";
      continue;
    }
    out << "## " << label << "\n\n";
    out << "Rows are corpus (source) languages, columns are target languages. Each cell is "
           "Pass@1 followed by the absolute change in points and the relative change against "
           "the target's baseline.\n\n";
    out << "| Source \\ Target |";
    for (Language t : table.targets) out << ' ' << display_name(t) << " |";
    out << " Mean abs. change |\n|---|";
    for (std::size_t i = 0; i <= table.targets.size(); ++i) out << "---|";
    out << '\n';
    for (Language s : table.sources) {
      out << "| " << display_name(s) << " |";
      for (Language t : table.targets) {
        auto it = table.cells.find({s, t});
        out << ' ' << (it == table.cells.end() ? std::string("n/a") : md_cell(it->second)) << " |";
      }
      out << ' ' << signed_fixed(table.row_means.at(s), 2) << " |\n";
    }
    out << "| Mean abs. change |";
    for (Language t : table.targets) out << ' ' << signed_fixed(table.column_means.at(t), 2) << " |";
    out << ' ' << signed_fixed(table.grand_mean, 2) << " |\n\n";

    // Attack tables also compare against their clean counterpart.
    const auto slash = label.find('/');
    if (label.rfind("attack-", 0) == 0) {
      const std::string retr = slash == std::string::npos ? "" : label.substr(slash);
      const std::string clean_label = retr == "/oracle" ? "injection" : "doc" + retr;
      std::map<Language, std::vector<double>> attack_rates;
      std::map<Language, std::vector<double>> clean_rates;
      for (const auto& [key, cell] : results.cells) {
        if (key.label == label) attack_rates[key.target].push_back(cell.pass_rate);
      }
      for (const auto& [key, cell] : results.cells) {
        if (key.label == clean_label && attack_rates.contains(key.target)) {
          clean_rates[key.target].push_back(cell.pass_rate);
        }
      }
      if (!clean_rates.empty()) {
        out << "Change of the column mean against " << clean_label
            << " (relative drop computed per column from the column means):";
        for (const auto& [t, rates] : attack_rates) {
          auto c = clean_rates.find(t);
          if (c == clean_rates.end()) continue;
          const double cm = mean_of(c->second);
          const double am = mean_of(rates);
          out << ' ' << display_name(t) << ' ' << fixed(am, 2) << " vs " << fixed(cm, 2);
          out << (cm != 0 ? " (" + signed_fixed(100.0 * (am - cm) / cm, 1) + "%)" : " (rel. NA)") << ';';
        }
        out << "\n\n";
      }
    }
  }
  if (!results.failures.empty()) {
    out << "## Failed cells\n\n";
    for (const auto& f : results.failures) {
      out << "- " << f.key.label << ' ' << to_string(f.key.source) << "->" << to_string(f.key.target)
          << ": " << f.message << '\n';
    }
    out << '\n';
  }
}

void write_audit_log(const ResultsTable& results, std::ostream& out) {
  auto emit = [&](const std::string& label, const CellResult& cell) {
    for (const auto& t : cell.per_task) {
      json j = task_to_json(t);
      j["label"] = label;
      j["target"] = to_string(cell.config.target_language);
      j["source"] = cell.config.source_language ? json(to_string(*cell.config.source_language))
                                                : json(nullptr);
      out << j.dump() << '\n';
    }
  };
  for (const auto& [_, cell] : results.baseline) emit("baseline", cell);
  for (const auto& [key, cell] : results.cells) emit(key.label, cell);
}

void write_category_csv(std::span<const CaseCategories> categories, std::ostream& out) {
  out << "mutation,category,count\n";
  for (const auto& c : categories) {
    const std::string m = c.mutation ? std::string(to_string(*c.mutation)) : "";
    for (const auto& [cat, n] : c.counts) out << m << ',' << cat << ',' << n << '\n';
  }
}

// --- Plans -----------------------------------------------------------------

ExperimentConfig parse_setting_spec(std::string_view spec) {
  ExperimentConfig c;
  std::string_view rest = spec;
  std::optional<std::string_view> retriever;
  if (auto at = rest.find('@'); at != std::string_view::npos) {
    retriever = rest.substr(at + 1);
    rest = rest.substr(0, at);
  }
  if (auto colon = rest.find(':'); colon != std::string_view::npos) {
    c.mutation = mutation_from_string(rest.substr(colon + 1));
    rest = rest.substr(0, colon);
  }
  c.setting = setting_from_string(rest);
  if (retriever) c.retriever = retriever_from_string(*retriever);
  return c;
}

ExperimentPlan load_experiment_plan(const std::filesystem::path& path) {
  const ConfigDocument doc = ConfigDocument::load(path);
  ExperimentPlan plan;
  try {
    for (const auto& name : doc.get_strings("", "languages")) {
      plan.languages.push_back(language_from_string(name));
    }
    if (plan.languages.empty()) throw ConfigError("experiment file lists no languages");
    plan.include_same_language = doc.get_bool("", "include_same_language").value_or(false);
    plan.embedding_endpoint = doc.get_string("embedding", "endpoint");

    GenerationParams gen;
    gen.endpoint = doc.get_string("generation", "endpoint").value_or("");
    gen.model_name = doc.get_string("generation", "model").value_or("");
    gen.max_tokens = static_cast<int>(doc.get_integer("generation", "max_tokens").value_or(1024));
    gen.temperature = doc.get_number("generation", "temperature").value_or(0.0);
    gen.timeout_s = doc.get_number("generation", "timeout_s").value_or(120.0);

    const auto retriever = doc.get_string("", "retriever");
    const auto k = doc.get_integer("", "k").value_or(3);
    const auto seed = doc.get_integer("", "seed").value_or(static_cast<std::int64_t>(kDefaultSeed));
    const auto budget = doc.get_integer("", "prompt_char_budget");
    if (k < 1) throw ConfigError("k must be at least 1");
    auto settings = doc.get_strings("", "settings");
    if (settings.empty()) settings = {"doc"};
    for (const auto& s : settings) {
      ExperimentConfig c = parse_setting_spec(s);
      if (!c.retriever && retriever && c.setting != Setting::Baseline &&
          c.setting != Setting::Injection) {
        c.retriever = retriever_from_string(*retriever);
      }
      c.k = static_cast<std::size_t>(k);
      c.seed = static_cast<std::uint64_t>(seed);
      c.generation = gen;
      if (budget) c.prompt_char_budget = static_cast<std::size_t>(*budget);
      plan.templates.push_back(normalized(c));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return plan;
}

}  // namespace racg
