#include <gtest/gtest.h>

#include <sstream>

#include "racg/errors.hpp"
#include "racg/experiment.hpp"
#include "support.hpp"

using namespace racg;
using namespace racg::testing;

namespace {

ExperimentConfig cell(Setting setting, Language source, Language target,
                      std::optional<RetrieverKind> retriever = std::nullopt,
                      std::optional<MutationType> mutation = std::nullopt) {
  ExperimentConfig c;
  c.setting = setting;
  if (setting != Setting::Baseline) c.source_language = source;
  c.target_language = target;
  c.retriever = retriever;
  c.mutation = mutation;
  return normalized(c);
}

CellResult fake_cell(std::vector<std::pair<std::string, Verdict>> tasks, Language target = Language::Python) {
  CellResult c;
  c.config.target_language = target;
  for (auto& [id, v] : tasks) {
    TaskRecord t;
    t.instance_id = id;
    t.verdict = v;
    c.per_task.push_back(t);
  }
  c.n_tasks = c.per_task.size();
  c.pass_rate = 100.0 * static_cast<double>(c.passed()) / static_cast<double>(c.n_tasks);
  return c;
}

/// Records every prompt it sees and answers with the echo policy.
class CapturingGenerator : public Generator {
 public:
  explicit CapturingGenerator(Language target) : echo_(target) {}
  std::string generate(const std::string& prompt) override {
    std::lock_guard lock(mutex_);
    prompts.push_back(prompt);
    return echo_.generate(prompt);
  }
  std::vector<std::string> prompts;

 private:
  std::mutex mutex_;
  EchoGenerator echo_;
};

class FailingGenerator : public Generator {
 public:
  std::string generate(const std::string&) override {
    throw GenerationServiceError(500, "backend exploded");
  }
};

class BlankGenerator : public Generator {
 public:
  std::string generate(const std::string&) override { return "   \n"; }
};

}  // namespace

TEST(Config, LabelsAndNormalization) {
  EXPECT_EQ(cell(Setting::Doc, Language::Java, Language::Python).label(), "doc/sparse");
  EXPECT_EQ(cell(Setting::Injection, Language::Java, Language::Python).label(), "injection");
  EXPECT_EQ(cell(Setting::Baseline, Language::Java, Language::Python).label(), "baseline");
  EXPECT_EQ(cell(Setting::Attack, Language::Java, Language::Python, RetrieverKind::Oracle,
                 MutationType::LogicalKeyword)
                .label(),
            "attack-logical/oracle");
  const auto b = cell(Setting::Baseline, Language::Java, Language::Python);
  EXPECT_FALSE(b.source_language);
  EXPECT_EQ(b.template_id(), TemplateId::BaselineV1);
  EXPECT_EQ(cell(Setting::Injection, Language::Java, Language::Python).retriever, RetrieverKind::Oracle);
}

TEST(Config, ValidationRejectsBrokenSettings) {
  ExperimentConfig c;
  c.setting = Setting::Doc;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.source_language = Language::Java;
  c.retriever = RetrieverKind::Sparse;
  EXPECT_NO_THROW(c.validate());
  c.k = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.k = 3;
  c.mutation = MutationType::Syntax;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.setting = Setting::Attack;
  EXPECT_NO_THROW(c.validate());
  c.mutation.reset();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.setting = Setting::Injection;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, SettingSpecs) {
  const auto a = parse_setting_spec("attack:syntax@embedding");
  EXPECT_EQ(a.setting, Setting::Attack);
  EXPECT_EQ(a.mutation, MutationType::Syntax);
  EXPECT_EQ(a.retriever, RetrieverKind::Embedding);
  EXPECT_EQ(parse_setting_spec("docnonl@bm25").retriever, RetrieverKind::Sparse);
  EXPECT_THROW(parse_setting_spec("magic"), std::invalid_argument);
}

TEST(Stats, PublishedBaselineRow) {
  const std::vector<double> row = {54.27, 42.68, 61.79, 58.33, 59.35};
  const Stats s = aggregate_stats(row);
  EXPECT_NEAR(s.mean, 55.28, 0.005);
  EXPECT_NEAR(s.std, 7.55, 0.01);
  const Stats p = aggregate_stats(row, StdConvention::Population);
  EXPECT_NEAR(p.std, 7.55 * std::sqrt(4.0 / 5.0), 0.01);
  const std::vector<double> one = {12.0};
  EXPECT_EQ(aggregate_stats(one).std, 0.0);
  EXPECT_EQ(aggregate_stats(one, StdConvention::Population).std, 0.0);
  EXPECT_THROW(aggregate_stats(std::span<const double>{}), EmptySelection);
}

TEST(Stats, DeltaAgainstBaseline) {
  const DeltaCell d = delta(95.85, 55.28);
  EXPECT_NEAR(d.absolute, 40.57, 1e-9);
  EXPECT_NEAR(*d.relative, 73.0, 1.0);
  EXPECT_FALSE(delta(10.0, 0.0).relative);
}

TEST(Stats, DeltaTableMeans) {
  ResultsTable r;
  r.baseline[Language::Python] = fake_cell({{"a", Verdict::Pass}, {"b", Verdict::TestFailure}});
  r.baseline[Language::Java] = fake_cell({{"a", Verdict::TestFailure}, {"b", Verdict::TestFailure}}, Language::Java);
  auto add = [&](Language s, Language t, double rate) {
    CellResult c = fake_cell({{"a", Verdict::Pass}}, t);
    c.pass_rate = rate;
    c.config.source_language = s;
    r.cells[{"doc/sparse", s, t}] = c;
  };
  add(Language::Java, Language::Python, 80);
  add(Language::Cpp, Language::Python, 60);
  add(Language::Python, Language::Java, 20);
  const DeltaTable t = delta_table(r, "doc/sparse");
  EXPECT_NEAR(t.cells.at({Language::Java, Language::Python}).absolute, 30.0, 1e-12);
  EXPECT_NEAR(*t.cells.at({Language::Java, Language::Python}).relative, 60.0, 1e-12);
  EXPECT_FALSE(t.cells.at({Language::Python, Language::Java}).relative);
  EXPECT_NEAR(t.column_means.at(Language::Python), 20.0, 1e-12);
  EXPECT_NEAR(t.grand_mean, (30.0 + 10.0 + 20.0) / 3.0, 1e-12);

  r.baseline.erase(Language::Java);
  EXPECT_THROW(delta_table(r, "doc/sparse"), MissingBaseline);
}

TEST(Categories, CountsAndPositiveNoise) {
  const auto base = fake_cell({{"1", Verdict::TestFailure}, {"2", Verdict::Pass}, {"3", Verdict::TestFailure}});
  const auto clean = fake_cell({{"1", Verdict::TestFailure}, {"2", Verdict::Pass}, {"3", Verdict::Pass}});
  const auto attack = fake_cell({{"1", Verdict::Pass}, {"2", Verdict::TestFailure}, {"3", Verdict::TestFailure}});
  const auto cats = categorize_perturbation_effects(attack, clean, base);
  EXPECT_EQ(cats.counts.size(), 8u);
  EXPECT_EQ(cats.per_task.at("1"), "FFP");
  EXPECT_EQ(cats.per_task.at("2"), "PPF");
  EXPECT_EQ(cats.per_task.at("3"), "FPF");
  EXPECT_EQ(cats.positive_noise(), 1u);
  std::size_t total = 0;
  for (const auto& [_, n] : cats.counts) total += n;
  EXPECT_EQ(total, 3u);
  const auto short_cell = fake_cell({{"1", Verdict::Pass}});
  EXPECT_THROW(categorize_perturbation_effects(short_cell, clean, base), TaskSetMismatch);
}

// --- run_cell --------------------------------------------------------------

TEST(RunCell, InjectionEchoPassesAndAttackDrops) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances(Language::Python);
  FakeExecutor exec(corpus);
  EchoGenerator gen(Language::Python);
  PipelineServices svc{&gen, &exec, nullptr, nullptr, 4};
  const CellResult clean = run_cell(cell(Setting::Injection, Language::Python, Language::Python), corpus, inst, svc);
  EXPECT_EQ(clean.n_tasks, 50u);
  EXPECT_EQ(clean.pass_rate, 100.0);
  for (std::size_t i = 1; i < clean.per_task.size(); ++i) {
    EXPECT_LT(clean.per_task[i - 1].instance_id, clean.per_task[i].instance_id);
  }
  const auto attack_cfg = cell(Setting::Attack, Language::Python, Language::Python, RetrieverKind::Oracle,
                               MutationType::LogicalKeyword);
  const CellResult attacked = run_cell(attack_cfg, corpus, inst, svc, &clean);
  EXPECT_LT(attacked.pass_rate, clean.pass_rate);
  for (std::size_t i = 0; i < attacked.per_task.size(); ++i) {
    const auto& t = attacked.per_task[i];
    EXPECT_EQ(t.retrieved, clean.per_task[i].retrieved);
    ASSERT_EQ(t.perturbations.size(), t.retrieved.size());
    for (const auto& p : t.perturbations) {
      EXPECT_TRUE(p.applied);
      EXPECT_TRUE(p.site);
    }
  }
}

TEST(RunCell, SparseDocCellRecordsRetrieval) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances(Language::Java);
  FakeExecutor exec(corpus);
  CapturingGenerator gen(Language::Java);
  PipelineServices svc{&gen, &exec, nullptr, nullptr, 2};
  auto cfg = cell(Setting::Doc, Language::Python, Language::Java);
  cfg.k = 2;
  const CellResult r = run_cell(cfg, corpus, inst, svc);
  for (const auto& t : r.per_task) {
    EXPECT_EQ(t.retrieved.size(), 2u);
    for (const auto& id : t.retrieved) EXPECT_EQ(id.rfind("python/", 0), 0u);
    EXPECT_EQ(t.prompt_hash.size(), 16u);
    EXPECT_FALSE(t.extraction.empty());
  }
  ASSERT_FALSE(gen.prompts.empty());
  EXPECT_NE(gen.prompts[0].find("Reference 2 (Python)"), std::string::npos);
}

TEST(RunCell, DocNoNlPromptsCarryNoComments) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances(Language::Java);
  FakeExecutor exec(corpus);
  CapturingGenerator gen(Language::Java);
  PipelineServices svc{&gen, &exec, nullptr, nullptr, 2};
  run_cell(cell(Setting::DocNoNL, Language::Python, Language::Java), corpus, inst, svc);
  for (const auto& p : gen.prompts) {
    const std::string refs = p.substr(p.find("Reference 1"), p.find("Task:") - p.find("Reference 1"));
    EXPECT_EQ(refs.find("\n# "), std::string::npos);
  }
}

TEST(RunCell, EmbeddingCellThroughHttpService) {
  MockEmbeddingService service;
  HttpEmbeddingClient client(service.url(), HttpEmbeddingOptions{16, 2, 10.0, std::nullopt});
  EmbeddingStore store;
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances(Language::Python);
  FakeExecutor exec(corpus);
  EchoGenerator gen(Language::Python);
  PipelineServices svc{&gen, &exec, &client, &store, 4};
  const auto r = run_cell(cell(Setting::Doc, Language::Python, Language::Python, RetrieverKind::Embedding),
                          corpus, inst, svc);
  EXPECT_EQ(r.n_tasks, 50u);
  EXPECT_GT(r.pass_rate, 0.0);
  EXPECT_EQ(store.size(), 100u);
  const int after_first = service.requests.load();
  run_cell(cell(Setting::Doc, Language::Python, Language::Python, RetrieverKind::Embedding), corpus, inst, svc);
  // Documents come from the store; only query texts are embedded again.
  EXPECT_EQ(service.requests.load() - after_first, 50);
}

TEST(RunCell, ErrorsNameTheFamily) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances(Language::Python);
  FakeExecutor exec(corpus);
  FailingGenerator gen;
  PipelineServices svc{&gen, &exec, nullptr, nullptr, 1};
  try {
    run_cell(cell(Setting::Baseline, Language::Python, Language::Python), corpus, inst, svc);
    FAIL() << "expected GenerationServiceError";
  } catch (const GenerationServiceError& e) {
    EXPECT_EQ(e.status(), 500);
    EXPECT_NE(std::string(e.what()).find("family "), std::string::npos);
  }
  BlankGenerator blank;
  PipelineServices svc2{&blank, &exec, nullptr, nullptr, 1};
  const auto r = run_cell(cell(Setting::Baseline, Language::Python, Language::Python), corpus, inst, svc2);
  EXPECT_EQ(r.pass_rate, 0.0);
  EXPECT_EQ(r.per_task[0].verdict, Verdict::TestFailure);
  EXPECT_EQ(r.per_task[0].note, "empty response");

  // The utility families have no golden documents.
  std::vector<CodeInstance> orphan = {inst[0]};
  orphan[0].family_id = "util_00";
  EchoGenerator echo(Language::Python);
  PipelineServices svc3{&echo, &exec, nullptr, nullptr, 1};
  EXPECT_THROW(run_cell(cell(Setting::Injection, Language::Java, Language::Python), corpus, orphan, svc3),
               MissingGolden);
  EXPECT_THROW(run_cell(cell(Setting::Baseline, Language::Java, Language::Python), corpus,
                        std::span<const CodeInstance>{}, svc3),
               EmptySelection);
}

TEST(Serialization, CellRoundTrip) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances(Language::Python);
  FakeExecutor exec(corpus);
  EchoGenerator gen(Language::Python);
  PipelineServices svc{&gen, &exec, nullptr, nullptr, 4};
  const auto clean = run_cell(cell(Setting::Injection, Language::Java, Language::Python), corpus, inst, svc);
  const auto attack = run_cell(cell(Setting::Attack, Language::Java, Language::Python, RetrieverKind::Oracle,
                                    MutationType::Lexicon),
                               corpus, inst, svc, &clean);
  EXPECT_EQ(cell_from_json(cell_to_json(attack)), attack);
  EXPECT_EQ(cell_to_json(cell_from_json(cell_to_json(attack))), cell_to_json(attack));
}

TEST(CacheKey, SensitiveToInputs) {
  const Corpus corpus = fixture_corpus();
  auto inst = fixture_instances(Language::Python);
  const auto cfg = cell(Setting::Doc, Language::Java, Language::Python);
  const std::string key = cell_cache_key(cfg, corpus, inst);
  EXPECT_EQ(key, cell_cache_key(cfg, corpus, inst));
  auto reversed = inst;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(key, cell_cache_key(cfg, corpus, reversed));
  auto other = cfg;
  other.k = 5;
  EXPECT_NE(key, cell_cache_key(other, corpus, inst));
  other = cfg;
  other.seed = 7;
  EXPECT_NE(key, cell_cache_key(other, corpus, inst));
  inst[0].test_cases += "\n";
  EXPECT_NE(key, cell_cache_key(cfg, corpus, inst));
  EXPECT_NE(key, cell_cache_key(cfg, make_variant(corpus, CorpusVariant::DocNoNL), fixture_instances(Language::Python)));
}

// --- matrix ----------------------------------------------------------------

namespace {

struct MatrixRun {
  ResultsTable results;
  std::string csv;
  std::string md;
  int generations = 0;
};

MatrixRun run_fixture_matrix(const std::optional<std::filesystem::path>& cache,
                             std::optional<std::uint64_t> shuffle = std::nullopt) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances();
  FakeExecutor exec(corpus);
  EchoGenerator gen(Language::Python, half_known(inst));
  HashEmbedder embedder;
  EmbeddingStore store;
  PipelineServices svc{&gen, &exec, &embedder, &store, 4};
  const std::vector<ExperimentConfig> templates = {
      parse_setting_spec("baseline"), parse_setting_spec("injection"), parse_setting_spec("doc@sparse"),
      parse_setting_spec("docnonl@embedding"), parse_setting_spec("attack:logical@oracle"),
      parse_setting_spec("attack:syntax@sparse")};
  const std::vector<Language> langs = {Language::Python, Language::Java, Language::Cpp};
  MatrixOptions opts;
  opts.cache_dir = cache;
  opts.shuffle_seed = shuffle;
  MatrixRun out;
  out.results = run_matrix(templates, langs, corpus, inst, svc, opts);
  std::ostringstream csv;
  std::ostringstream md;
  write_csv_report(out.results, csv);
  write_markdown_report(out.results, md);
  out.csv = csv.str();
  out.md = md.str();
  out.generations = gen.calls.load();
  return out;
}

}  // namespace

TEST(Matrix, ShapeAndCleanPairing) {
  const auto run = run_fixture_matrix(std::nullopt);
  const auto& r = run.results;
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.baseline.size(), 3u);
  // injection, doc/sparse, docnonl/embedding, two attacks: 6 off-diagonal pairs each.
  EXPECT_EQ(r.cells.size(), 5u * 6u);
  EXPECT_EQ(r.labels(), (std::vector<std::string>{"attack-logical/oracle", "attack-syntax/sparse",
                                                  "doc/sparse", "docnonl/embedding", "injection"}));
  for (const auto& [key, c] : r.cells) {
    if (key.label != "attack-syntax/sparse") continue;
    const auto& clean = r.cells.at({"doc/sparse", key.source, key.target});
    for (std::size_t i = 0; i < c.per_task.size(); ++i) {
      EXPECT_EQ(c.per_task[i].retrieved, clean.per_task[i].retrieved);
    }
  }
  EXPECT_NEAR(r.baseline.at(Language::Python).pass_rate, 50.0, 1e-9);
  const auto cats = categorize_all(r);
  EXPECT_EQ(cats.size(), 12u);
  EXPECT_NE(run.md.find("## attack-logical/oracle"), std::string::npos);
  EXPECT_NE(run.csv.find("label,setting,retriever,mutation,source,target"), std::string::npos);
}

TEST(Matrix, ReportsAreByteStableAcrossRunsAndOrders) {
  const auto a = run_fixture_matrix(std::nullopt);
  const auto b = run_fixture_matrix(std::nullopt);
  const auto c = run_fixture_matrix(std::nullopt, 17);
  const auto d = run_fixture_matrix(std::nullopt, 99);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.md, b.md);
  EXPECT_EQ(a.csv, c.csv);
  EXPECT_EQ(a.md, c.md);
  EXPECT_EQ(a.md, d.md);
}

TEST(Matrix, ResumesFromCache) {
  TempDir tmp;
  const auto first = run_fixture_matrix(tmp.path());
  EXPECT_TRUE(first.results.cache_hits.empty());
  const auto second = run_fixture_matrix(tmp.path(), 5);
  EXPECT_EQ(second.generations, 0);
  EXPECT_EQ(second.results.cache_hits.size(), first.results.cells.size() + first.results.baseline.size());
  EXPECT_EQ(second.csv, first.csv);
  EXPECT_EQ(second.md, first.md);
  // No temp files are left behind.
  for (const auto& e : std::filesystem::directory_iterator(tmp.path())) {
    EXPECT_EQ(e.path().extension(), ".json") << e.path();
  }
  // Deleting one cell file reruns exactly that cell.
  std::filesystem::remove(std::filesystem::directory_iterator(tmp.path())->path());
  const auto third = run_fixture_matrix(tmp.path());
  EXPECT_EQ(third.results.cache_hits.size(), second.results.cache_hits.size() - 1);
  EXPECT_EQ(third.csv, first.csv);
}

TEST(Matrix, FailedCellsAreRecordedAndOthersRun) {
  const Corpus corpus = fixture_corpus();
  const auto inst = fixture_instances();
  FakeExecutor exec(corpus);
  EchoGenerator gen(Language::Python);
  PipelineServices svc{&gen, &exec, nullptr, nullptr, 2};  // no embedder
  const std::vector<ExperimentConfig> templates = {parse_setting_spec("doc@embedding"),
                                                   parse_setting_spec("doc@sparse")};
  const std::vector<Language> langs = {Language::Python, Language::Java};
  std::vector<std::string> log;
  MatrixOptions opts;
  opts.log = [&](const std::string& m) { log.push_back(m); };
  const auto r = run_matrix(templates, langs, corpus, inst, svc, opts);
  EXPECT_EQ(r.failures.size(), 2u);
  EXPECT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.baseline.size(), 2u);
  std::ostringstream md;
  write_markdown_report(r, md);
  EXPECT_NE(md.str().find("## Failed cells"), std::string::npos);
  EXPECT_FALSE(log.empty());
}

TEST(Matrix, ResultsJsonRoundTrip) {
  const auto run = run_fixture_matrix(std::nullopt);
  const ResultsTable back = results_from_json(results_to_json(run.results));
  std::ostringstream csv;
  write_csv_report(back, csv);
  EXPECT_EQ(csv.str(), run.csv);
  EXPECT_EQ(back.cells, run.results.cells);
}

TEST(Reports, CsvFormatting) {
  ResultsTable r;
  r.baseline[Language::Python] = fake_cell({{"a", Verdict::Pass}, {"b", Verdict::TestFailure}});
  r.baseline[Language::Python].config = cell(Setting::Baseline, Language::Python, Language::Python);
  CellResult c = fake_cell({{"a", Verdict::Pass}, {"b", Verdict::Pass}});
  c.config = cell(Setting::Doc, Language::Java, Language::Python);
  r.cells[{"doc/sparse", Language::Java, Language::Python}] = c;
  std::ostringstream out;
  write_csv_report(r, out);
  const std::string csv = out.str();
  EXPECT_NE(csv.find("doc/sparse,doc,sparse,,java,python,3,42,2,2,100.0000,50.0000,50.0000,100.0000"),
            std::string::npos)
      << csv;
  std::ostringstream cats;
  CaseCategories cc;
  cc.mutation = MutationType::Syntax;
  cc.counts = {{"FFP", 2}};
  const CaseCategories list[] = {cc};
  write_category_csv(list, cats);
  EXPECT_EQ(cats.str(), "mutation,category,count\nsyntax,FFP,2\n");
}

TEST(Plan, LoadsExperimentFile) {
  TempDir tmp;
  {
    std::ofstream f(tmp.path() / "plan.toml");
    f << "settings = [\"baseline\", \"doc\", \"attack:logical@oracle\"]\nlanguages = [\"python\", \"java\"]\n"
         "retriever = \"embedding\"\nk = 2\nseed = 7\n\n[generation]\nendpoint = \"http://127.0.0.1:9\"\n"
         "model = \"m\"\nmax_tokens = 64\n\n[embedding]\nendpoint = \"http://127.0.0.1:8\"\n";
  }
  const auto plan = load_experiment_plan(tmp.path() / "plan.toml");
  ASSERT_EQ(plan.templates.size(), 3u);
  EXPECT_EQ(plan.templates[1].retriever, RetrieverKind::Embedding);
  EXPECT_EQ(plan.templates[2].retriever, RetrieverKind::Oracle);
  EXPECT_EQ(plan.templates[1].k, 2u);
  EXPECT_EQ(plan.templates[1].seed, 7u);
  EXPECT_EQ(plan.templates[0].generation.max_tokens, 64);
  EXPECT_EQ(plan.languages.size(), 2u);
  EXPECT_EQ(plan.embedding_endpoint, "http://127.0.0.1:8");
  {
    std::ofstream f(tmp.path() / "bad.toml");
    f << "settings = [\"nonsense\"]\nlanguages = [\"python\"]\n";
  }
  EXPECT_THROW(load_experiment_plan(tmp.path() / "bad.toml"), ConfigError);
}
