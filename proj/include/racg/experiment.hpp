#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "racg/corpus.hpp"
#include "racg/execute.hpp"
#include "racg/generate.hpp"
#include "racg/language.hpp"
#include "racg/mutate.hpp"
#include "racg/retrieve.hpp"

namespace racg {

enum class Setting { Baseline, Injection, Doc, DocNoNL, Attack };
enum class RetrieverKind { Oracle, Sparse, Embedding };

/// "baseline", "injection", "doc", "docnonl", "attack".
std::string_view to_string(Setting setting);
Setting setting_from_string(std::string_view name);
/// "oracle", "sparse", "embedding".
std::string_view to_string(RetrieverKind kind);
RetrieverKind retriever_from_string(std::string_view name);

struct ExperimentConfig {
  Setting setting = Setting::Doc;
  std::optional<Language> source_language;
  Language target_language = Language::Python;
  std::size_t k = 3;
  std::uint64_t seed = kDefaultSeed;
  std::optional<MutationType> mutation;
  std::optional<RetrieverKind> retriever;
  GenerationParams generation;
  /// Character budget for the prompt; unlimited when unset.
  std::optional<std::size_t> prompt_char_budget;

  /// Throws std::invalid_argument when the setting's invariants are broken.
  void validate() const;
  TemplateId template_id() const;
  /// Short label naming the setting and mutation, e.g. "attack-logical".
  std::string label() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Fills in the setting's implied fields: Injection forces the oracle
/// retriever, Baseline drops source and retriever, retrieval settings
/// default to the sparse retriever.
ExperimentConfig normalized(ExperimentConfig config);

struct PerturbationNote {
  std::string doc_id;
  bool applied = false;
  std::optional<MutationSite> site;
  std::string replacement;

  bool operator==(const PerturbationNote&) const = default;
};

struct TaskRecord {
  std::string instance_id;
  std::string family_id;
  Verdict verdict = Verdict::SandboxError;
  std::vector<std::string> retrieved;
  std::vector<PerturbationNote> perturbations;
  std::size_t dropped_context = 0;
  std::string extraction;
  std::string prompt_hash;
  std::string response_hash;
  /// Set when an infrastructure-independent failure decided the verdict.
  std::string note;

  bool operator==(const TaskRecord&) const = default;
};

struct CellResult {
  ExperimentConfig config;
  double pass_rate = 0.0;
  std::size_t n_tasks = 0;
  std::vector<TaskRecord> per_task;

  std::size_t passed() const;
  bool operator==(const CellResult&) const = default;
};

/// Everything a cell needs besides its inputs. Pointers are borrowed.
struct PipelineServices {
  Generator* generator = nullptr;
  Executor* executor = nullptr;
  EmbeddingClient* embedder = nullptr;
  EmbeddingStore* embedding_store = nullptr;
  std::size_t jobs = 1;
};

/// Runs one cell. Attack cells perturb the documents recorded in `clean`
/// (a retrieval cell with the same source/target); without it the clean
/// retrieval is recomputed on the Doc variant.
CellResult run_cell(const ExperimentConfig& config, const Corpus& corpus,
                    std::span<const CodeInstance> instances, PipelineServices& services,
                    const CellResult* clean = nullptr);

struct CellKey {
  std::string label;
  Language source = Language::Python;
  Language target = Language::Python;

  auto operator<=>(const CellKey&) const = default;
};

struct CellFailure {
  CellKey key;
  std::string message;

  bool operator==(const CellFailure&) const = default;
};

struct ResultsTable {
  std::map<Language, CellResult> baseline;
  std::map<CellKey, CellResult> cells;
  std::vector<CellFailure> failures;
  /// Cells restored from the cache instead of being run.
  std::vector<CellKey> cache_hits;

  std::vector<std::string> labels() const;
};

struct DeltaCell {
  double pass_rate = 0.0;
  double baseline = 0.0;
  double absolute = 0.0;
  /// Unset when the baseline is 0.
  std::optional<double> relative;
};

struct DeltaTable {
  std::string label;
  std::vector<Language> sources;
  std::vector<Language> targets;
  std::map<std::pair<Language, Language>, DeltaCell> cells;
  std::map<Language, double> row_means;
  std::map<Language, double> column_means;
  double grand_mean = 0.0;
};

/// Deltas of the cells carrying `label` against the baselines. Throws
/// MissingBaseline when a target has no baseline.
DeltaTable delta_table(const ResultsTable& results, const std::string& label);

/// Absolute and relative change of one pass rate against a baseline.
DeltaCell delta(double pass_rate, double baseline);

enum class StdConvention { Sample, Population };

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and standard deviation of pass rates. A single value has std 0
/// under either convention. Throws EmptySelection on no input.
Stats aggregate_stats(std::span<const double> pass_rates,
                      StdConvention convention = StdConvention::Sample);
Stats aggregate_stats(std::span<const CellResult> cells,
                      StdConvention convention = StdConvention::Sample);

struct CaseCategories {
  std::optional<MutationType> mutation;
  /// Category name -> count; names are three letters (P/F) for baseline,
  /// clean and perturbed, e.g. "FFP" is positive noise.
  std::map<std::string, std::size_t> counts;
  std::map<std::string, std::string> per_task;  // instance_id -> category

  std::size_t positive_noise() const;
};

inline constexpr const char* kPositiveNoise = "FFP";

/// Throws TaskSetMismatch unless the three cells cover the same tasks.
CaseCategories categorize_perturbation_effects(const CellResult& attack, const CellResult& clean,
                                               const CellResult& baseline);

struct MatrixOptions {
  /// Completed cells are persisted here and reused on restart.
  std::optional<std::filesystem::path> cache_dir;
  bool include_same_language = false;
  /// Runs cells in a shuffled order; results do not depend on it.
  std::optional<std::uint64_t> shuffle_seed;
  /// Progress and cache-hit messages.
  std::function<void(const std::string&)> log;
};

/// Runs the baselines for every target, then every template over the
/// language pairs. Per-cell errors are recorded and the rest still run.
ResultsTable run_matrix(std::span<const ExperimentConfig> templates,
                        std::span<const Language> languages, const Corpus& corpus,
                        std::span<const CodeInstance> instances, PipelineServices& services,
                        const MatrixOptions& options = {});

/// Cache key over config, corpus and instance content, and template.
std::string cell_cache_key(const ExperimentConfig& config, const Corpus& corpus,
                           std::span<const CodeInstance> instances);

// --- Serialization and reports ---------------------------------------------

std::string cell_to_json(const CellResult& cell);
CellResult cell_from_json(const std::string& text);

/// Whole-matrix snapshot used by the `report` subcommand.
std::string results_to_json(const ResultsTable& results);
ResultsTable results_from_json(const std::string& text);

/// Category counts for every attack cell whose clean cell and baseline are
/// present, one entry per attack cell in key order.
std::vector<CaseCategories> categorize_all(const ResultsTable& results);

/// One row per cell and baseline, with absolute and relative deltas.
void write_csv_report(const ResultsTable& results, std::ostream& out);
/// Per label: source rows x target columns with signed deltas.
void write_markdown_report(const ResultsTable& results, std::ostream& out);
/// One JSON object per task per cell.
void write_audit_log(const ResultsTable& results, std::ostream& out);
/// mutation,category,count rows.
void write_category_csv(std::span<const CaseCategories> categories, std::ostream& out);

/// Experiment file: top-level keys `settings` (e.g. ["doc", "attack:logical"]),
/// `languages`, `retriever`, `k`, `seed`, `include_same_language`,
/// `prompt_char_budget`, plus `[generation]` (endpoint, model, max_tokens,
/// temperature, timeout_s) and `[embedding]` (endpoint).
struct ExperimentPlan {
  std::vector<ExperimentConfig> templates;
  std::vector<Language> languages;
  bool include_same_language = false;
  std::optional<std::string> embedding_endpoint;
};

ExperimentPlan load_experiment_plan(const std::filesystem::path& path);
/// Parses "attack:logical", "doc", ... into a template.
ExperimentConfig parse_setting_spec(std::string_view spec);

}  // namespace racg
