#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "racg/corpus.hpp"
#include "racg/language.hpp"

namespace racg {

enum class Verdict { Pass, CompileError, RuntimeError, TestFailure, Timeout, SandboxError };

std::string_view to_string(Verdict verdict);
Verdict verdict_from_string(std::string_view name);

struct ExecutionResult {
  Verdict verdict = Verdict::SandboxError;
  std::string stdout_tail;
  std::string stderr_tail;
  double wall_time_s = 0.0;
};

/// How to build and run programs of one language. Command templates are
/// split on whitespace and may use `{workdir}`, `{file}` (the primary source
/// file), `{files}` (all source files) and `{stem}`.
struct LanguageRunner {
  Language language = Language::Python;
  std::optional<std::string> compile_cmd;
  std::string run_cmd;
  std::string file_name;
  /// Set for languages that keep the harness in its own file.
  std::optional<std::string> harness_file_name;
  double timeout_s = 10.0;
  double compile_timeout_s = 60.0;
  /// stderr/stdout substrings that identify an assertion failure, as opposed
  /// to a crash.
  std::vector<std::string> failure_markers;
};

class RunnerRegistry {
 public:
  /// Built-in command templates for all 13 languages.
  static RunnerRegistry defaults();
  /// Reads a TOML-style file with one `[language]` table per runner; tables
  /// override the defaults field by field.
  static RunnerRegistry from_file(const std::filesystem::path& path);

  const LanguageRunner* find(Language language) const;
  void set(LanguageRunner runner);

  /// Whether every external tool named by the runner's templates is on PATH.
  bool toolchain_available(Language language) const;
  /// Availability for every registered language.
  std::map<Language, bool> probe() const;

 private:
  std::map<Language, LanguageRunner> runners_;
};

struct SourceFile {
  std::string name;
  std::string content;

  bool operator==(const SourceFile&) const = default;
};

using SourceFiles = std::vector<SourceFile>;

/// Lays out candidate code plus the instance's tests the way the runner
/// expects. Output is a pure function of the inputs.
SourceFiles assemble_program(std::string_view code, const CodeInstance& instance,
                             const LanguageRunner& runner);

struct SandboxOptions {
  /// Parent of the per-run private working directories.
  std::filesystem::path scratch_root = std::filesystem::temp_directory_path();
  std::size_t capture_bytes = 4096;
  bool keep_workdir = false;
};

/// Compiles (when the runner has a compile step) and runs the program in a
/// private temporary directory with bounded time and output.
ExecutionResult run_tests(const SourceFiles& files, const LanguageRunner& runner,
                          const SandboxOptions& options = {});

/// Unbiased pass@k estimator 1 - C(n-c, k) / C(n, k). Throws DomainError
/// unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

/// Execution interface used by dataset verification and experiments.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual ExecutionResult execute(std::string_view code, const CodeInstance& instance) = 0;
};

/// Runs programs on this machine through a RunnerRegistry. Throws
/// SandboxUnavailable when the language's toolchain is missing.
class LocalExecutor : public Executor {
 public:
  explicit LocalExecutor(RunnerRegistry registry = RunnerRegistry::defaults(),
                         SandboxOptions options = {});
  ExecutionResult execute(std::string_view code, const CodeInstance& instance) override;
  const RunnerRegistry& registry() const { return registry_; }

 private:
  RunnerRegistry registry_;
  SandboxOptions options_;
};

struct ExecutionLogEntry {
  std::string task_id;
  Language language = Language::Python;
  Verdict verdict = Verdict::SandboxError;
  double wall_time_s = 0.0;
};

/// One JSON object per line: {task_id, language, verdict, wall_time}.
void write_execution_log(std::ostream& out, std::span<const ExecutionLogEntry> entries);

}  // namespace racg
