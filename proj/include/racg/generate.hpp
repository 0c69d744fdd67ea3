#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "racg/language.hpp"

namespace racg {

enum class TemplateId { RacgV1, BaselineV1 };

/// "racg_v1" / "baseline_v1".
std::string_view to_string(TemplateId id);
TemplateId template_from_string(std::string_view name);

struct ContextDoc {
  Language language = Language::Python;
  std::string text;
};

struct PromptSpec {
  std::string query_text;
  Language target_language = Language::Python;
  std::vector<ContextDoc> context_docs;
  TemplateId template_id = TemplateId::RacgV1;
};

/// Throws std::invalid_argument when the context does not match the
/// template (baseline_v1 takes none, racg_v1 at least one).
std::string build_prompt(const PromptSpec& spec);

struct BuiltPrompt {
  std::string text;
  /// Context documents dropped from the tail to fit the budget.
  std::size_t dropped_docs = 0;
};

/// build_prompt, dropping lowest-ranked context docs until the prompt fits
/// in `char_budget` characters. racg_v1 always keeps its first doc.
BuiltPrompt build_prompt_within(PromptSpec spec, std::optional<std::size_t> char_budget);

struct GenerationParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string model_name;
  std::string endpoint;
  double timeout_s = 120.0;

  bool operator==(const GenerationParams&) const = default;
};

class Generator {
 public:
  virtual ~Generator() = default;
  /// Raw completion text for one prompt.
  virtual std::string generate(const std::string& prompt) = 0;
};

/// OpenAI-compatible chat-completions client. Each exchange is appended to
/// the audit stream (when given) as one JSON line with content hashes; the
/// API key never appears in logs or error messages.
class HttpChatGenerator : public Generator {
 public:
  /// `api_key` defaults to $GENERATION_API_KEY.
  explicit HttpChatGenerator(GenerationParams params, std::optional<std::string> api_key = {},
                             std::ostream* audit = nullptr);
  std::string generate(const std::string& prompt) override;

  /// The JSON request body for a prompt.
  std::string request_body(const std::string& prompt) const;

 private:
  GenerationParams params_;
  std::string api_key_;
  std::ostream* audit_;
  std::mutex audit_mutex_;
  std::atomic<std::uint64_t> next_id_{0};
};

/// One-shot convenience over HttpChatGenerator.
std::string generate_code(const GenerationParams& params, const std::string& prompt);

enum class ExtractionMethod { FencedTagged, FencedUntagged, WholeResponse };

std::string_view to_string(ExtractionMethod method);

struct GenerationOutcome {
  std::string raw_response;
  std::optional<std::string> extracted_code;
  ExtractionMethod extraction_method = ExtractionMethod::WholeResponse;
};

/// First fenced block tagged with the target language, else the first
/// fenced block, else the trimmed response. Block contents run from the
/// line after the opening fence up to the closing fence line. Throws
/// EmptyResponse on whitespace-only input.
GenerationOutcome extract_code(std::string_view response, Language target_language);

}  // namespace racg
