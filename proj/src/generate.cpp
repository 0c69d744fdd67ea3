#include "racg/generate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <stdexcept>

#include "racg/errors.hpp"
#include "racg/hash.hpp"
#include "racg/http.hpp"

namespace racg {

std::string_view to_string(TemplateId id) {
  return id == TemplateId::RacgV1 ? "racg_v1" : "baseline_v1";
}

TemplateId template_from_string(std::string_view name) {
  if (name == "racg_v1") return TemplateId::RacgV1;
  if (name == "baseline_v1") return TemplateId::BaselineV1;
  throw std::invalid_argument("unknown prompt template: " + std::string(name));
}

namespace {

/// A backtick fence longer than any backtick run inside `text`.
std::string fence_for(std::string_view text) {
  std::size_t longest = 0;
  std::size_t run = 0;
  for (char c : text) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

void append_block(std::string& out, std::string_view tag, std::string_view text) {
  const std::string fence = fence_for(text);
  out += fence;
  out += tag;
  out += '\n';
  out += text;
  if (text.empty() || text.back() != '\n') out += '\n';
  out += fence;
  out += '\n';
}

}  // namespace

std::string build_prompt(const PromptSpec& spec) {
  if (spec.template_id == TemplateId::BaselineV1 && !spec.context_docs.empty()) {
    throw std::invalid_argument("baseline_v1 prompts take no context documents");
  }
  if (spec.template_id == TemplateId::RacgV1 && spec.context_docs.empty()) {
    throw std::invalid_argument("racg_v1 prompts need at least one context document");
  }
  const std::string lang(display_name(spec.target_language));
  const std::string tag(fence_tag(spec.target_language));
  std::string out;
  out += "You are an expert " + lang + " programmer. Solve the task below in " + lang + ".\n\n";
  if (spec.template_id == TemplateId::RacgV1) {
    out += "The following code documents were retrieved as references. They may be written in a "
           "different programming language.\n\n";
    for (std::size_t i = 0; i < spec.context_docs.size(); ++i) {
      const ContextDoc& doc = spec.context_docs[i];
      out += "Reference " + std::to_string(i + 1) + " (" + std::string(display_name(doc.language)) +
             "):\n";
      append_block(out, fence_tag(doc.language), doc.text);
      out += '\n';
    }
  }
  out += "Task:\n";
  out += spec.query_text;
  if (spec.query_text.empty() || spec.query_text.back() != '\n') out += '\n';
  out += "\nAnswer with a single fenced code block in " + lang + " (```" + tag +
         ") containing the complete solution.\n";
  return out;
}

BuiltPrompt build_prompt_within(PromptSpec spec, std::optional<std::size_t> char_budget) {
  BuiltPrompt out;
  out.text = build_prompt(spec);
  if (!char_budget) return out;
  const std::size_t keep_min = spec.template_id == TemplateId::RacgV1 ? 1 : 0;
  while (out.text.size() > *char_budget && spec.context_docs.size() > keep_min) {
    spec.context_docs.pop_back();
    ++out.dropped_docs;
    out.text = build_prompt(spec);
  }
  return out;
}

// --- HTTP generator --------------------------------------------------------

HttpChatGenerator::HttpChatGenerator(GenerationParams params, std::optional<std::string> api_key,
                                     std::ostream* audit)
    : params_(std::move(params)), audit_(audit) {
  if (params_.temperature < 0) throw std::invalid_argument("temperature must be non-negative");
  if (api_key) {
    api_key_ = *api_key;
  } else if (const char* env = std::getenv("GENERATION_API_KEY")) {
    api_key_ = env;
  }
}

std::string HttpChatGenerator::request_body(const std::string& prompt) const {
  const nlohmann::json body = {
      {"model", params_.model_name},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", params_.temperature},
      {"max_tokens", params_.max_tokens},
      {"n", 1},
  };
  return body.dump();
}

std::string HttpChatGenerator::generate(const std::string& prompt) {
  const std::uint64_t id = next_id_.fetch_add(1);
  std::map<std::string, std::string> headers;
  if (!api_key_.empty()) headers["Authorization"] = "Bearer " + api_key_;
  const HttpResponse res =
      post_json(params_.endpoint, "/chat/completions", request_body(prompt), headers,
                params_.timeout_s);

  auto audit = [&](const std::string& outcome, const std::string& content) {
    if (audit_ == nullptr) return;
    const nlohmann::json line = {{"correlation_id", id},
                                 {"model", params_.model_name},
                                 {"prompt_hash", to_hex(fnv1a64(prompt))},
                                 {"response_hash", to_hex(fnv1a64(content))},
                                 {"status", res.status},
                                 {"outcome", redact(outcome, api_key_)}};
    std::lock_guard lock(audit_mutex_);
    *audit_ << line.dump() << '\n';
  };

  if (res.status == 0) {
    audit(res.timed_out ? "timeout" : "transport_error", "");
    if (res.timed_out) {
      throw GenerationTimeout("generation request timed out after " +
                              std::to_string(params_.timeout_s) + " s");
    }
    throw GenerationServiceError(0, redact("generation request failed: " + res.error, api_key_));
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res.body);
  } catch (const nlohmann::json::exception&) {
    audit("invalid_json", res.body);
    throw GenerationServiceError(res.status, "generation endpoint returned invalid JSON");
  }
  if (res.status < 200 || res.status >= 300) {
    std::string message = "HTTP " + std::to_string(res.status);
    if (body.is_object() && body.contains("error")) {
      const auto& e = body["error"];
      if (e.is_string()) message = e.get<std::string>();
      if (e.is_object() && e.contains("message") && e["message"].is_string()) {
        message = e["message"].get<std::string>();
      }
    }
    audit("http_error", res.body);
    throw GenerationServiceError(res.status, redact("generation service error: " + message, api_key_));
  }
  try {
    std::string content = body.at("choices").at(0).at("message").at("content").get<std::string>();
    audit("ok", content);
    return content;
  } catch (const nlohmann::json::exception&) {
    audit("malformed", res.body);
    throw GenerationServiceError(res.status, "response lacks choices[0].message.content");
  }
}

std::string generate_code(const GenerationParams& params, const std::string& prompt) {
  HttpChatGenerator generator(params);
  return generator.generate(prompt);
}

// --- Extraction ------------------------------------------------------------

std::string_view to_string(ExtractionMethod method) {
  switch (method) {
    case ExtractionMethod::FencedTagged: return "FencedTagged";
    case ExtractionMethod::FencedUntagged: return "FencedUntagged";
    case ExtractionMethod::WholeResponse: return "WholeResponse";
  }
  return "WholeResponse";
}

namespace {

struct FencedBlock {
  std::string tag;
  std::string content;
};

std::vector<FencedBlock> fenced_blocks(std::string_view text) {
  std::vector<FencedBlock> blocks;
  std::size_t pos = 0;
  auto next_line = [&](std::size_t from) {
    const std::size_t nl = text.find('\n', from);
    return nl == std::string_view::npos ? text.size() : nl + 1;
  };
  while (pos < text.size()) {
    const std::size_t line_end = next_line(pos);
    std::string_view line = text.substr(pos, line_end - pos);
    std::size_t indent = 0;
    while (indent < line.size() && line[indent] == ' ') ++indent;
    std::size_t ticks = 0;
    while (indent + ticks < line.size() && line[indent + ticks] == '`') ++ticks;
    if (indent > 3 || ticks < 3) {
      pos = line_end;
      continue;
    }
    std::string_view info = line.substr(indent + ticks);
    while (!info.empty() && std::isspace(static_cast<unsigned char>(info.back()))) info.remove_suffix(1);
    while (!info.empty() && std::isspace(static_cast<unsigned char>(info.front()))) info.remove_prefix(1);
    const std::size_t space = info.find_first_of(" \t{");
    FencedBlock block;
    block.tag = std::string(info.substr(0, space));
    const std::size_t body_start = line_end;
    std::size_t close_start = text.size();
    std::size_t after = text.size();
    for (std::size_t p = body_start; p < text.size();) {
      const std::size_t e = next_line(p);
      std::string_view l = text.substr(p, e - p);
      std::size_t i = 0;
      while (i < l.size() && l[i] == ' ') ++i;
      std::size_t t = 0;
      while (i + t < l.size() && l[i + t] == '`') ++t;
      std::size_t rest = i + t;
      while (rest < l.size() && std::isspace(static_cast<unsigned char>(l[rest]))) ++rest;
      if (i <= 3 && t >= ticks && rest == l.size()) {
        close_start = p;
        after = e;
        break;
      }
      p = e;
    }
    block.content = std::string(text.substr(body_start, close_start - body_start));
    blocks.push_back(std::move(block));
    pos = after;
  }
  return blocks;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

GenerationOutcome extract_code(std::string_view response, Language target_language) {
  if (blank(response)) throw EmptyResponse();
  GenerationOutcome out;
  out.raw_response = std::string(response);
  const auto blocks = fenced_blocks(response);
  for (const auto& b : blocks) {
    if (blank(b.content) || b.tag.empty()) continue;
    if (parse_language(b.tag) == target_language) {
      out.extracted_code = b.content;
      out.extraction_method = ExtractionMethod::FencedTagged;
      return out;
    }
  }
  for (const auto& b : blocks) {
    if (blank(b.content)) continue;
    out.extracted_code = b.content;
    out.extraction_method = ExtractionMethod::FencedUntagged;
    return out;
  }
  std::size_t b = 0;
  std::size_t e = response.size();
  while (b < e && std::isspace(static_cast<unsigned char>(response[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(response[e - 1]))) --e;
  out.extracted_code = std::string(response.substr(b, e - b));
  out.extraction_method = ExtractionMethod::WholeResponse;
  return out;
}

}  // namespace racg
