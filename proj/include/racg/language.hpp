#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace racg {

enum class Language {
  Cpp,
  CSharp,
  Go,
  Java,
  JavaScript,
  Kotlin,
  Perl,
  Php,
  Python,
  Ruby,
  Scala,
  Swift,
  TypeScript,
};

inline constexpr std::array<Language, 13> kAllLanguages = {
    Language::Cpp,    Language::CSharp, Language::Go,         Language::Java,
    Language::JavaScript, Language::Kotlin, Language::Perl,   Language::Php,
    Language::Python, Language::Ruby,   Language::Scala,      Language::Swift,
    Language::TypeScript,
};

/// Wire name used in JSONL files and on the command line ("cpp", "csharp", ...).
std::string_view to_string(Language lang);

/// Human-readable name used in prompts and reports ("C++", "C#", ...).
std::string_view display_name(Language lang);

/// Info string for fenced code blocks.
std::string_view fence_tag(Language lang);

/// Accepts the wire name plus common aliases ("py", "c++", "js", ...).
std::optional<Language> parse_language(std::string_view name);

/// Throws std::invalid_argument for unknown names.
Language language_from_string(std::string_view name);

}  // namespace racg
