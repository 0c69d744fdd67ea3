#include "racg/language.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace racg {

namespace {

struct LanguageInfo {
  Language lang;
  std::string_view wire;
  std::string_view display;
  std::string_view fence;
};

constexpr std::array<LanguageInfo, 13> kInfo = {{
    {Language::Cpp, "cpp", "C++", "cpp"},
    {Language::CSharp, "csharp", "C#", "csharp"},
    {Language::Go, "go", "Go", "go"},
    {Language::Java, "java", "Java", "java"},
    {Language::JavaScript, "javascript", "JavaScript", "javascript"},
    {Language::Kotlin, "kotlin", "Kotlin", "kotlin"},
    {Language::Perl, "perl", "Perl", "perl"},
    {Language::Php, "php", "PHP", "php"},
    {Language::Python, "python", "Python", "python"},
    {Language::Ruby, "ruby", "Ruby", "ruby"},
    {Language::Scala, "scala", "Scala", "scala"},
    {Language::Swift, "swift", "Swift", "swift"},
    {Language::TypeScript, "typescript", "TypeScript", "typescript"},
}};

struct Alias {
  std::string_view name;
  Language lang;
};

constexpr std::array<Alias, 17> kAliases = {{
    {"c++", Language::Cpp},         {"cxx", Language::Cpp},
    {"cc", Language::Cpp},          {"c#", Language::CSharp},
    {"cs", Language::CSharp},       {"golang", Language::Go},
    {"js", Language::JavaScript},   {"node", Language::JavaScript},
    {"kt", Language::Kotlin},       {"kts", Language::Kotlin},
    {"pl", Language::Perl},         {"py", Language::Python},
    {"python3", Language::Python},  {"rb", Language::Ruby},
    {"ts", Language::TypeScript},   {"sc", Language::Scala},
    {"php3", Language::Php},
}};

const LanguageInfo& info(Language lang) {
  return kInfo[static_cast<std::size_t>(lang)];
}

}  // namespace

std::string_view to_string(Language lang) { return info(lang).wire; }

std::string_view display_name(Language lang) { return info(lang).display; }

std::string_view fence_tag(Language lang) { return info(lang).fence; }

std::optional<Language> parse_language(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& entry : kInfo) {
    if (lower == entry.wire) return entry.lang;
    std::string display(entry.display);
    std::transform(display.begin(), display.end(), display.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == display) return entry.lang;
  }
  for (const auto& alias : kAliases) {
    if (lower == alias.name) return alias.lang;
  }
  return std::nullopt;
}

Language language_from_string(std::string_view name) {
  if (auto lang = parse_language(name)) return *lang;
  throw std::invalid_argument("unknown language: " + std::string(name));
}

}  // namespace racg
