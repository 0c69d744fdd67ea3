#include "racg/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "racg/errors.hpp"

namespace racg {

std::optional<double> ConfigValue::as_number() const {
  if (auto* d = std::get_if<double>(&value)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  return std::nullopt;
}

std::optional<std::int64_t> ConfigValue::as_integer() const {
  if (auto* i = std::get_if<std::int64_t>(&value)) return *i;
  return std::nullopt;
}

std::optional<bool> ConfigValue::as_bool() const {
  if (auto* b = std::get_if<bool>(&value)) return *b;
  return std::nullopt;
}

std::vector<std::string> ConfigValue::as_string_list() const {
  std::vector<std::string> out;
  if (const auto* s = as_string()) {
    out.push_back(*s);
  } else if (const auto* arr = as_array()) {
    for (const auto& v : *arr) {
      if (const auto* s = v.as_string()) out.push_back(*s);
    }
  }
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::map<std::string, ConfigDocument::Table, std::less<>> run() {
    std::map<std::string, ConfigDocument::Table, std::less<>> tables;
    tables[""];
    std::string current;
    while (true) {
      skip_blank_lines();
      if (pos_ >= text_.size()) break;
      if (text_[pos_] == '[') {
        ++pos_;
        const std::size_t close = text_.find(']', pos_);
        if (close == std::string_view::npos) fail("unterminated table header");
        current = trim(text_.substr(pos_, close - pos_));
        if (current.empty()) fail("empty table name");
        tables[current];
        pos_ = close + 1;
        expect_line_end();
        continue;
      }
      std::string key = parse_key();
      skip_spaces();
      if (pos_ >= text_.size() || text_[pos_] != '=') fail("expected '=' after key");
      ++pos_;
      skip_spaces();
      ConfigValue value = parse_value();
      tables[current][key] = std::move(value);
      expect_line_end();
    }
    return tables;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') ++line;
    }
    throw ConfigError("config line " + std::to_string(line) + ": " + what);
  }

  static std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
      out = out.substr(1, out.size() - 2);
    }
    return out;
  }

  void skip_spaces() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  void skip_comment() {
    if (pos_ < text_.size() && text_[pos_] == '#') {
      while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    }
  }

  void skip_blank_lines() {
    while (pos_ < text_.size()) {
      skip_spaces();
      skip_comment();
      if (pos_ < text_.size() && (text_[pos_] == '\n' || text_[pos_] == '\r')) {
        ++pos_;
        continue;
      }
      break;
    }
  }

  /// Whitespace, newlines and comments inside arrays.
  void skip_array_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        skip_comment();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  void expect_line_end() {
    skip_spaces();
    skip_comment();
    if (pos_ < text_.size() && text_[pos_] == '\r') ++pos_;
    if (pos_ < text_.size() && text_[pos_] != '\n') fail("unexpected trailing characters");
  }

  std::string parse_key() {
    if (text_[pos_] == '"') return parse_basic_string();
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected key");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string parse_basic_string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\n') fail("newline in string");
      if (c == '\\' && pos_ < text_.size()) {
        const char e = text_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: out += '\\'; out += e; break;
        }
        continue;
      }
      out += c;
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string parse_literal_string() {
    ++pos_;
    const std::size_t close = text_.find('\'', pos_);
    if (close == std::string_view::npos) fail("unterminated string");
    std::string out(text_.substr(pos_, close - pos_));
    if (out.find('\n') != std::string::npos) fail("newline in string");
    pos_ = close + 1;
    return out;
  }

  ConfigValue parse_value() {
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return {parse_basic_string()};
    if (c == '\'') return {parse_literal_string()};
    if (c == '[') {
      ++pos_;
      ConfigValue::Array arr;
      while (true) {
        skip_array_space();
        if (pos_ >= text_.size()) fail("unterminated array");
        if (text_[pos_] == ']') {
          ++pos_;
          break;
        }
        arr.push_back(parse_value());
        skip_array_space();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        skip_array_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']' in array");
      }
      return {std::move(arr)};
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
           text_[pos_] != '#' && text_[pos_] != '\n' && text_[pos_] != '\r') {
      ++pos_;
    }
    std::string raw = trim(text_.substr(start, pos_ - start));
    if (raw == "true") return {true};
    if (raw == "false") return {false};
    std::string digits;
    for (char ch : raw) {
      if (ch != '_') digits += ch;
    }
    std::int64_t i = 0;
    auto [iend, iec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (iec == std::errc() && iend == digits.data() + digits.size() && !digits.empty()) {
      return {i};
    }
    double d = 0;
    auto [dend, dec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (dec == std::errc() && dend == digits.data() + digits.size() && !digits.empty()) {
      return {d};
    }
    fail("cannot parse value '" + raw + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

ConfigDocument ConfigDocument::parse(std::string_view text) {
  ConfigDocument doc;
  doc.tables_ = Parser(text).run();
  return doc;
}

ConfigDocument ConfigDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const ConfigDocument::Table* ConfigDocument::table(std::string_view name) const {
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : &it->second;
}

const ConfigValue* ConfigDocument::get(std::string_view table_name, std::string_view key) const {
  const Table* t = table(table_name);
  if (t == nullptr) return nullptr;
  auto it = t->find(std::string(key));
  return it == t->end() ? nullptr : &it->second;
}

std::optional<std::string> ConfigDocument::get_string(std::string_view t,
                                                      std::string_view key) const {
  const ConfigValue* v = get(t, key);
  if (v == nullptr) return std::nullopt;
  if (const auto* s = v->as_string()) return *s;
  throw ConfigError("expected string for " + std::string(key));
}

std::optional<double> ConfigDocument::get_number(std::string_view t, std::string_view key) const {
  const ConfigValue* v = get(t, key);
  if (v == nullptr) return std::nullopt;
  if (auto n = v->as_number()) return n;
  throw ConfigError("expected number for " + std::string(key));
}

std::optional<std::int64_t> ConfigDocument::get_integer(std::string_view t,
                                                        std::string_view key) const {
  const ConfigValue* v = get(t, key);
  if (v == nullptr) return std::nullopt;
  if (auto n = v->as_integer()) return n;
  throw ConfigError("expected integer for " + std::string(key));
}

std::optional<bool> ConfigDocument::get_bool(std::string_view t, std::string_view key) const {
  const ConfigValue* v = get(t, key);
  if (v == nullptr) return std::nullopt;
  if (auto b = v->as_bool()) return b;
  throw ConfigError("expected boolean for " + std::string(key));
}

std::vector<std::string> ConfigDocument::get_strings(std::string_view t,
                                                     std::string_view key) const {
  const ConfigValue* v = get(t, key);
  return v == nullptr ? std::vector<std::string>{} : v->as_string_list();
}

std::vector<std::string> ConfigDocument::table_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : tables_) {
    if (!name.empty()) names.push_back(name);
  }
  return names;
}

}  // namespace racg
