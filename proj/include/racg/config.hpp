#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace racg {

/// Scalar or array value from a TOML-style config file.
struct ConfigValue {
  using Array = std::vector<ConfigValue>;
  std::variant<std::string, std::int64_t, double, bool, Array> value;

  const std::string* as_string() const { return std::get_if<std::string>(&value); }
  std::optional<double> as_number() const;
  std::optional<std::int64_t> as_integer() const;
  std::optional<bool> as_bool() const;
  const Array* as_array() const { return std::get_if<Array>(&value); }
  std::vector<std::string> as_string_list() const;
};

/// The subset of TOML used by runner and experiment configs: `[table]`
/// headers, `key = value` pairs, basic and literal strings, integers,
/// floats, booleans, and (possibly multi-line) arrays. Top-level keys live
/// in the table named "".
class ConfigDocument {
 public:
  using Table = std::map<std::string, ConfigValue>;

  static ConfigDocument parse(std::string_view text);
  static ConfigDocument load(const std::filesystem::path& path);

  const Table* table(std::string_view name) const;
  const ConfigValue* get(std::string_view table, std::string_view key) const;
  std::optional<std::string> get_string(std::string_view table, std::string_view key) const;
  std::optional<double> get_number(std::string_view table, std::string_view key) const;
  std::optional<std::int64_t> get_integer(std::string_view table, std::string_view key) const;
  std::optional<bool> get_bool(std::string_view table, std::string_view key) const;
  std::vector<std::string> get_strings(std::string_view table, std::string_view key) const;
  std::vector<std::string> table_names() const;

 private:
  std::map<std::string, Table, std::less<>> tables_;
};

}  // namespace racg
