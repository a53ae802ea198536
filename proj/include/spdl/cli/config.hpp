#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spdl::cli {

enum class ValueType { integer, real, boolean, text, choice, int_list };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string fallback;  // default value; ignored when required
  bool required = false;
  std::vector<std::string> choices;
};

// Every recognized configuration key.
const std::vector<KeySpec>& config_keys();

struct ConfigIssue {
  std::string key;
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

// Validated key=value configuration. Values are kept in canonical text form
// (reals with 17 significant digits), so serialize/parse round trips exactly.
class RunConfig {
 public:
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<std::size_t> get_int_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  friend bool operator==(const RunConfig&, const RunConfig&) = default;

 private:
  friend RunConfig parse_config(std::string_view, const std::vector<std::pair<std::string, std::string>>&);
  const std::string& raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

// Parses line-based key=value text ('#' starts a comment, blank lines are
// ignored) and applies `overrides` on top. Throws ConfigError listing every
// unknown key, type mismatch, malformed line and missing required key.
RunConfig parse_config(std::string_view text,
                       const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Splits "key=value"; throws ConfigError naming the argument when '=' is
// missing.
std::pair<std::string, std::string> split_assignment(std::string_view arg);

// One "key=value" line per key, sorted by key.
std::string serialize_config(const RunConfig& cfg);

}  // namespace spdl::cli
