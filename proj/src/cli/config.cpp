#include "spdl/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "spdl/numcore/csv.hpp"

namespace spdl::cli {

namespace {

KeySpec key(std::string k, ValueType t, std::string def, std::vector<std::string> choices = {}) {
  return {std::move(k), t, std::move(def), false, std::move(choices)};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const KeySpec* find_key(const std::string& k) {
  for (const auto& s : config_keys())
    if (s.key == k) return &s;
  return nullptr;
}

bool parse_uint(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

// Canonical form of `value` for `spec`, or an error message.
bool canonical(const KeySpec& spec, const std::string& value, std::string& out, std::string& err) {
  switch (spec.type) {
    case ValueType::integer: {
      std::uint64_t v = 0;
      if (!parse_uint(value, v)) {
        err = "expected a non-negative integer, got '" + value + "'";
        return false;
      }
      out = std::to_string(v);
      return true;
    }
    case ValueType::real: {
      double v = 0.0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
      if (value.empty() || r.ec != std::errc() || r.ptr != value.data() + value.size() || !std::isfinite(v)) {
        err = "expected a real number, got '" + value + "'";
        return false;
      }
      out = format_real(v);
      return true;
    }
    case ValueType::boolean:
      if (value == "true" || value == "1") {
        out = "true";
        return true;
      }
      if (value == "false" || value == "0") {
        out = "false";
        return true;
      }
      err = "expected true or false, got '" + value + "'";
      return false;
    case ValueType::text: out = value; return true;
    case ValueType::choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
        err = "expected one of";
        for (const auto& c : spec.choices) err += " " + c;
        err += ", got '" + value + "'";
        return false;
      }
      out = value;
      return true;
    case ValueType::int_list: {
      std::string acc;
      std::stringstream ss(value);
      std::string item;
      bool any = false;
      while (std::getline(ss, item, ',')) {
        std::uint64_t v = 0;
        if (!parse_uint(trim(item), v)) {
          err = "expected a comma-separated list of integers, got '" + value + "'";
          return false;
        }
        acc += (any ? "," : "") + std::to_string(v);
        any = true;
      }
      if (!any) {
        err = "expected a non-empty integer list";
        return false;
      }
      out = acc;
      return true;
    }
  }
  return false;
}

}  // namespace

const std::vector<KeySpec>& config_keys() {
  using V = ValueType;
  static const std::vector<KeySpec> keys = [] {
    std::vector<KeySpec> k{
        {"experiment", V::choice, "", true, {"classify", "flow", "denoise", "optbench", "deeplimit", "msa"}},
        key("seed", V::integer, "0"),
        key("out", V::text, "out"),
        key("steps", V::integer, "1000"),
        key("dataset", V::choice, "halfmoon2d", {"halfmoon2d", "donut2d", "donut3d", "two_halfmoons_density"}),
        key("n", V::integer, "200"),
        key("noise", V::real, "0.05"),
        key("batch", V::integer, "32"),
        key("model.block", V::choice, "euler", {"euler", "gradflow", "verlet"}),
        key("model.activation", V::choice, "tanh", {"tanh", "relu", "identity"}),
        key("model.layers", V::integer, "10"),
        key("model.width", V::integer, "0"),
        key("model.h", V::real, "0.1"),
        key("optimizer", V::choice, "adam", {"sgd", "adam", "heavy_ball", "nesterov", "rgd"}),
        key("lr", V::real, "0.01"),
        key("beta1", V::real, "0.9"),
        key("beta2", V::real, "0.999"),
        key("eps", V::real, "1e-08"),
        key("gamma", V::real, "1"),
        key("mass", V::real, "1"),
        key("momentum", V::real, "0"),
        key("reg", V::choice, "l2", {"none", "l2", "l1", "h1", "timestep_simplex"}),
        key("reg.lambda", V::real, "0.0001"),
        key("reg.horizon", V::real, "1"),
        key("plateau_patience", V::integer, "0"),
        key("record_wall_time", V::boolean, "false"),
        key("grid", V::integer, "50"),
        key("flow.arch", V::choice, "coupling", {"coupling", "iresnet"}),
        key("flow.layers", V::integer, "4"),
        key("flow.hidden", V::integer, "16"),
        key("flow.depth", V::integer, "2"),
        key("denoise.model", V::choice, "p4", {"p4", "cnn"}),
        key("denoise.images", V::integer, "16"),
        key("denoise.test_images", V::integer, "4"),
        key("denoise.size", V::integer, "16"),
        key("denoise.max_rects", V::integer, "4"),
        key("denoise.sigma", V::real, "0.1"),
        key("denoise.channels", V::integer, "4"),
        key("denoise.layers", V::integer, "2"),
        key("denoise.lambda", V::real, "0.1"),
        key("denoise.eps", V::real, "0.01"),
        key("denoise.patience", V::integer, "100"),
        key("deeplimit.ks", V::int_list, "4,8,16,32"),
        key("deeplimit.restarts", V::integer, "3"),
        key("deeplimit.lambda", V::real, "0.001"),
        key("deeplimit.horizon", V::real, "1"),
        key("msa.sweeps", V::integer, "50"),
        key("msa.inner_steps", V::integer, "10"),
        key("msa.inner_lr", V::real, "0.1"),
        key("optbench.max_steps", V::integer, "100000"),
        key("optbench.tol", V::real, "0.01"),
    };
    std::sort(k.begin(), k.end(), [](const KeySpec& a, const KeySpec& b) { return a.key < b.key; });
    return k;
  }();
  return keys;
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error([&] {
        std::string s = "invalid configuration:";
        for (const auto& i : issues) s += "\n  " + i.key + ": " + i.message;
        return s;
      }()),
      issues_(std::move(issues)) {}

std::pair<std::string, std::string> split_assignment(std::string_view arg) {
  const auto eq = arg.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError({{std::string(arg), "expected key=value"}});
  }
  return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
}

RunConfig parse_config(std::string_view text,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<ConfigIssue> issues;
  std::map<std::string, std::string> raw;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      issues.push_back({"line " + std::to_string(lineno), "expected key=value, got '" + t + "'"});
      continue;
    }
    raw[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  for (const auto& [k, v] : overrides) raw[k] = v;

  RunConfig cfg;
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : raw) {
    const KeySpec* spec = find_key(k);
    if (!spec) {
      issues.push_back({k, "unknown key"});
      continue;
    }
    std::string canon, err;
    if (!canonical(*spec, v, canon, err)) {
      issues.push_back({k, "type mismatch: " + err});
      continue;
    }
    values[k] = canon;
  }
  for (const auto& spec : config_keys()) {
    if (values.count(spec.key) || raw.count(spec.key)) continue;
    if (spec.required) {
      issues.push_back({spec.key, "missing required key"});
    } else {
      std::string canon, err;
      canonical(spec, spec.fallback, canon, err);
      values[spec.key] = canon;
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  cfg.values_ = std::move(values);
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg.values()) s += k + "=" + v + "\n";
  return s;
}

const std::string& RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError({{key, "missing required key"}});
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  return static_cast<std::int64_t>(get_uint(key));
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_uint(raw(key), v)) throw ConfigError({{key, "type mismatch: not an integer"}});
  return v;
}

double RunConfig::get_real(const std::string& key) const {
  const std::string& s = raw(key);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc()) throw ConfigError({{key, "type mismatch: not a real"}});
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return raw(key) == "true"; }

const std::string& RunConfig::get_string(const std::string& key) const { return raw(key); }

std::vector<std::size_t> RunConfig::get_int_list(const std::string& key) const {
  std::vector<std::size_t> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  return out;
}

}  // namespace spdl::cli
