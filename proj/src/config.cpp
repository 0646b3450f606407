#include "wapilog/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "wapilog/errors.hpp"

namespace wapilog {

namespace {

class Reader {
 public:
  Reader(const toml::table& t, std::string where) : t_(t), where_(std::move(where)) {}

  void allow(std::initializer_list<std::string_view> keys) const {
    std::set<std::string_view> ok(keys);
    for (auto&& [k, v] : t_) {
      if (!ok.count(k.str())) throw ConfigError(where_ + ": unknown key '" + std::string(k.str()) + "'");
    }
  }

  const toml::node* get(std::string_view key) const { return t_.get(key); }

  std::optional<std::string> string(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value<std::string>()) return *v;
    throw error(key, "a string");
  }

  std::optional<bool> boolean(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (auto v = n->value<bool>(); v && n->is_boolean()) return *v;
    throw error(key, "true or false");
  }

  std::optional<std::int64_t> integer(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (n->is_integer()) return n->value<std::int64_t>();
    throw error(key, "an integer");
  }

  std::optional<double> number(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (n->is_number()) return n->value<double>();
    throw error(key, "a number");
  }

  std::optional<std::int64_t> duration(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    if (n->is_integer()) return n->value<std::int64_t>();
    if (auto s = n->value<std::string>()) {
      if (auto d = parse_duration(*s)) return d;
    }
    throw error(key, "a duration such as \"15m\" or integer milliseconds");
  }

  std::optional<std::vector<std::string>> strings(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) throw error(key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& item : *arr) {
      auto s = item.value<std::string>();
      if (!s || !item.is_string()) throw error(key, "an array of strings");
      out.push_back(*s);
    }
    return out;
  }

  std::optional<std::vector<std::int64_t>> integers(std::string_view key) const {
    const auto* n = get(key);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) throw error(key, "an array of integers");
    std::vector<std::int64_t> out;
    for (const auto& item : *arr) {
      if (!item.is_integer()) throw error(key, "an array of integers");
      out.push_back(*item.value<std::int64_t>());
    }
    return out;
  }

 private:
  ConfigError error(std::string_view key, std::string_view expected) const {
    return ConfigError(where_ + ": '" + std::string(key) + "' must be " + std::string(expected));
  }

  const toml::table& t_;
  std::string where_;
};

toml::table parse_toml(std::string_view text, const std::string& name) {
  try {
    return toml::parse(text, name);
  } catch (const toml::parse_error& ex) {
    std::ostringstream msg;
    msg << name << ":" << ex.source().begin.line << ": " << ex.description();
    throw ConfigError(msg.str());
  }
}

const toml::table* table(const toml::table& root, std::string_view key, const std::string& name) {
  const auto* n = root.get(key);
  if (!n) return nullptr;
  if (const auto* t = n->as_table()) return t;
  throw ConfigError(name + ": '" + std::string(key) + "' must be a table");
}

void read_sessionizer(const Reader& r, SessionizerConfig& c, const std::string& where) {
  if (auto h = r.string("heuristic")) {
    auto parsed = heuristic_from_string(*h);
    if (!parsed) throw ConfigError(where + ": unknown heuristic '" + *h + "' (time, page-stay, nav)");
    c.heuristic = *parsed;
  }
  if (auto d = r.duration("delta")) c.delta_ms = *d;
  if (auto d = r.duration("theta")) c.theta_ms = *d;
  if (auto p = r.string("app_open_pattern")) c.app_open_pattern = AppOpenPattern(*p);
  if (auto keys = r.strings("user_key")) {
    c.user_key_fields.clear();
    for (const auto& k : *keys) {
      auto f = user_key_fields_from_string(k);
      c.user_key_fields.insert(c.user_key_fields.end(), f.begin(), f.end());
    }
  }
  c.validate();
}

}  // namespace

ErrorPolicy error_policy_from_string(std::string_view s) {
  if (s == "skip" || s == "skip_and_record") return ErrorPolicy::skip_and_record;
  if (s == "halt") return ErrorPolicy::halt;
  throw ConfigError("on_error must be skip or halt, got '" + std::string(s) + "'");
}

std::vector<UserKeyField> user_key_fields_from_string(std::string_view list) {
  std::vector<UserKeyField> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string_view::npos) comma = list.size();
    auto item = list.substr(start, comma - start);
    if (item == "client_ip") out.push_back(UserKeyField::client_ip);
    else if (item == "user_agent") out.push_back(UserKeyField::user_agent);
    else if (!item.empty()) throw ConfigError("user key field must be client_ip or user_agent, got '" + std::string(item) + "'");
    start = comma + 1;
  }
  return out;
}

PipelineConfig parse_config(std::string_view text, const std::string& name) {
  const auto root = parse_toml(text, name);
  PipelineConfig c;
  for (auto&& [k, v] : root) {
    static const std::set<std::string_view> known = {"parse", "clean", "generalize", "preprocess",
                                                     "sessionize", "quality", "stats"};
    if (!known.count(k.str())) throw ConfigError(name + ": unknown section [" + std::string(k.str()) + "]");
  }

  if (const auto* t = table(root, "parse", name)) {
    Reader r(*t, name + " [parse]");
    r.allow({"format", "on_error"});
    if (auto f = r.string("format")) {
      parse_format_spec(*f);  // validate now, before any input is read
      c.format = *f;
    }
    if (auto p = r.string("on_error")) c.on_error = error_policy_from_string(*p);
  }

  if (const auto* t = table(root, "clean", name)) {
    Reader r(*t, name + " [clean]");
    r.allow({"drop_status", "drop_path_patterns", "drop_methods", "keep_only_path_prefixes"});
    if (auto v = r.integers("drop_status")) {
      for (auto s : *v) c.cleaning.drop_status.insert(static_cast<int>(s));
    }
    if (auto v = r.strings("drop_path_patterns")) c.cleaning.drop_path_patterns = *v;
    if (auto v = r.strings("drop_methods")) c.cleaning.drop_methods = {v->begin(), v->end()};
    if (auto v = r.strings("keep_only_path_prefixes")) c.cleaning.keep_only_path_prefixes = *v;
    c.cleaning.validate();
  }

  if (const auto* n = root.get("generalize")) {
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(name + ": generalize must be an array of tables ([[generalize]])");
    for (const auto& item : *arr) {
      const auto* t = item.as_table();
      if (!t) throw ConfigError(name + ": generalize must be an array of tables ([[generalize]])");
      Reader r(*t, name + " [[generalize]]");
      r.allow({"match", "template"});
      auto m = r.string("match");
      auto tpl = r.string("template");
      if (!m || !tpl) throw ConfigError(name + " [[generalize]]: both match and template are required");
      c.generalization.emplace_back(*m, *tpl);
    }
  }

  if (const auto* t = table(root, "preprocess", name)) {
    Reader r(*t, name + " [preprocess]");
    r.allow({"repair_timestamps", "id_fallback", "fusion_window"});
    if (auto v = r.boolean("repair_timestamps")) c.repair_timestamps = *v;
    if (auto v = r.boolean("id_fallback")) c.id_fallback = *v;
    if (auto v = r.integer("fusion_window")) {
      if (*v < 1) throw ConfigError(name + " [preprocess]: fusion_window must be at least 1");
      c.fusion_window = static_cast<std::size_t>(*v);
    }
  }

  if (const auto* t = table(root, "sessionize", name)) {
    Reader r(*t, name + " [sessionize]");
    r.allow({"heuristic", "delta", "theta", "app_open_pattern", "user_key"});
    read_sessionizer(r, c.sessionizer, name + " [sessionize]");
  }
  // The quality witness window follows the sessionizer unless set.
  c.quality.delta_ms = c.sessionizer.delta_ms;
  c.quality.app_open_pattern = c.sessionizer.app_open_pattern;

  if (const auto* t = table(root, "quality", name)) {
    Reader r(*t, name + " [quality]");
    r.allow({"profile", "id_locators", "id_coverage_floor", "top_ip_share", "zero_millis_fraction",
             "concurrency_floor", "delta", "max_evidence_lines", "disabled"});
    auto& q = c.quality;
    if (auto v = r.string("profile")) q.profile = AnalysisProfile::named(*v);
    if (auto v = r.strings("id_locators")) {
      q.id_locators.clear();
      for (const auto& l : *v) q.id_locators.push_back(IdLocator::parse(l));
    }
    if (auto v = r.number("id_coverage_floor")) q.id_coverage_floor = *v;
    if (auto v = r.number("top_ip_share")) q.top_ip_share_threshold = *v;
    if (auto v = r.number("zero_millis_fraction")) q.zero_millis_fraction = *v;
    if (auto v = r.integer("concurrency_floor")) q.concurrency_floor = static_cast<int>(*v);
    if (auto v = r.duration("delta")) q.delta_ms = *v;
    if (auto v = r.integer("max_evidence_lines")) {
      if (*v < 0) throw ConfigError(name + " [quality]: max_evidence_lines must be non-negative");
      q.max_evidence_lines = static_cast<std::size_t>(*v);
    }
    if (auto v = r.strings("disabled")) {
      for (const auto& k : *v) {
        auto kind = issue_kind_from_string(k);
        if (!kind) throw ConfigError(name + " [quality]: unknown issue kind '" + k + "'");
        q.disabled.insert(*kind);
      }
    }
    q.validate();
  }

  if (const auto* t = table(root, "stats", name)) {
    Reader r(*t, name + " [stats]");
    r.allow({"min_size"});
    if (auto v = r.integer("min_size")) {
      if (*v < 0) throw ConfigError(name + " [stats]: min_size must be non-negative");
      c.min_size = static_cast<int>(*v);
    }
  }
  return c;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

}  // namespace

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(slurp(path), path.string());
}

std::vector<SessionizerConfig> parse_compare_configs(std::string_view text, const std::string& name) {
  const auto root = parse_toml(text, name);
  for (auto&& [k, v] : root) {
    if (k.str() != "config") throw ConfigError(name + ": unknown key '" + std::string(k.str()) + "'");
  }
  const auto* n = root.get("config");
  const auto* arr = n ? n->as_array() : nullptr;
  if (!arr || arr->empty()) throw ConfigError(name + ": expected one or more [[config]] tables");
  std::vector<SessionizerConfig> out;
  for (const auto& item : *arr) {
    const auto* t = item.as_table();
    if (!t) throw ConfigError(name + ": expected [[config]] tables");
    Reader r(*t, name + " [[config]]");
    r.allow({"heuristic", "delta", "theta", "app_open_pattern", "user_key"});
    SessionizerConfig c;
    read_sessionizer(r, c, name + " [[config]]");
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<SessionizerConfig> load_compare_configs(const std::filesystem::path& path) {
  return parse_compare_configs(slurp(path), path.string());
}

}  // namespace wapilog
