#pragma once

// TOML configuration: one table per pipeline stage.
//
//   [parse]       format = "...", on_error = "skip" | "halt"
//   [clean]       drop_status, drop_path_patterns, drop_methods, keep_only_path_prefixes
//   [[generalize]] match = "/api/<int>/system/info", template = "/api/{version}/system/info"
//   [preprocess]  repair_timestamps = true, id_fallback = true, fusion_window = 4096
//   [sessionize]  heuristic, delta, theta, app_open_pattern, user_key = ["client_ip"]
//   [quality]     profile, id_locators, id_coverage_floor, top_ip_share,
//                 zero_millis_fraction, concurrency_floor, delta, max_evidence_lines,
//                 disabled = ["coarse_timestamp"]
//   [stats]       min_size = 3
//
// Durations are strings such as "500ms", "90s", "15m", "1h" or integer
// milliseconds. Unknown tables and keys are rejected.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wapilog/parser.hpp"
#include "wapilog/preprocess.hpp"
#include "wapilog/quality.hpp"
#include "wapilog/sessionizer.hpp"

namespace wapilog {

struct PipelineConfig {
  std::optional<std::string> format;
  ErrorPolicy on_error = ErrorPolicy::skip_and_record;
  CleaningRules cleaning;
  std::vector<GeneralizationRule> generalization;
  bool id_fallback = true;
  bool repair_timestamps = true;
  std::size_t fusion_window = 4096;
  SessionizerConfig sessionizer;
  QualityConfig quality;
  int min_size = 3;
};

/// Throws ConfigError on syntax errors, unknown keys or invalid values.
PipelineConfig parse_config(std::string_view text, const std::string& name = "config");
/// Throws IoError when the file cannot be read.
PipelineConfig load_config(const std::filesystem::path& path);

/// Sessionizer configs for `compare`: an array of [[config]] tables with
/// heuristic, delta, theta, app_open_pattern and user_key keys.
std::vector<SessionizerConfig> parse_compare_configs(std::string_view text,
                                                     const std::string& name = "configs");
std::vector<SessionizerConfig> load_compare_configs(const std::filesystem::path& path);

ErrorPolicy error_policy_from_string(std::string_view s);
std::vector<UserKeyField> user_key_fields_from_string(std::string_view comma_list);

}  // namespace wapilog
