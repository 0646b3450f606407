#pragma once

// Session statistics and per-application request profiles.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wapilog/log_model.hpp"
#include "wapilog/sessionizer.hpp"

namespace wapilog {

struct SessionStats {
  std::string heuristic_label;
  std::int64_t session_count = 0;  // sessions with more than min_size entries
  std::optional<double> avg_duration_sec;
  std::optional<double> avg_size;
  int min_size = 3;
};

/// Only sessions with strictly more than `min_size` entries are counted.
SessionStats session_stats(const std::vector<Session>& sessions, int min_size = 3,
                           std::string label = {});

inline SessionStats session_stats(const SessionizationResult& result, int min_size = 3,
                                  std::string label = {}) {
  return session_stats(result.sessions, min_size, std::move(label));
}

/// Method, generalized (or raw) path and sorted query keys, e.g.
/// "GET /api/{id}/events?fields&paging".
std::string request_shape(const LogEntry& e, bool generalized);

struct AppRequestProfile {
  std::string app;
  std::int64_t distinct_requests = 0;
  std::vector<std::string> examples;  // at most 10, lexicographically first
};

/// Distinct shapes per attributed application, sorted by application name.
/// Entries without an attribution are skipped.
std::vector<AppRequestProfile> distinct_requests_per_app(const SessionizationResult& result,
                                                         bool generalized);

struct ComparisonRow {
  std::string label;
  std::optional<SessionStats> stats;
  std::int64_t discarded = 0;
  std::optional<std::string> error;
};

/// One row per config in input order; a config that fails to run yields a
/// row carrying the error instead of stats.
std::vector<ComparisonRow> compare_heuristics(const std::vector<LogEntry>& entries,
                                              const std::vector<SessionizerConfig>& configs,
                                              int min_size = 3,
                                              const LogFormatSpec* spec = nullptr);

/// CSV with header heuristic,no_of_sessions,avg_duration_sec,avg_size,discarded.
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace wapilog
