#pragma once

// Core domain types shared by every stage of the pipeline.

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wapilog {

enum class Granularity { second, millisecond };

std::string_view to_string(Granularity g);
std::optional<Granularity> granularity_from_string(std::string_view s);

/// Always millisecond resolution internally; `granularity` records what the
/// source actually logged so coarse sources remain detectable.
struct Timestamp {
  std::int64_t epoch_millis = 0;
  Granularity granularity = Granularity::millisecond;

  friend bool operator==(const Timestamp&, const Timestamp&) = default;
};

using QueryParam = std::pair<std::string, std::string>;

struct RequestLine {
  std::string method;
  std::string path;
  std::vector<QueryParam> query;  // duplicates and order preserved
  std::string protocol;

  friend bool operator==(const RequestLine&, const RequestLine&) = default;
};

struct LogEntry {
  std::optional<std::string> client_ip;  // opaque, never parsed
  Timestamp timestamp;
  RequestLine request;
  int status = 200;
  std::optional<std::int64_t> object_size;
  std::optional<std::string> referer;
  std::optional<std::string> user_agent;
  std::optional<std::int64_t> duration;  // milliseconds
  std::string source_id;
  std::int64_t file_order = 0;

  // Set by later stages.
  std::optional<std::string> generalized_path;
  bool timestamp_repaired = false;
  // The parser joined several whitespace-separated tokens into one bare
  // request, referer or user-agent field.
  bool split_recovered = false;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

/// Strict total order: timestamp, then source_id, then file_order.
/// Only an entry compared with itself (same source and position) is equal.
std::strong_ordering compare_entries(const LogEntry& a, const LogEntry& b);

inline bool entry_before(const LogEntry& a, const LogEntry& b) {
  return compare_entries(a, b) < 0;
}

struct Violation {
  std::string field;
  std::string rule;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every type invariant; empty result means the entry is well formed.
std::vector<Violation> validate_entry(const LogEntry& e);

/// "-" and the empty string both mean the field was not logged.
std::optional<std::string> normalize_optional(std::string_view raw);

}  // namespace wapilog
