#pragma once

// Synthetic usage logs with known sessions, the serializer that writes them,
// and the scorer that compares reconstructed sessions with the truth.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "wapilog/format.hpp"
#include "wapilog/log_model.hpp"
#include "wapilog/sessionizer.hpp"

namespace wapilog {

/// Serializes one entry under `format`. Absent optionals become "-".
/// Throws RenderError when the entry lacks a field the format needs or a
/// value cannot be written so that the parser reads it back unchanged.
std::string render(const LogEntry& e, const FormatString& format);

// ---------------------------------------------------------------------------
// Workload model

/// One request shape. `{id}` in the path becomes a random number and
/// `{uuid}` a random UUID; each query key gets a random value.
struct EndpointShape {
  std::string method = "GET";
  std::string path;
  std::vector<std::string> query_keys;
};

struct AppSpec {
  std::string name;
  std::vector<EndpointShape> endpoints;
};

/// Six DHIS2-style applications, each with its own endpoints plus a few
/// shared ones. `count` trims the list (1..6).
std::vector<AppSpec> default_catalog(std::size_t count = 6);

struct LengthDistribution {
  // Requests per visit, drawn from a bounded power law p(n) ~ n^-shape.
  int min = 1;
  int max = 40;
  double shape = 1.0;
};

struct ThinkTimeDistribution {
  // Exponential gaps between requests of one visit, capped at max.
  std::int64_t mean_ms = 8'000;
  std::int64_t max_ms = 120'000;
};

struct WorkloadSpec {
  std::vector<AppSpec> app_catalog = default_catalog();
  int user_count = 100;
  double proxy_fraction = 0.0;
  double concurrent_open_rate = 0.3;
  LengthDistribution session_length;
  ThinkTimeDistribution think_time;
  bool referer_logged = true;
  bool client_ip_logged = true;
  Granularity timestamp_granularity = Granularity::millisecond;
  bool quoted_fields = true;
  double app_id_coverage = 0.0;
  std::uint64_t seed = 42;

  // Shape of the simulated day.
  int visits_per_user = 3;
  std::int64_t start_epoch_ms = 1'561'406'400'000;  // 2019-06-24T20:00:00Z
  std::int64_t arrival_window_ms = 60 * 60 * 1000;
  std::int64_t visit_gap_mean_ms = 5 * 60 * 1000;
  std::int64_t latency_mean_ms = 60;

  // Optional fields and defects.
  bool user_agent_logged = true;
  bool duration_logged = true;
  double corruption_rate = 0.0;  // lines the parser must reject
  double orphan_rate = 0.0;      // script requests outside any session
  std::string source_id = "synthetic";

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// "msf", "widp", "golden". Throws ConfigError for anything else.
WorkloadSpec workload_preset(std::string_view name);

/// Format string implied by the spec's logged fields and quoting.
std::string workload_format(const WorkloadSpec& spec);

struct TruthRecord {
  std::string source_id;
  std::int64_t file_order = 0;
  std::optional<std::string> session_id;  // absent for orphan requests
  std::optional<std::string> app;
  std::string user;
  std::int64_t true_epoch_millis = 0;  // before any truncation
};

struct GroundTruthCorpus {
  std::vector<std::string> lines;
  std::vector<TruthRecord> truth;  // one per non-corrupted line, file order
  std::vector<LogEntry> entries;   // what a correct parse yields, file order
  LogFormatSpec spec;
  std::vector<std::int64_t> corrupted_lines;  // 1-based
  std::int64_t entries_with_app_id = 0;
  std::int64_t proxy_entries = 0;
};

/// Deterministic for a given spec (including seed).
GroundTruthCorpus generate(const WorkloadSpec& spec);

void write_truth_jsonl(std::ostream& out, const std::vector<TruthRecord>& truth);
std::vector<TruthRecord> read_truth_jsonl(std::istream& in, const std::string& name);

// ---------------------------------------------------------------------------
// Scoring

struct AccuracyScore {
  double pairwise_precision = 0;
  double pairwise_recall = 0;
  double pairwise_f1 = 0;
  double entry_assignment_accuracy = 0;
  double discarded_true_positive_rate = 0;
  std::int64_t entries = 0;
  std::int64_t discarded = 0;
};

/// Matches entries to truth by (source_id, file_order). Discarded entries
/// and orphan truth records count as singletons. Throws ScoringError when
/// the entry sets differ.
AccuracyScore score(const SessionizationResult& result, const std::vector<TruthRecord>& truth);

std::string score_to_json(const AccuracyScore& s);

// ---------------------------------------------------------------------------

/// Child engines derived from one seed, so every sub-stream (arrivals, app
/// choice, think times, per-user behaviour) is reproducible on its own.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : seed_(seed) {}
  std::mt19937_64 stream(std::string_view name, std::uint64_t index = 0) const;

 private:
  std::uint64_t seed_;
};

}  // namespace wapilog
