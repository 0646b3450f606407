#pragma once

// Log-quality assessment: five issue detectors plus a report that pairs each
// finding with logging guidance for the provider.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wapilog/format.hpp"
#include "wapilog/log_model.hpp"
#include "wapilog/parser.hpp"
#include "wapilog/sessionizer.hpp"

namespace wapilog {

enum class IssueKind {
  separator_in_field,
  insufficient_fields,
  missing_app_identifier,
  hidden_client_ip,
  coarse_timestamp,
};

inline constexpr IssueKind kAllIssueKinds[] = {
    IssueKind::separator_in_field, IssueKind::insufficient_fields,
    IssueKind::missing_app_identifier, IssueKind::hidden_client_ip,
    IssueKind::coarse_timestamp};

std::string_view to_string(IssueKind k);
std::optional<IssueKind> issue_kind_from_string(std::string_view s);

enum class Severity { info, warning, critical };
std::string_view to_string(Severity s);

struct LineRef {
  std::string source_id;
  std::int64_t line_number = 0;

  friend auto operator<=>(const LineRef&, const LineRef&) = default;
};

struct Evidence {
  std::vector<LineRef> lines;
  std::vector<std::pair<std::string, double>> statistics;
  std::vector<std::string> notes;

  bool empty() const { return lines.empty() && statistics.empty() && notes.empty(); }
};

struct QualityIssue {
  IssueKind kind;
  Severity severity = Severity::warning;
  Evidence evidence;
  std::string mitigation;
};

/// Fields an analysis needs (critical when absent) or benefits from
/// (warning when absent).
struct AnalysisProfile {
  std::string name;
  std::set<FieldKind> required;
  std::set<FieldKind> recommended;

  /// "nav-sessionization", "time-sessionization", "page-stay-sessionization",
  /// "user-distinction". Throws ConfigError for other names.
  static AnalysisProfile named(std::string_view name);
};

/// Where an application identifier may appear: `query:<key>` (non-empty
/// query parameter) or `path:<glob>`.
struct IdLocator {
  enum class Kind { query_key, path_glob };
  Kind kind = Kind::query_key;
  std::string arg;

  /// Throws ConfigError for an unknown prefix or empty argument.
  static IdLocator parse(std::string_view text);
  std::string to_string() const;
  bool matches(const LogEntry& e) const;
};

struct QualityConfig {
  AnalysisProfile profile = AnalysisProfile::named("nav-sessionization");
  std::vector<IdLocator> id_locators = {IdLocator::parse("query:key")};
  double id_coverage_floor = 0.95;
  double top_ip_share_threshold = 0.9;
  double zero_millis_fraction = 0.99;
  int concurrency_floor = 2;
  std::int64_t delta_ms = 30 * 60 * 1000;
  AppOpenPattern app_open_pattern;
  std::size_t max_evidence_lines = 100;
  std::set<IssueKind> disabled;

  void validate() const;
};

/// Metrics shared by the detectors and the report summary.
double duplicate_timestamp_fraction(const std::vector<LogEntry>& entries);
double app_id_coverage(const std::vector<LogEntry>& entries, const std::vector<IdLocator>& locators);
double top_ip_share(const std::vector<LogEntry>& entries);

/// Presence flags guessed from the entries themselves, for reports on
/// JSONL input whose format string is unknown.
LogFormatSpec infer_spec(const std::vector<LogEntry>& entries);

/// Accumulates everything the detectors need in one streaming pass; memory
/// is bounded by distinct client addresses and the evidence cap, not by
/// corpus size.
class QualityScanner {
 public:
  explicit QualityScanner(QualityConfig config = {});

  void observe(const LogEntry& e);
  void observe(const ParseDiagnostic& d);

  std::optional<QualityIssue> separator_in_field() const;
  std::optional<QualityIssue> insufficient_fields(const LogFormatSpec& spec) const;
  std::optional<QualityIssue> missing_app_identifier() const;
  std::optional<QualityIssue> hidden_client_ip(const LogFormatSpec& spec) const;
  std::optional<QualityIssue> coarse_timestamp(const LogFormatSpec& spec) const;

  std::map<std::string, double> summary_metrics() const;
  LogFormatSpec inferred_spec() const;
  const QualityConfig& config() const { return config_; }

 private:
  struct Witness {
    std::string ip;
    std::size_t apps = 0;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;
    std::vector<LineRef> lines;
  };

  void note_line(std::vector<LineRef>& v, LineRef ref) const;

  QualityConfig config_;
  std::int64_t entries_ = 0;
  std::int64_t diagnostics_ = 0;
  std::int64_t ambiguous_diagnostics_ = 0;
  std::vector<LineRef> ambiguous_lines_;
  std::int64_t delimiter_recoveries_ = 0;
  std::vector<LineRef> delimiter_lines_;
  std::int64_t with_id_ = 0;
  std::vector<LineRef> without_id_lines_;
  std::int64_t with_ip_ = 0;
  std::unordered_map<std::string, std::int64_t> ip_counts_;
  // Per address: application -> (last seen, line).
  std::unordered_map<std::string, std::map<std::string, std::pair<std::int64_t, LineRef>>> ip_apps_;
  std::optional<Witness> witness_;
  std::int64_t zero_millis_ = 0;
  std::int64_t adjacent_pairs_ = 0;
  std::int64_t duplicate_pairs_ = 0;
  std::vector<LineRef> duplicate_lines_;
  std::unordered_map<std::string, std::int64_t> last_ts_by_source_;
  std::int64_t with_referer_ = 0;
  std::int64_t second_granularity_ = 0;
  bool any_user_agent_ = false;
  bool any_duration_ = false;
  bool any_size_ = false;
};

// Stand-alone detectors over materialized data.
std::optional<QualityIssue> detect_separator_in_field(const std::vector<ParseDiagnostic>& diagnostics,
                                                      const std::vector<LogEntry>& entries,
                                                      const QualityConfig& config = {});
std::optional<QualityIssue> detect_insufficient_fields(const LogFormatSpec& spec,
                                                       const AnalysisProfile& profile);
std::optional<QualityIssue> detect_missing_app_identifier(const std::vector<LogEntry>& entries,
                                                          const QualityConfig& config = {});
std::optional<QualityIssue> detect_hidden_client_ip(const std::vector<LogEntry>& entries,
                                                    const LogFormatSpec& spec,
                                                    const QualityConfig& config = {});
std::optional<QualityIssue> detect_coarse_timestamp(const std::vector<LogEntry>& entries,
                                                    const LogFormatSpec& spec,
                                                    const QualityConfig& config = {});

struct QualityReport {
  std::string corpus_id;
  LogFormatSpec spec;
  std::vector<QualityIssue> issues;  // fixed detector order
  std::map<std::string, double> summary_metrics;

  bool has(IssueKind k) const;
  const QualityIssue* find(IssueKind k) const;
  bool has_critical() const;
};

QualityReport build_report(const std::string& corpus_id, const QualityScanner& scanner,
                           const LogFormatSpec& spec);
QualityReport build_report(const std::string& corpus_id, const std::vector<LogEntry>& entries,
                           const std::vector<ParseDiagnostic>& diagnostics,
                           const LogFormatSpec& spec, const QualityConfig& config = {});

/// Deterministic JSON document (two-space indent, trailing newline).
std::string report_to_json(const QualityReport& report);
/// Human-readable table: issue, severity, mitigation.
std::string report_to_text(const QualityReport& report);

}  // namespace wapilog
