#include "wapilog/quality.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "wapilog/errors.hpp"
#include "wapilog/preprocess.hpp"

namespace wapilog {

std::string_view to_string(IssueKind k) {
  switch (k) {
    case IssueKind::separator_in_field: return "separator_in_field";
    case IssueKind::insufficient_fields: return "insufficient_fields";
    case IssueKind::missing_app_identifier: return "missing_app_identifier";
    case IssueKind::hidden_client_ip: return "hidden_client_ip";
    case IssueKind::coarse_timestamp: return "coarse_timestamp";
  }
  return "separator_in_field";
}

std::optional<IssueKind> issue_kind_from_string(std::string_view s) {
  for (auto k : kAllIssueKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::info: return "info";
    case Severity::warning: return "warning";
    case Severity::critical: return "critical";
  }
  return "info";
}

namespace {

// Table-style guidance lines, one per issue kind, followed by our own
// explanation of what to change.
constexpr std::string_view kMitigationSeparator =
    "Use a machine parse-able format for logs. Wrap the request, referer and user agent in "
    "double quotes so that embedded spaces, commas and semicolons are never read as separators.";
constexpr std::string_view kMitigationInsufficient =
    "Log the referer, user agent. Choose the logged fields from the analyses you plan to run; "
    "at minimum they must let you tell users and applications apart.";
constexpr std::string_view kMitigationAppId =
    "Provide application identifiers. Provide different application identifiers for "
    "development phase. Consumers should send the identifier with every request (header or "
    "query parameter) so requests can be attributed without heuristics.";
constexpr std::string_view kMitigationHiddenIp =
    "Log the referer, user agent. The provider cannot repair addresses rewritten by consumer "
    "proxies, so do not rely on the client address alone to separate users or sessions.";
constexpr std::string_view kMitigationCoarse =
    "Log the timestamp in high precision. Millisecond (or finer) timestamps keep requests "
    "that arrive within the same second in their true order.";

std::string_view mitigation_for(IssueKind k) {
  switch (k) {
    case IssueKind::separator_in_field: return kMitigationSeparator;
    case IssueKind::insufficient_fields: return kMitigationInsufficient;
    case IssueKind::missing_app_identifier: return kMitigationAppId;
    case IssueKind::hidden_client_ip: return kMitigationHiddenIp;
    case IssueKind::coarse_timestamp: return kMitigationCoarse;
  }
  return {};
}

bool spec_has(const LogFormatSpec& spec, FieldKind k) {
  switch (k) {
    case FieldKind::client_ip: return spec.has_client_ip;
    case FieldKind::referer: return spec.has_referer;
    case FieldKind::user_agent: return spec.has_user_agent;
    case FieldKind::duration: return spec.has_duration;
    case FieldKind::size: return spec.has_size;
    case FieldKind::status: return spec.has_status;
    default: return spec.has_field(k);
  }
}

bool has_delimiter(const std::optional<std::string>& v) {
  return v && v->find_first_of(" \t,;") != std::string::npos;
}

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

LineRef ref_of(const LogEntry& e) { return {e.source_id, e.file_order + 1}; }

std::vector<LineRef> sorted(std::vector<LineRef> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

AnalysisProfile AnalysisProfile::named(std::string_view name) {
  AnalysisProfile p;
  p.name = std::string(name);
  if (name == "nav-sessionization") {
    p.required = {FieldKind::referer};
    p.recommended = {FieldKind::user_agent};
  } else if (name == "time-sessionization") {
    p.recommended = {FieldKind::user_agent};
  } else if (name == "page-stay-sessionization") {
    p.recommended = {FieldKind::client_ip, FieldKind::user_agent};
  } else if (name == "user-distinction") {
    p.required = {FieldKind::client_ip};
    p.recommended = {FieldKind::user_agent};
  } else {
    throw ConfigError("unknown analysis profile: " + std::string(name));
  }
  return p;
}

IdLocator IdLocator::parse(std::string_view text) {
  IdLocator l;
  auto colon = text.find(':');
  if (colon == std::string_view::npos || colon + 1 == text.size()) {
    throw ConfigError("id locator must look like query:<key> or path:<glob>: " + std::string(text));
  }
  auto kind = text.substr(0, colon);
  l.arg = std::string(text.substr(colon + 1));
  if (kind == "query") l.kind = Kind::query_key;
  else if (kind == "path") l.kind = Kind::path_glob;
  else throw ConfigError("unknown id locator kind: " + std::string(kind));
  return l;
}

std::string IdLocator::to_string() const {
  return (kind == Kind::query_key ? "query:" : "path:") + arg;
}

bool IdLocator::matches(const LogEntry& e) const {
  if (kind == Kind::path_glob) return glob_match(arg, e.request.path);
  return std::any_of(e.request.query.begin(), e.request.query.end(),
                     [&](const QueryParam& q) { return q.first == arg && !q.second.empty(); });
}

void QualityConfig::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0,1]");
  };
  fraction(id_coverage_floor, "id_coverage_floor");
  fraction(top_ip_share_threshold, "top_ip_share");
  fraction(zero_millis_fraction, "zero_millis_fraction");
  if (concurrency_floor < 0) throw ConfigError("concurrency_floor must be non-negative");
  if (delta_ms <= 0) throw ConfigError("quality delta must be positive");
}

// ---------------------------------------------------------------------------
// Plain metrics

double duplicate_timestamp_fraction(const std::vector<LogEntry>& entries) {
  QualityScanner s;
  for (const auto& e : entries) s.observe(e);
  return s.summary_metrics().at("duplicate_timestamp_fraction");
}

double app_id_coverage(const std::vector<LogEntry>& entries, const std::vector<IdLocator>& locators) {
  std::int64_t hit = 0;
  for (const auto& e : entries) {
    if (std::any_of(locators.begin(), locators.end(), [&](const IdLocator& l) { return l.matches(e); })) {
      ++hit;
    }
  }
  return ratio(hit, static_cast<std::int64_t>(entries.size()));
}

double top_ip_share(const std::vector<LogEntry>& entries) {
  QualityScanner s;
  for (const auto& e : entries) s.observe(e);
  return s.summary_metrics().at("top_ip_share");
}

LogFormatSpec infer_spec(const std::vector<LogEntry>& entries) {
  QualityScanner s;
  for (const auto& e : entries) s.observe(e);
  return s.inferred_spec();
}

// ---------------------------------------------------------------------------
// Scanner

QualityScanner::QualityScanner(QualityConfig config) : config_(std::move(config)) {
  config_.validate();
}

void QualityScanner::note_line(std::vector<LineRef>& v, LineRef ref) const {
  if (v.size() < config_.max_evidence_lines) v.push_back(std::move(ref));
}

void QualityScanner::observe(const ParseDiagnostic& d) {
  ++diagnostics_;
  if (d.kind == DiagnosticKind::ambiguous_split) {
    ++ambiguous_diagnostics_;
    note_line(ambiguous_lines_, {d.source_id, d.line_number});
  }
}

void QualityScanner::observe(const LogEntry& e) {
  ++entries_;
  const std::int64_t ts = e.timestamp.epoch_millis;

  if (e.split_recovered &&
      (has_delimiter(e.user_agent) || has_delimiter(e.referer) ||
       e.request.path.find_first_of(" \t,;") != std::string::npos)) {
    ++delimiter_recoveries_;
    note_line(delimiter_lines_, ref_of(e));
  }

  if (std::any_of(config_.id_locators.begin(), config_.id_locators.end(),
                  [&](const IdLocator& l) { return l.matches(e); })) {
    ++with_id_;
  } else {
    note_line(without_id_lines_, ref_of(e));
  }

  if (e.client_ip) {
    ++with_ip_;
    ++ip_counts_[*e.client_ip];
    std::optional<std::string> app = detect_app_open(e, config_.app_open_pattern);
    if (!app && e.referer) app = config_.app_open_pattern.app_from_referer(*e.referer);
    if (app) {
      auto& apps = ip_apps_[*e.client_ip];
      apps[*app] = {ts, ref_of(e)};
      std::size_t live = 0;
      std::int64_t start = ts;
      for (const auto& [name, seen] : apps) {
        if (ts - seen.first <= config_.delta_ms) {
          ++live;
          start = std::min(start, seen.first);
        }
      }
      if (static_cast<int>(live) > config_.concurrency_floor && (!witness_ || live > witness_->apps)) {
        Witness w{*e.client_ip, live, start, ts, {}};
        for (const auto& [name, seen] : apps) {
          if (ts - seen.first <= config_.delta_ms) w.lines.push_back(seen.second);
        }
        witness_ = std::move(w);
      }
    }
  }

  if (ts % 1000 == 0) ++zero_millis_;
  if (e.timestamp.granularity == Granularity::second) ++second_granularity_;
  auto [it, fresh] = last_ts_by_source_.try_emplace(e.source_id, ts);
  if (!fresh) {
    ++adjacent_pairs_;
    if (it->second == ts) {
      ++duplicate_pairs_;
      note_line(duplicate_lines_, ref_of(e));
    }
    it->second = ts;
  }

  if (e.referer) ++with_referer_;
  any_user_agent_ = any_user_agent_ || e.user_agent.has_value();
  any_duration_ = any_duration_ || e.duration.has_value();
  any_size_ = any_size_ || e.object_size.has_value();
}

std::map<std::string, double> QualityScanner::summary_metrics() const {
  std::int64_t top = 0;
  for (const auto& [ip, n] : ip_counts_) top = std::max(top, n);
  return {
      {"app_id_coverage", ratio(with_id_, entries_)},
      {"duplicate_timestamp_fraction", ratio(duplicate_pairs_, adjacent_pairs_)},
      {"parse_error_rate", ratio(diagnostics_, entries_ + diagnostics_)},
      {"referer_presence_rate", ratio(with_referer_, entries_)},
      {"top_ip_share", ratio(top, with_ip_)},
  };
}

LogFormatSpec QualityScanner::inferred_spec() const {
  LogFormatSpec spec;
  spec.has_client_ip = with_ip_ > 0;
  spec.has_referer = with_referer_ > 0;
  spec.has_user_agent = any_user_agent_;
  spec.has_duration = any_duration_;
  spec.has_size = any_size_;
  spec.has_status = true;
  spec.timestamp_granularity = entries_ > 0 && second_granularity_ == entries_
                                   ? Granularity::second
                                   : Granularity::millisecond;
  return spec;
}

std::optional<QualityIssue> QualityScanner::separator_in_field() const {
  const bool ambiguous = diagnostics_ > 0 && ambiguous_diagnostics_ > 0;
  if (!ambiguous && delimiter_recoveries_ == 0) return std::nullopt;
  QualityIssue issue{IssueKind::separator_in_field, Severity::warning, {},
                     std::string(mitigation_for(IssueKind::separator_in_field))};
  auto lines = ambiguous_lines_;
  lines.insert(lines.end(), delimiter_lines_.begin(), delimiter_lines_.end());
  issue.evidence.lines = sorted(std::move(lines));
  issue.evidence.statistics = {
      {"ambiguous_split_lines", static_cast<double>(ambiguous_diagnostics_)},
      {"recovered_fields_with_separators", static_cast<double>(delimiter_recoveries_)},
      {"parse_error_rate", ratio(diagnostics_, entries_ + diagnostics_)},
  };
  return issue;
}

std::optional<QualityIssue> QualityScanner::insufficient_fields(const LogFormatSpec& spec) const {
  return detect_insufficient_fields(spec, config_.profile);
}

std::optional<QualityIssue> QualityScanner::missing_app_identifier() const {
  if (entries_ == 0) return std::nullopt;
  const double coverage = ratio(with_id_, entries_);
  if (coverage >= config_.id_coverage_floor) return std::nullopt;
  QualityIssue issue{IssueKind::missing_app_identifier,
                     with_id_ == 0 ? Severity::critical : Severity::warning, {},
                     std::string(mitigation_for(IssueKind::missing_app_identifier))};
  issue.evidence.lines = without_id_lines_;
  issue.evidence.statistics = {{"app_id_coverage", coverage},
                               {"coverage_floor", config_.id_coverage_floor}};
  std::string locators;
  for (const auto& l : config_.id_locators) locators += (locators.empty() ? "" : ", ") + l.to_string();
  issue.evidence.notes.push_back("locators searched: " + (locators.empty() ? "none" : locators));
  return issue;
}

std::optional<QualityIssue> QualityScanner::hidden_client_ip(const LogFormatSpec& spec) const {
  std::int64_t top = 0;
  for (const auto& [ip, n] : ip_counts_) top = std::max(top, n);
  const double share = ratio(top, with_ip_);
  QualityIssue issue{IssueKind::hidden_client_ip, Severity::warning, {},
                     std::string(mitigation_for(IssueKind::hidden_client_ip))};
  if (!spec.has_client_ip) {
    issue.severity = Severity::critical;
    issue.evidence.notes.push_back("client address is not part of the log format");
    issue.evidence.statistics = {{"distinct_ip_count", 0.0}};
    return issue;
  }
  if (share <= config_.top_ip_share_threshold) return std::nullopt;
  issue.evidence.statistics = {{"top_ip_share", share},
                               {"distinct_ip_count", static_cast<double>(ip_counts_.size())},
                               {"top_ip_share_threshold", config_.top_ip_share_threshold}};
  if (witness_) {
    issue.evidence.lines = sorted(witness_->lines);
    issue.evidence.statistics.emplace_back("concurrency_witness_apps",
                                           static_cast<double>(witness_->apps));
    issue.evidence.statistics.emplace_back(
        "concurrency_witness_span_sec",
        static_cast<double>(witness_->window_end - witness_->window_start) / 1000.0);
    issue.evidence.notes.push_back(
        "address " + witness_->ip + " was active in " + std::to_string(witness_->apps) +
        " applications within one session window; read as several users behind one proxy "
        "(heuristic interpretation, a single heavy user would look the same)");
  }
  return issue;
}

std::optional<QualityIssue> QualityScanner::coarse_timestamp(const LogFormatSpec& spec) const {
  const bool declared = spec.timestamp_granularity == Granularity::second;
  const double zero = ratio(zero_millis_, entries_);
  const bool observed = entries_ > 0 && zero > config_.zero_millis_fraction;
  if (!declared && !observed) return std::nullopt;
  QualityIssue issue{IssueKind::coarse_timestamp, Severity::warning, {},
                     std::string(mitigation_for(IssueKind::coarse_timestamp))};
  issue.evidence.lines = duplicate_lines_;
  issue.evidence.statistics = {
      {"duplicate_timestamp_fraction", ratio(duplicate_pairs_, adjacent_pairs_)},
      {"zero_millisecond_fraction", zero}};
  if (declared) issue.evidence.notes.push_back("log format records whole seconds only");
  return issue;
}

// ---------------------------------------------------------------------------
// Stand-alone detectors

std::optional<QualityIssue> detect_separator_in_field(const std::vector<ParseDiagnostic>& diagnostics,
                                                      const std::vector<LogEntry>& entries,
                                                      const QualityConfig& config) {
  QualityScanner s(config);
  for (const auto& d : diagnostics) s.observe(d);
  for (const auto& e : entries) s.observe(e);
  return s.separator_in_field();
}

std::optional<QualityIssue> detect_insufficient_fields(const LogFormatSpec& spec,
                                                       const AnalysisProfile& profile) {
  std::vector<std::string> notes;
  bool critical = false;
  for (auto k : profile.required) {
    if (!spec_has(spec, k)) {
      notes.push_back("missing required field: " + std::string(field_name(k)));
      critical = true;
    }
  }
  for (auto k : profile.recommended) {
    if (!spec_has(spec, k)) notes.push_back("missing recommended field: " + std::string(field_name(k)));
  }
  if (notes.empty()) return std::nullopt;
  QualityIssue issue{IssueKind::insufficient_fields, critical ? Severity::critical : Severity::warning,
                     {}, std::string(mitigation_for(IssueKind::insufficient_fields))};
  issue.evidence.notes = std::move(notes);
  issue.evidence.notes.push_back("analysis profile: " + profile.name);
  return issue;
}

std::optional<QualityIssue> detect_missing_app_identifier(const std::vector<LogEntry>& entries,
                                                          const QualityConfig& config) {
  QualityScanner s(config);
  for (const auto& e : entries) s.observe(e);
  return s.missing_app_identifier();
}

std::optional<QualityIssue> detect_hidden_client_ip(const std::vector<LogEntry>& entries,
                                                    const LogFormatSpec& spec,
                                                    const QualityConfig& config) {
  QualityScanner s(config);
  for (const auto& e : entries) s.observe(e);
  return s.hidden_client_ip(spec);
}

std::optional<QualityIssue> detect_coarse_timestamp(const std::vector<LogEntry>& entries,
                                                    const LogFormatSpec& spec,
                                                    const QualityConfig& config) {
  QualityScanner s(config);
  for (const auto& e : entries) s.observe(e);
  return s.coarse_timestamp(spec);
}

// ---------------------------------------------------------------------------
// Report

bool QualityReport::has(IssueKind k) const { return find(k) != nullptr; }

const QualityIssue* QualityReport::find(IssueKind k) const {
  for (const auto& i : issues) {
    if (i.kind == k) return &i;
  }
  return nullptr;
}

bool QualityReport::has_critical() const {
  return std::any_of(issues.begin(), issues.end(),
                     [](const QualityIssue& i) { return i.severity == Severity::critical; });
}

QualityReport build_report(const std::string& corpus_id, const QualityScanner& scanner,
                           const LogFormatSpec& spec) {
  QualityReport r;
  r.corpus_id = corpus_id;
  r.spec = spec;
  const auto& disabled = scanner.config().disabled;
  auto add = [&](IssueKind k, std::optional<QualityIssue> issue) {
    if (!disabled.count(k) && issue) r.issues.push_back(std::move(*issue));
  };
  add(IssueKind::separator_in_field, scanner.separator_in_field());
  add(IssueKind::insufficient_fields, scanner.insufficient_fields(spec));
  add(IssueKind::missing_app_identifier, scanner.missing_app_identifier());
  add(IssueKind::hidden_client_ip, scanner.hidden_client_ip(spec));
  add(IssueKind::coarse_timestamp, scanner.coarse_timestamp(spec));
  r.summary_metrics = scanner.summary_metrics();
  return r;
}

QualityReport build_report(const std::string& corpus_id, const std::vector<LogEntry>& entries,
                           const std::vector<ParseDiagnostic>& diagnostics,
                           const LogFormatSpec& spec, const QualityConfig& config) {
  QualityScanner s(config);
  for (const auto& d : diagnostics) s.observe(d);
  for (const auto& e : entries) s.observe(e);
  return build_report(corpus_id, s, spec);
}

std::string report_to_json(const QualityReport& report) {
  using json = nlohmann::ordered_json;
  json j;
  j["corpus_id"] = report.corpus_id;
  const auto& s = report.spec;
  json spec;
  if (!s.format.directives.empty()) spec["format"] = s.format.to_string();
  spec["has_client_ip"] = s.has_client_ip;
  spec["timestamp_granularity"] = to_string(s.timestamp_granularity);
  spec["has_duration"] = s.has_duration;
  spec["has_referer"] = s.has_referer;
  spec["has_user_agent"] = s.has_user_agent;
  spec["has_status"] = s.has_status;
  spec["has_size"] = s.has_size;
  j["spec"] = std::move(spec);
  json issues = json::array();
  for (const auto& i : report.issues) {
    json lines = json::array();
    for (const auto& l : i.evidence.lines) {
      lines.push_back({{"source_id", l.source_id}, {"line", l.line_number}});
    }
    json stats = json::object();
    for (const auto& [k, v] : i.evidence.statistics) stats[k] = v;
    issues.push_back({{"kind", to_string(i.kind)},
                      {"severity", to_string(i.severity)},
                      {"evidence", {{"lines", std::move(lines)},
                                    {"statistics", std::move(stats)},
                                    {"notes", i.evidence.notes}}},
                      {"mitigation", i.mitigation}});
  }
  j["issues"] = std::move(issues);
  json metrics = json::object();
  for (const auto& [k, v] : report.summary_metrics) metrics[k] = v;
  j["summary_metrics"] = std::move(metrics);
  return j.dump(2) + "\n";
}

std::string report_to_text(const QualityReport& report) {
  std::ostringstream out;
  out << "Quality report for " << report.corpus_id << "\n\n";
  if (report.issues.empty()) out << "No issues detected.\n";
  for (const auto& i : report.issues) {
    out << "[" << to_string(i.severity) << "] " << to_string(i.kind) << "\n";
    out << "  mitigation: " << i.mitigation << "\n";
    for (const auto& [k, v] : i.evidence.statistics) out << "  " << k << " = " << v << "\n";
    for (const auto& n : i.evidence.notes) out << "  note: " << n << "\n";
    std::size_t shown = 0;
    for (const auto& l : i.evidence.lines) {
      if (shown++ == 5) {
        out << "  ... " << i.evidence.lines.size() - 5 << " more lines\n";
        break;
      }
      out << "  line " << l.source_id << ":" << l.line_number << "\n";
    }
    out << "\n";
  }
  out << "Summary metrics\n";
  for (const auto& [k, v] : report.summary_metrics) out << "  " << k << " = " << v << "\n";
  return out.str();
}

}  // namespace wapilog
