#pragma once

// Session reconstruction for stateless WAPI logs. Sessions start at an
// application-opening request (by default `GET /{app}/index.action`); the
// heuristics differ in how the following requests are attributed.

#include <climits>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wapilog/format.hpp"
#include "wapilog/log_model.hpp"

namespace wapilog {

enum class Heuristic { time_total, page_stay, navigation_time };

std::string_view to_string(Heuristic h);
/// Accepts "time", "page-stay", "nav" and the enumerator names.
std::optional<Heuristic> heuristic_from_string(std::string_view s);

/// "500ms", "90s", "5m", "1h" or a bare number of milliseconds.
std::optional<std::int64_t> parse_duration(std::string_view s);
std::string format_duration(std::int64_t millis);

/// Path pattern whose segments are literals, `*`, or exactly one `{app}`.
class AppOpenPattern {
 public:
  AppOpenPattern();  // "/{app}/index.action"
  /// Throws ConfigError unless the pattern has exactly one {app} segment.
  explicit AppOpenPattern(std::string pattern);

  const std::string& text() const { return text_; }
  std::optional<std::string> match_path(std::string_view path) const;
  /// Application named by a referer: the segment at the {app} position of
  /// the referer's path. Scheme-less referers ("App1") are read as paths.
  std::optional<std::string> app_from_referer(std::string_view referer) const;

 private:
  std::string text_;
  std::vector<std::string> segments_;
  std::size_t app_index_ = 0;
};

enum class UserKeyField { client_ip, user_agent };

struct SessionizerConfig {
  Heuristic heuristic = Heuristic::time_total;
  std::int64_t delta_ms = 30 * 60 * 1000;
  std::int64_t theta_ms = 10 * 60 * 1000;
  AppOpenPattern app_open_pattern;
  std::vector<UserKeyField> user_key_fields;  // empty: no user distinction

  /// Throws ConfigError when delta <= 0, or theta <= 0 for page-stay.
  void validate() const;
  /// "time 5m", "nav 15m", "page-stay 10m".
  std::string label() const;
};

std::optional<std::string> detect_app_open(const LogEntry& e, const AppOpenPattern& pattern);

/// Selected present fields joined by '|'; nullopt when none is present.
std::optional<std::string> user_key(const LogEntry& e, const std::vector<UserKeyField>& fields);

struct SessionEntry {
  LogEntry entry;
  std::optional<std::string> app;  // attribution of this entry
  bool ambiguous = false;          // another eligible session existed
};

struct Session {
  std::string session_id;
  std::optional<std::string> app;
  std::optional<std::string> user_key;
  std::vector<SessionEntry> entries;

  Timestamp opened_at() const { return entries.front().entry.timestamp; }
  Timestamp closed_at() const { return entries.back().entry.timestamp; }
};

enum class DiscardReason { no_open_app, over_threshold, ambiguous };

std::string_view to_string(DiscardReason r);
std::optional<DiscardReason> discard_reason_from_string(std::string_view s);

struct DiscardedEntry {
  LogEntry entry;
  DiscardReason reason = DiscardReason::no_open_app;
};

struct SessionizationResult {
  std::vector<Session> sessions;
  std::vector<DiscardedEntry> discarded;
};

/// Single sequential pass holding only the open-session table. Sessions are
/// handed out once no later entry can join them, and the rest at finish().
/// Input must be ordered with strictly increasing timestamps; push() throws
/// std::invalid_argument otherwise.
class Sessionizer {
 public:
  using SessionSink = std::function<void(Session&&)>;
  using DiscardSink = std::function<void(DiscardedEntry&&)>;

  /// Throws ConfigError for an invalid config, or for the navigation
  /// heuristic when `spec` says the referer is not logged.
  Sessionizer(SessionizerConfig config, SessionSink on_session, DiscardSink on_discard,
              const LogFormatSpec* spec = nullptr);

  void push(LogEntry e);
  void finish();

  std::size_t open_sessions() const { return open_.size(); }

 private:
  struct OpenSession {
    Session session;
    std::int64_t last_activity = 0;
    std::optional<std::string> current_app;  // page-stay attribution
  };

  void expire(std::int64_t now);
  void push_app_bound(LogEntry&& e);
  void push_page_stay(LogEntry&& e);
  void open_session(LogEntry&& e, std::optional<std::string> app, std::optional<std::string> key);
  void discard(LogEntry&& e, DiscardReason reason);
  std::string next_id();

  SessionizerConfig config_;
  SessionSink on_session_;
  DiscardSink on_discard_;
  std::vector<OpenSession> open_;  // in opening order
  std::int64_t next_expiry_ = INT64_MAX;
  std::optional<std::int64_t> last_ts_;
  std::uint64_t counter_ = 0;
  // Applications ever opened, per user key ("" when keys are not used).
  std::set<std::pair<std::string, std::string>> opened_apps_;
  std::set<std::string> opened_keys_;
};

SessionizationResult sessionize(const std::vector<LogEntry>& entries,
                                 const SessionizerConfig& config,
                                 const LogFormatSpec* spec = nullptr);

// Heuristic-specific entry points; each throws ConfigError if the config
// names a different heuristic.
SessionizationResult sessionize_time(const std::vector<LogEntry>& entries,
                                     const SessionizerConfig& config);
SessionizationResult sessionize_page_stay(const std::vector<LogEntry>& entries,
                                          const SessionizerConfig& config);
SessionizationResult sessionize_navigation(const std::vector<LogEntry>& entries,
                                           const SessionizerConfig& config,
                                           const LogFormatSpec* spec = nullptr);

}  // namespace wapilog
