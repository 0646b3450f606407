#include "wapilog/sessionizer.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "wapilog/errors.hpp"

namespace wapilog {

std::string_view to_string(Heuristic h) {
  switch (h) {
    case Heuristic::time_total: return "time";
    case Heuristic::page_stay: return "page-stay";
    case Heuristic::navigation_time: return "nav";
  }
  return "time";
}

std::optional<Heuristic> heuristic_from_string(std::string_view s) {
  if (s == "time" || s == "time_total") return Heuristic::time_total;
  if (s == "page-stay" || s == "page_stay") return Heuristic::page_stay;
  if (s == "nav" || s == "navigation" || s == "navigation_time") return Heuristic::navigation_time;
  return std::nullopt;
}

std::string_view to_string(DiscardReason r) {
  switch (r) {
    case DiscardReason::no_open_app: return "no_open_app";
    case DiscardReason::over_threshold: return "over_threshold";
    case DiscardReason::ambiguous: return "ambiguous";
  }
  return "no_open_app";
}

std::optional<DiscardReason> discard_reason_from_string(std::string_view s) {
  if (s == "no_open_app") return DiscardReason::no_open_app;
  if (s == "over_threshold") return DiscardReason::over_threshold;
  if (s == "ambiguous") return DiscardReason::ambiguous;
  return std::nullopt;
}

std::optional<std::int64_t> parse_duration(std::string_view s) {
  std::int64_t value = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || p == s.data() || value < 0) return std::nullopt;
  std::string_view unit(p, static_cast<std::size_t>(s.data() + s.size() - p));
  if (unit.empty() || unit == "ms") return value;
  if (unit == "s") return value * 1000;
  if (unit == "m" || unit == "min") return value * 60'000;
  if (unit == "h") return value * 3'600'000;
  return std::nullopt;
}

std::string format_duration(std::int64_t millis) {
  if (millis != 0 && millis % 3'600'000 == 0) return std::to_string(millis / 3'600'000) + "h";
  if (millis != 0 && millis % 60'000 == 0) return std::to_string(millis / 60'000) + "m";
  if (millis != 0 && millis % 1000 == 0) return std::to_string(millis / 1000) + "s";
  return std::to_string(millis) + "ms";
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> segments_of(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t slash = path.find('/', start);
    if (slash == std::string_view::npos) slash = path.size();
    out.push_back(path.substr(start, slash - start));
    start = slash + 1;
  }
  return out;
}

}  // namespace

AppOpenPattern::AppOpenPattern() : AppOpenPattern("/{app}/index.action") {}

AppOpenPattern::AppOpenPattern(std::string pattern) : text_(std::move(pattern)) {
  if (text_.empty() || text_.front() != '/') {
    throw ConfigError("app-open pattern must start with '/': " + text_);
  }
  std::size_t apps = 0;
  for (auto seg : segments_of(text_)) {
    if (seg == "{app}") {
      app_index_ = segments_.size();
      ++apps;
    }
    segments_.emplace_back(seg);
  }
  if (apps != 1) throw ConfigError("app-open pattern needs exactly one {app} segment: " + text_);
}

std::optional<std::string> AppOpenPattern::match_path(std::string_view path) const {
  auto segs = segments_of(path);
  if (segs.size() != segments_.size()) return std::nullopt;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i == app_index_) {
      if (segs[i].empty()) return std::nullopt;
    } else if (segments_[i] != "*" && segs[i] != segments_[i]) {
      return std::nullopt;
    }
  }
  return std::string(segs[app_index_]);
}

std::optional<std::string> AppOpenPattern::app_from_referer(std::string_view referer) const {
  std::string_view path = referer;
  if (auto scheme = path.find("://"); scheme != std::string_view::npos) {
    std::size_t slash = path.find('/', scheme + 3);
    if (slash == std::string_view::npos) return std::nullopt;
    path = path.substr(slash);
  }
  path = path.substr(0, path.find_first_of("?#"));
  std::string rooted;
  if (path.empty() || path.front() != '/') {
    rooted = "/" + std::string(path);
    path = rooted;
  }
  auto segs = segments_of(path);
  if (app_index_ >= segs.size() || segs[app_index_].empty()) return std::nullopt;
  return std::string(segs[app_index_]);
}

void SessionizerConfig::validate() const {
  if (delta_ms <= 0) throw ConfigError("delta must be positive");
  if (heuristic == Heuristic::page_stay && theta_ms <= 0) {
    throw ConfigError("theta must be positive for the page-stay heuristic");
  }
}

std::string SessionizerConfig::label() const {
  const auto window = heuristic == Heuristic::page_stay ? theta_ms : delta_ms;
  return std::string(to_string(heuristic)) + " " + format_duration(window);
}

std::optional<std::string> detect_app_open(const LogEntry& e, const AppOpenPattern& pattern) {
  if (e.request.method != "GET") return std::nullopt;
  return pattern.match_path(e.request.path);
}

std::optional<std::string> user_key(const LogEntry& e, const std::vector<UserKeyField>& fields) {
  std::optional<std::string> key;
  for (auto f : fields) {
    const auto& v = f == UserKeyField::client_ip ? e.client_ip : e.user_agent;
    if (!v) continue;
    if (key) *key += '|' + *v;
    else key = *v;
  }
  return key;
}

// ---------------------------------------------------------------------------

namespace {

// Internal key so that "no key" never collides with a real value.
std::string key_slot(const std::optional<std::string>& key) { return key ? "k:" + *key : ""; }

}  // namespace

Sessionizer::Sessionizer(SessionizerConfig config, SessionSink on_session, DiscardSink on_discard,
                         const LogFormatSpec* spec)
    : config_(std::move(config)),
      on_session_(std::move(on_session)),
      on_discard_(std::move(on_discard)) {
  config_.validate();
  if (config_.heuristic == Heuristic::navigation_time && spec && !spec->has_referer) {
    throw ConfigError("the navigation heuristic needs a log format that records the referer");
  }
}

std::string Sessionizer::next_id() { return "s" + std::to_string(++counter_); }

void Sessionizer::expire(std::int64_t now) {
  if (now <= next_expiry_) return;
  const auto window =
      config_.heuristic == Heuristic::page_stay ? config_.theta_ms : config_.delta_ms;
  next_expiry_ = INT64_MAX;
  std::vector<OpenSession> keep;
  keep.reserve(open_.size());
  for (auto& s : open_) {
    if (now - s.last_activity > window) {
      on_session_(std::move(s.session));
    } else {
      next_expiry_ = std::min(next_expiry_, s.last_activity + window);
      keep.push_back(std::move(s));
    }
  }
  open_ = std::move(keep);
}

void Sessionizer::open_session(LogEntry&& e, std::optional<std::string> app,
                               std::optional<std::string> key) {
  const auto window =
      config_.heuristic == Heuristic::page_stay ? config_.theta_ms : config_.delta_ms;
  OpenSession s;
  s.session.session_id = next_id();
  s.session.app = app;
  s.session.user_key = key;
  s.last_activity = e.timestamp.epoch_millis;
  s.current_app = app;
  if (app) {
    opened_apps_.emplace(key_slot(key), *app);
    opened_keys_.insert(key_slot(key));
  }
  next_expiry_ = std::min(next_expiry_, s.last_activity + window);
  s.session.entries.push_back(SessionEntry{std::move(e), std::move(app), false});
  open_.push_back(std::move(s));
}

void Sessionizer::discard(LogEntry&& e, DiscardReason reason) {
  on_discard_(DiscardedEntry{std::move(e), reason});
}

void Sessionizer::push(LogEntry e) {
  if (last_ts_ && e.timestamp.epoch_millis <= *last_ts_) {
    throw std::invalid_argument("entry " + e.source_id + ":" + std::to_string(e.file_order) +
                                " does not follow its predecessor in time; repair timestamps first");
  }
  last_ts_ = e.timestamp.epoch_millis;
  expire(e.timestamp.epoch_millis);
  if (config_.heuristic == Heuristic::page_stay) push_page_stay(std::move(e));
  else push_app_bound(std::move(e));
}

void Sessionizer::push_app_bound(LogEntry&& e) {
  auto key = user_key(e, config_.user_key_fields);
  if (auto app = detect_app_open(e, config_.app_open_pattern)) {
    open_session(std::move(e), std::move(app), std::move(key));
    return;
  }
  const bool nav = config_.heuristic == Heuristic::navigation_time;
  std::optional<std::string> wanted_app;
  if (nav) {
    if (e.referer) wanted_app = config_.app_open_pattern.app_from_referer(*e.referer);
    if (!wanted_app) {
      discard(std::move(e), DiscardReason::no_open_app);
      return;
    }
  }
  const std::int64_t now = e.timestamp.epoch_millis;
  OpenSession* chosen = nullptr;
  bool ambiguous = false;
  // Most recently opened eligible session wins; a second one makes it ambiguous.
  for (auto it = open_.rbegin(); it != open_.rend(); ++it) {
    if (!config_.user_key_fields.empty() && it->session.user_key != key) continue;
    if (nav && it->session.app != wanted_app) continue;
    if (now - it->last_activity > config_.delta_ms) continue;
    if (chosen) {
      ambiguous = true;
      break;
    }
    chosen = &*it;
  }
  if (!chosen) {
    const auto slot = key_slot(config_.user_key_fields.empty() ? std::nullopt : key);
    bool seen = nav ? opened_apps_.count({slot, *wanted_app}) > 0 : opened_keys_.count(slot) > 0;
    discard(std::move(e), seen ? DiscardReason::over_threshold : DiscardReason::no_open_app);
    return;
  }
  chosen->last_activity = now;
  chosen->session.entries.push_back(SessionEntry{std::move(e), chosen->session.app, ambiguous});
}

void Sessionizer::push_page_stay(LogEntry&& e) {
  auto key = user_key(e, config_.user_key_fields);
  auto app = detect_app_open(e, config_.app_open_pattern);
  // Expiry already closed every group idle for more than theta.
  for (auto& s : open_) {
    if (!config_.user_key_fields.empty() && s.session.user_key != key) continue;
    if (app) {
      s.current_app = app;
      s.session.app = app;
    }
    s.last_activity = e.timestamp.epoch_millis;
    s.session.entries.push_back(SessionEntry{std::move(e), s.current_app, false});
    return;
  }
  open_session(std::move(e), std::move(app), std::move(key));
}

void Sessionizer::finish() {
  for (auto& s : open_) on_session_(std::move(s.session));
  open_.clear();
  next_expiry_ = INT64_MAX;
}

// ---------------------------------------------------------------------------

SessionizationResult sessionize(const std::vector<LogEntry>& entries,
                                const SessionizerConfig& config, const LogFormatSpec* spec) {
  SessionizationResult out;
  Sessionizer s(
      config, [&](Session&& x) { out.sessions.push_back(std::move(x)); },
      [&](DiscardedEntry&& d) { out.discarded.push_back(std::move(d)); }, spec);
  for (const auto& e : entries) s.push(e);
  s.finish();
  return out;
}

namespace {

void require(const SessionizerConfig& c, Heuristic h) {
  if (c.heuristic != h) {
    throw ConfigError("config names heuristic " + std::string(to_string(c.heuristic)) +
                      ", expected " + std::string(to_string(h)));
  }
}

}  // namespace

SessionizationResult sessionize_time(const std::vector<LogEntry>& entries,
                                     const SessionizerConfig& config) {
  require(config, Heuristic::time_total);
  return sessionize(entries, config);
}

SessionizationResult sessionize_page_stay(const std::vector<LogEntry>& entries,
                                          const SessionizerConfig& config) {
  require(config, Heuristic::page_stay);
  return sessionize(entries, config);
}

SessionizationResult sessionize_navigation(const std::vector<LogEntry>& entries,
                                           const SessionizerConfig& config,
                                           const LogFormatSpec* spec) {
  require(config, Heuristic::navigation_time);
  return sessionize(entries, config, spec);
}

}  // namespace wapilog
