#include "wapilog/stats.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "wapilog/errors.hpp"

namespace wapilog {

SessionStats session_stats(const std::vector<Session>& sessions, int min_size, std::string label) {
  SessionStats st;
  st.heuristic_label = std::move(label);
  st.min_size = min_size;
  double total_ms = 0;
  double total_size = 0;
  for (const auto& s : sessions) {
    if (static_cast<std::int64_t>(s.entries.size()) <= min_size) continue;
    ++st.session_count;
    total_ms += static_cast<double>(s.closed_at().epoch_millis - s.opened_at().epoch_millis);
    total_size += static_cast<double>(s.entries.size());
  }
  if (st.session_count > 0) {
    const auto n = static_cast<double>(st.session_count);
    st.avg_duration_sec = total_ms / 1000.0 / n;
    st.avg_size = total_size / n;
  }
  return st;
}

std::string request_shape(const LogEntry& e, bool generalized) {
  std::string shape = e.request.method + " ";
  shape += generalized && e.generalized_path ? *e.generalized_path : e.request.path;
  if (!e.request.query.empty()) {
    std::vector<std::string> keys;
    keys.reserve(e.request.query.size());
    for (const auto& [k, v] : e.request.query) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    shape += '?';
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (i) shape += '&';
      shape += keys[i];
    }
  }
  return shape;
}

std::vector<AppRequestProfile> distinct_requests_per_app(const SessionizationResult& result,
                                                         bool generalized) {
  std::map<std::string, std::set<std::string>> shapes;
  for (const auto& s : result.sessions) {
    for (const auto& se : s.entries) {
      if (!se.app) continue;
      shapes[*se.app].insert(request_shape(se.entry, generalized));
    }
  }
  std::vector<AppRequestProfile> out;
  out.reserve(shapes.size());
  for (auto& [app, set] : shapes) {
    AppRequestProfile p;
    p.app = app;
    p.distinct_requests = static_cast<std::int64_t>(set.size());
    for (const auto& shape : set) {
      if (p.examples.size() == 10) break;
      p.examples.push_back(shape);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ComparisonRow> compare_heuristics(const std::vector<LogEntry>& entries,
                                              const std::vector<SessionizerConfig>& configs,
                                              int min_size, const LogFormatSpec* spec) {
  if (configs.empty()) throw ConfigError("compare needs at least one sessionizer config");
  std::vector<ComparisonRow> rows;
  rows.reserve(configs.size());
  for (const auto& c : configs) {
    ComparisonRow row;
    row.label = c.label();
    try {
      auto result = sessionize(entries, c, spec);
      row.stats = session_stats(result, min_size, row.label);
      row.discarded = static_cast<std::int64_t>(result.discarded.size());
    } catch (const ConfigError& ex) {
      row.error = ex.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "heuristic,no_of_sessions,avg_duration_sec,avg_size,discarded\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.label;
    out += ',';
    if (!r.stats) {
      out += "error,,,\n";
      continue;
    }
    out += std::to_string(r.stats->session_count);
    out += ',';
    if (r.stats->avg_duration_sec) {
      std::snprintf(buf, sizeof buf, "%.0f", *r.stats->avg_duration_sec);
      out += buf;
    }
    out += ',';
    if (r.stats->avg_size) {
      std::snprintf(buf, sizeof buf, "%.2f", *r.stats->avg_size);
      out += buf;
    }
    out += ',';
    out += std::to_string(r.discarded);
    out += '\n';
  }
  return out;
}

}  // namespace wapilog
