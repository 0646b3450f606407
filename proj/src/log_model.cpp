#include "wapilog/log_model.hpp"

#include <algorithm>

namespace wapilog {

std::string_view to_string(Granularity g) {
  return g == Granularity::second ? "second" : "millisecond";
}

std::optional<Granularity> granularity_from_string(std::string_view s) {
  if (s == "second") return Granularity::second;
  if (s == "millisecond") return Granularity::millisecond;
  return std::nullopt;
}

std::strong_ordering compare_entries(const LogEntry& a, const LogEntry& b) {
  if (auto c = a.timestamp.epoch_millis <=> b.timestamp.epoch_millis; c != 0) return c;
  if (auto c = a.source_id <=> b.source_id; c != 0) return c;
  return a.file_order <=> b.file_order;
}

std::optional<std::string> normalize_optional(std::string_view raw) {
  if (raw.empty() || raw == "-") return std::nullopt;
  return std::string(raw);
}

namespace {

bool is_upper_token(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= 'A' && c <= 'Z') || c == '-' || c == '_';
         });
}

void check_text_optional(const std::optional<std::string>& v, const char* field,
                         std::vector<Violation>& out) {
  if (v && (v->empty() || *v == "-")) out.push_back({field, "present but empty or \"-\""});
}

}  // namespace

std::vector<Violation> validate_entry(const LogEntry& e) {
  std::vector<Violation> out;
  check_text_optional(e.client_ip, "client_ip", out);
  if (e.timestamp.epoch_millis < 0) {
    out.push_back({"timestamp", "epoch_millis is negative"});
  } else if (e.timestamp.granularity == Granularity::second && !e.timestamp_repaired &&
             e.timestamp.epoch_millis % 1000 != 0) {
    out.push_back({"timestamp", "second granularity with non-zero milliseconds"});
  }
  if (!is_upper_token(e.request.method)) {
    out.push_back({"request.method", "must be a non-empty upper-case token"});
  }
  if (e.request.path.empty() || e.request.path.front() != '/') {
    out.push_back({"request.path", "must begin with \"/\""});
  }
  if (e.status < 100 || e.status > 599) out.push_back({"status", "outside 100-599"});
  if (e.object_size && *e.object_size < 0) out.push_back({"object_size", "negative"});
  check_text_optional(e.referer, "referer", out);
  check_text_optional(e.user_agent, "user_agent", out);
  if (e.duration && *e.duration < 0) out.push_back({"duration", "negative"});
  if (e.file_order < 0) out.push_back({"file_order", "negative"});
  return out;
}

}  // namespace wapilog
