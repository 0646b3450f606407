#include "wapilog/parser.hpp"

#include <array>
#include <charconv>
#include <cstdio>

#include "wapilog/errors.hpp"

namespace wapilog {

std::string_view to_string(DiagnosticKind k) {
  switch (k) {
    case DiagnosticKind::malformed_line: return "malformed_line";
    case DiagnosticKind::ambiguous_split: return "ambiguous_split";
    case DiagnosticKind::bad_timestamp: return "bad_timestamp";
    case DiagnosticKind::bad_status: return "bad_status";
  }
  return "malformed_line";
}

std::optional<DiagnosticKind> diagnostic_kind_from_string(std::string_view s) {
  for (auto k : {DiagnosticKind::malformed_line, DiagnosticKind::ambiguous_split,
                 DiagnosticKind::bad_timestamp, DiagnosticKind::bad_status}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Timestamps

namespace {

constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::optional<ParsedTime> parse_clf_time(std::string_view s) {
  int day = 0, year = 0, hour = 0, minute = 0, sec = 0, millis = 0, tzh = 0, tzm = 0;
  if (!digits(s, 0, 2, day) || s.size() < 26 || s[2] != '/' || s[6] != '/' || s[11] != ':' ||
      s[14] != ':' || s[17] != ':') {
    return std::nullopt;
  }
  unsigned month = 0;
  for (unsigned i = 0; i < kMonths.size(); ++i) {
    if (s.substr(3, 3) == kMonths[i]) month = i + 1;
  }
  if (month == 0 || !digits(s, 7, 4, year) || !digits(s, 12, 2, hour) ||
      !digits(s, 15, 2, minute) || !digits(s, 18, 2, sec)) {
    return std::nullopt;
  }
  std::size_t pos = 20;
  bool has_millis = false;
  if (s[pos] == '.') {
    if (!digits(s, pos + 1, 3, millis)) return std::nullopt;
    has_millis = true;
    pos += 4;
  }
  if (s.size() != pos + 6 || s[pos] != ' ' || (s[pos + 1] != '+' && s[pos + 1] != '-') ||
      !digits(s, pos + 2, 2, tzh) || !digits(s, pos + 4, 2, tzm)) {
    return std::nullopt;
  }
  if (day < 1 || static_cast<unsigned>(day) > days_in_month(year, month) || hour > 23 ||
      minute > 59 || sec > 60 || tzh > 23 || tzm > 59) {
    return std::nullopt;
  }
  const std::int64_t offset_minutes = (s[pos + 1] == '-' ? -1 : 1) * (tzh * 60 + tzm);
  const std::int64_t days = days_from_civil(year, month, static_cast<unsigned>(day));
  const std::int64_t secs =
      days * 86400 + hour * 3600 + minute * 60 + sec - offset_minutes * 60;
  return ParsedTime{secs * 1000 + millis, has_millis};
}

std::string format_clf_time(std::int64_t epoch_millis, bool with_millis) {
  std::int64_t secs = epoch_millis / 1000;
  std::int64_t ms = epoch_millis % 1000;
  if (ms < 0) {
    ms += 1000;
    --secs;
  }
  std::int64_t days = secs / 86400;
  std::int64_t rem = secs % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[48];
  if (with_millis) {
    std::snprintf(buf, sizeof buf, "%02u/%s/%04lld:%02lld:%02lld:%02lld.%03lld +0000", d,
                  kMonths[m - 1].data(), static_cast<long long>(y),
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60), static_cast<long long>(ms));
  } else {
    std::snprintf(buf, sizeof buf, "%02u/%s/%04lld:%02lld:%02lld:%02lld +0000", d,
                  kMonths[m - 1].data(), static_cast<long long>(y),
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Percent encoding and request lines

namespace {

bool is_unreserved(unsigned char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '.' || c == '_' || c == '~' || c == '/' || c == ':' || c == '@' ||
         c == '!' || c == '$' || c == '\'' || c == '(' || c == ')' || c == '*' || c == ',' ||
         c == ';';
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_space(char c) { return c == ' ' || c == '\t'; }

ParseDiagnostic diag(const LineContext& ctx, DiagnosticKind kind, std::string_view line,
                     std::string detail) {
  return ParseDiagnostic{ctx.source_id, ctx.line_number, kind, std::string(line),
                         std::move(detail)};
}

bool is_method_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!((c >= 'A' && c <= 'Z') || c == '-' || c == '_')) return false;
  }
  return true;
}

std::string decode_or_raw(std::string_view s) {
  if (auto d = percent_decode(s)) return std::move(*d);
  return std::string(s);
}

}  // namespace

std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (is_unreserved(c)) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

std::optional<std::string> percent_decode(std::string_view s) {
  if (s.find('%') == std::string_view::npos) return std::string(s);
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 2 >= s.size()) return std::nullopt;
    int hi = hex_value(s[i + 1]);
    int lo = hex_value(s[i + 2]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

RequestOutcome split_request(std::string_view field) {
  const LineContext ctx{};
  std::string_view s = trim(field);
  std::size_t first = s.find(' ');
  if (first == std::string_view::npos) {
    return diag(ctx, DiagnosticKind::malformed_line, field, "request has no method/URI split");
  }
  std::size_t last = s.rfind(' ');
  RequestLine r;
  std::string_view method = s.substr(0, first);
  std::string_view uri;
  if (first == last) {
    uri = trim(s.substr(first + 1));
  } else {
    uri = trim(s.substr(first + 1, last - first - 1));
    r.protocol = std::string(s.substr(last + 1));
  }
  if (!is_method_token(method)) {
    return diag(ctx, DiagnosticKind::malformed_line, field, "invalid request method");
  }
  r.method = std::string(method);
  // Absolute-form targets (proxy requests) keep only their path.
  for (std::string_view scheme : {"http://", "https://"}) {
    if (uri.substr(0, scheme.size()) == scheme) {
      std::size_t slash = uri.find('/', scheme.size());
      uri = slash == std::string_view::npos ? std::string_view("/") : uri.substr(slash);
    }
  }
  if (uri.empty() || uri.front() != '/') {
    return diag(ctx, DiagnosticKind::malformed_line, field, "request URI does not start with '/'");
  }
  std::size_t qmark = uri.find('?');
  r.path = std::string(uri.substr(0, qmark));
  if (qmark != std::string_view::npos) {
    std::string_view qs = uri.substr(qmark + 1);
    while (!qs.empty()) {
      std::size_t amp = qs.find('&');
      std::string_view part = qs.substr(0, amp);
      qs = amp == std::string_view::npos ? std::string_view{} : qs.substr(amp + 1);
      if (part.empty()) continue;
      std::size_t eq = part.find('=');
      if (eq == std::string_view::npos) {
        r.query.emplace_back(decode_or_raw(part), std::string{});
      } else {
        r.query.emplace_back(decode_or_raw(part.substr(0, eq)), decode_or_raw(part.substr(eq + 1)));
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Line parsing

namespace {

bool is_protocol_token(std::string_view t) {
  if (t.size() < 6 || t.substr(0, 5) != "HTTP/") return false;
  bool seen_digit = false;
  for (char c : t.substr(5)) {
    if (c >= '0' && c <= '9') seen_digit = true;
    else if (c != '.') return false;
  }
  return seen_digit;
}

bool single_token_kind(FieldKind k) {
  switch (k) {
    case FieldKind::client_ip:
    case FieldKind::ident:
    case FieldKind::authuser:
    case FieldKind::status:
    case FieldKind::size:
    case FieldKind::duration:
    case FieldKind::referer:
      return true;
    default:
      return false;
  }
}

bool all_space(std::string_view s) {
  for (char c : s) {
    if (!is_space(c)) return false;
  }
  return true;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::size_t count_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in = false;
  for (char c : s) {
    if (is_space(c)) in = false;
    else if (!in) {
      in = true;
      ++n;
    }
  }
  return n;
}

class LineParser {
 public:
  LineParser(std::string_view line, const LogFormatSpec& spec, const LineContext& ctx)
      : line_(line), spec_(spec), ctx_(ctx) {
    while (!line_.empty() && (line_.back() == '\r' || line_.back() == '\n')) line_.remove_suffix(1);
  }

  ParseOutcome run() {
    if (trim(line_).empty()) return fail(DiagnosticKind::malformed_line, "blank line");
    entry_.source_id = ctx_.source_id;
    entry_.file_order = ctx_.line_number - 1;
    entry_.timestamp.granularity = spec_.timestamp_granularity;
    const auto& layout = spec_.field_layout;
    for (std::size_t i = 0; i < layout.size(); ++i) {
      if (auto d = step(i)) return std::move(*d);
    }
    if (!all_space(line_.substr(pos_))) {
      return fail(DiagnosticKind::malformed_line, "unexpected trailing text");
    }
    return std::move(entry_);
  }

 private:
  using Failure = std::optional<ParseDiagnostic>;

  ParseDiagnostic fail(DiagnosticKind k, std::string detail) const {
    return diag(ctx_, k, line_, std::move(detail));
  }

  Failure match_literal(const std::string& lit) {
    for (char c : lit) {
      if (is_space(c)) {
        if (pos_ >= line_.size() || !is_space(line_[pos_])) {
          // Whitespace run already consumed by a previous space in the literal.
          if (pos_ > 0 && is_space(line_[pos_ - 1])) continue;
          return fail(DiagnosticKind::malformed_line, "expected separator");
        }
        while (pos_ < line_.size() && is_space(line_[pos_])) ++pos_;
      } else {
        if (pos_ >= line_.size() || line_[pos_] != c) {
          return fail(DiagnosticKind::malformed_line,
                      std::string("expected '") + c + "' at column " + std::to_string(pos_ + 1));
        }
        ++pos_;
      }
    }
    return std::nullopt;
  }

  // Reads a double-quoted value; backslash escapes the next character.
  std::optional<std::string> read_quoted() {
    if (pos_ >= line_.size() || line_[pos_] != '"') return std::nullopt;
    std::string out;
    for (std::size_t i = pos_ + 1; i < line_.size(); ++i) {
      char c = line_[i];
      if (c == '\\' && i + 1 < line_.size()) {
        char n = line_[i + 1];
        if (n == '"' || n == '\\') {
          out.push_back(n);
        } else {
          out.push_back(c);
          out.push_back(n);
        }
        ++i;
      } else if (c == '"') {
        pos_ = i + 1;
        return out;
      } else {
        out.push_back(c);
      }
    }
    return std::nullopt;
  }

  // Bare single token: ends at whitespace or at the next literal's first
  // non-space character.
  std::string_view read_token(std::size_t index) {
    char stop = 0;
    const auto& layout = spec_.field_layout;
    if (index + 1 < layout.size() && layout[index + 1].kind == FieldKind::literal &&
        !layout[index + 1].literal.empty() && !is_space(layout[index + 1].literal.front())) {
      stop = layout[index + 1].literal.front();
    }
    std::size_t start = pos_;
    while (pos_ < line_.size() && !is_space(line_[pos_]) && line_[pos_] != stop) ++pos_;
    return line_.substr(start, pos_ - start);
  }

  // Remaining layout after `index` consists only of whitespace literals and
  // single-token fields; returns how many tokens those fields need.
  std::optional<std::size_t> trailing_token_demand(std::size_t index) const {
    std::size_t n = 0;
    const auto& layout = spec_.field_layout;
    for (std::size_t j = index + 1; j < layout.size(); ++j) {
      const auto& f = layout[j];
      if (f.kind == FieldKind::literal) {
        if (!all_space(f.literal)) return std::nullopt;
      } else if (!f.quoted && single_token_kind(f.kind)) {
        ++n;
      } else {
        return std::nullopt;
      }
    }
    return n;
  }

  std::optional<std::string_view> read_bare_request() {
    std::size_t i = pos_;
    while (i < line_.size()) {
      while (i < line_.size() && is_space(line_[i])) ++i;
      std::size_t start = i;
      while (i < line_.size() && !is_space(line_[i])) ++i;
      if (start == i) break;
      if (is_protocol_token(line_.substr(start, i - start))) {
        auto v = line_.substr(pos_, i - pos_);
        pos_ = i;
        return v;
      }
    }
    return std::nullopt;
  }

  // Bare user agent: everything up to the tokens the trailing fields need.
  std::optional<std::string_view> read_bare_free_text(std::size_t index) {
    auto demand = trailing_token_demand(index);
    if (!demand) return std::nullopt;
    std::vector<std::pair<std::size_t, std::size_t>> tokens;
    std::size_t i = pos_;
    while (i < line_.size()) {
      while (i < line_.size() && is_space(line_[i])) ++i;
      std::size_t start = i;
      while (i < line_.size() && !is_space(line_[i])) ++i;
      if (start < i) tokens.emplace_back(start, i);
    }
    if (tokens.size() < *demand + 1) return std::nullopt;
    const auto& last = tokens[tokens.size() - *demand - 1];
    auto v = line_.substr(pos_, last.second - pos_);
    pos_ = last.second;
    return trim(v);
  }

  Failure store_text(FieldKind kind, std::string_view raw) {
    switch (kind) {
      case FieldKind::client_ip: entry_.client_ip = normalize_optional(raw); break;
      case FieldKind::referer: entry_.referer = normalize_optional(raw); break;
      case FieldKind::user_agent: entry_.user_agent = normalize_optional(raw); break;
      case FieldKind::ident:
      case FieldKind::authuser: break;
      case FieldKind::status: {
        auto v = parse_int(raw);
        if (!v || *v < 100 || *v > 599) {
          return fail(DiagnosticKind::bad_status, "status is not a code in 100-599: " + std::string(raw));
        }
        entry_.status = static_cast<int>(*v);
        break;
      }
      case FieldKind::size: {
        if (raw == "-") break;
        auto v = parse_int(raw);
        if (!v || *v < 0) return fail(DiagnosticKind::malformed_line, "invalid size: " + std::string(raw));
        entry_.object_size = *v;
        break;
      }
      case FieldKind::duration: {
        if (raw == "-") break;
        auto v = parse_int(raw);
        if (!v || *v < 0) {
          return fail(DiagnosticKind::malformed_line, "invalid duration: " + std::string(raw));
        }
        entry_.duration = duration_unit_ == DurationUnit::microseconds ? *v / 1000 : *v;
        break;
      }
      case FieldKind::request: {
        auto r = split_request(raw);
        if (auto* d = std::get_if<ParseDiagnostic>(&r)) {
          return fail(d->kind, d->detail);
        }
        entry_.request = std::move(std::get<RequestLine>(r));
        break;
      }
      default: break;
    }
    return std::nullopt;
  }

  Failure step(std::size_t index) {
    const auto& f = spec_.field_layout[index];
    if (f.kind == FieldKind::literal) return match_literal(f.literal);
    duration_unit_ = f.unit;
    if (f.kind == FieldKind::timestamp) {
      if (pos_ >= line_.size() || line_[pos_] != '[') {
        return fail(DiagnosticKind::bad_timestamp, "missing '[' before timestamp");
      }
      std::size_t close = line_.find(']', pos_);
      if (close == std::string_view::npos) {
        return fail(DiagnosticKind::bad_timestamp, "unterminated timestamp");
      }
      auto t = parse_clf_time(line_.substr(pos_ + 1, close - pos_ - 1));
      if (!t) {
        return fail(DiagnosticKind::bad_timestamp,
                    "timestamp does not match dd/Mon/yyyy:HH:mm:ss[.SSS] +zzzz");
      }
      entry_.timestamp.epoch_millis = t->epoch_millis;
      if (t->has_millis && (t->epoch_millis % 1000 != 0 || f.granularity == Granularity::millisecond)) {
        entry_.timestamp.granularity = Granularity::millisecond;
      }
      pos_ = close + 1;
      return std::nullopt;
    }
    if (f.quoted) {
      auto v = read_quoted();
      if (!v) {
        return fail(DiagnosticKind::malformed_line,
                    "expected quoted " + std::string(field_name(f.kind)));
      }
      return store_text(f.kind, *v);
    }
    switch (f.kind) {
      case FieldKind::request: {
        auto v = read_bare_request();
        if (!v) return fail(DiagnosticKind::ambiguous_split, "no protocol token bounds the request");
        if (count_tokens(*v) > 3) entry_.split_recovered = true;
        return store_text(f.kind, *v);
      }
      case FieldKind::user_agent: {
        auto v = read_bare_free_text(index);
        if (!v) return fail(DiagnosticKind::ambiguous_split, "cannot bound the user agent");
        if (count_tokens(*v) > 1) entry_.split_recovered = true;
        return store_text(f.kind, *v);
      }
      default: {
        auto v = read_token(index);
        if (v.empty()) {
          return fail(f.kind == FieldKind::status ? DiagnosticKind::bad_status
                                                  : DiagnosticKind::malformed_line,
                      "missing " + std::string(field_name(f.kind)));
        }
        return store_text(f.kind, v);
      }
    }
  }

  std::string_view line_;
  const LogFormatSpec& spec_;
  const LineContext& ctx_;
  std::size_t pos_ = 0;
  DurationUnit duration_unit_ = DurationUnit::milliseconds;
  LogEntry entry_;
};

}  // namespace

ParseOutcome parse_line(std::string_view line, const LogFormatSpec& spec, const LineContext& ctx) {
  return LineParser(line, spec, ctx).run();
}

ParseResult parse_stream(const std::vector<std::string>& lines, const LogFormatSpec& spec,
                         ErrorPolicy policy, const std::string& source_id) {
  ParseResult out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto r = parse_line(lines[i], spec, {source_id, static_cast<std::int64_t>(i + 1)});
    if (auto* e = std::get_if<LogEntry>(&r)) {
      out.entries.push_back(std::move(*e));
      continue;
    }
    out.diagnostics.push_back(std::move(std::get<ParseDiagnostic>(r)));
    if (policy == ErrorPolicy::halt) {
      out.halted = true;
      break;
    }
  }
  return out;
}

bool parse_stream(std::istream& in, const LogFormatSpec& spec, ErrorPolicy policy,
                  const std::string& source_id, const std::function<void(LogEntry&&)>& on_entry,
                  const std::function<void(ParseDiagnostic&&)>& on_diagnostic) {
  std::string line;
  LineContext ctx{source_id, 0};
  while (std::getline(in, line)) {
    ++ctx.line_number;
    auto r = parse_line(line, spec, ctx);
    if (auto* e = std::get_if<LogEntry>(&r)) {
      on_entry(std::move(*e));
      continue;
    }
    on_diagnostic(std::move(std::get<ParseDiagnostic>(r)));
    if (policy == ErrorPolicy::halt) return false;
  }
  if (in.bad()) throw IoError("read failed: " + source_id);
  return true;
}

}  // namespace wapilog
