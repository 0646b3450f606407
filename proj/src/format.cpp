#include "wapilog/format.hpp"

#include <set>

#include "wapilog/errors.hpp"

namespace wapilog {

std::string_view field_name(FieldKind k) {
  switch (k) {
    case FieldKind::client_ip: return "client_ip";
    case FieldKind::ident: return "ident";
    case FieldKind::authuser: return "authuser";
    case FieldKind::timestamp: return "timestamp";
    case FieldKind::request: return "request";
    case FieldKind::status: return "status";
    case FieldKind::size: return "size";
    case FieldKind::referer: return "referer";
    case FieldKind::user_agent: return "user_agent";
    case FieldKind::duration: return "duration";
    case FieldKind::literal: return "literal";
  }
  return "literal";
}

namespace {

Directive directive_for(std::string_view arg, char letter, std::string_view whole) {
  Directive d;
  if (arg.empty()) {
    switch (letter) {
      case 'h': d.kind = FieldKind::client_ip; return d;
      case 'l': d.kind = FieldKind::ident; return d;
      case 'u': d.kind = FieldKind::authuser; return d;
      case 't': d.kind = FieldKind::timestamp; d.granularity = Granularity::second; return d;
      case 'r': d.kind = FieldKind::request; return d;
      case 's': d.kind = FieldKind::status; return d;
      case 'b':
      case 'B': d.kind = FieldKind::size; return d;
      case 'D': d.kind = FieldKind::duration; d.unit = DurationUnit::microseconds; return d;
      default: break;
    }
  } else if (arg == "ms" && letter == 't') {
    d.kind = FieldKind::timestamp;
    d.granularity = Granularity::millisecond;
    return d;
  } else if (arg == "ms" && letter == 'T') {
    d.kind = FieldKind::duration;
    d.unit = DurationUnit::milliseconds;
    return d;
  } else if (letter == 'i') {
    // Header names are case-insensitive.
    std::string lower;
    for (char c : arg) lower.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
    if (lower == "referer" || lower == "referrer") {
      d.kind = FieldKind::referer;
      return d;
    }
    if (lower == "user-agent") {
      d.kind = FieldKind::user_agent;
      return d;
    }
  }
  throw ConfigError("unsupported format directive: " + std::string(whole));
}

void append_literal(std::vector<Directive>& out, std::string_view text) {
  if (text.empty()) return;
  if (!out.empty() && out.back().kind == FieldKind::literal) {
    out.back().literal += text;
    return;
  }
  Directive d;
  d.kind = FieldKind::literal;
  d.literal = std::string(text);
  out.push_back(std::move(d));
}

std::string directive_text(const Directive& d) {
  switch (d.kind) {
    case FieldKind::client_ip: return "%h";
    case FieldKind::ident: return "%l";
    case FieldKind::authuser: return "%u";
    case FieldKind::timestamp: return d.granularity == Granularity::second ? "%t" : "%{ms}t";
    case FieldKind::request: return "%r";
    case FieldKind::status: return "%>s";
    case FieldKind::size: return "%b";
    case FieldKind::referer: return "%{Referer}i";
    case FieldKind::user_agent: return "%{User-Agent}i";
    case FieldKind::duration: return d.unit == DurationUnit::milliseconds ? "%{ms}T" : "%D";
    case FieldKind::literal: break;
  }
  std::string out;
  for (char c : d.literal) {
    if (c == '%') out += "%%";
    else out.push_back(c);
  }
  return out;
}

}  // namespace

FormatString FormatString::parse(std::string_view text) {
  std::vector<Directive> raw;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '%') {
      std::size_t j = text.find('%', i);
      if (j == std::string_view::npos) j = text.size();
      append_literal(raw, text.substr(i, j - i));
      i = j;
      continue;
    }
    std::size_t start = i++;
    if (i >= text.size()) throw ConfigError("dangling '%' at end of format string");
    if (text[i] == '%') {
      append_literal(raw, "%");
      ++i;
      continue;
    }
    std::string_view arg;
    if (text[i] == '>') ++i;  // %>s: final status
    if (i < text.size() && text[i] == '{') {
      std::size_t close = text.find('}', i);
      if (close == std::string_view::npos) throw ConfigError("unterminated %{...} directive");
      arg = text.substr(i + 1, close - i - 1);
      i = close + 1;
    }
    if (i >= text.size()) throw ConfigError("incomplete directive at end of format string");
    char letter = text[i++];
    raw.push_back(directive_for(arg, letter, text.substr(start, i - start)));
  }

  // A directive immediately surrounded by double quotes is a quoted field.
  for (std::size_t k = 1; k + 1 < raw.size(); ++k) {
    auto& prev = raw[k - 1];
    auto& next = raw[k + 1];
    if (raw[k].kind == FieldKind::literal || raw[k].kind == FieldKind::timestamp) continue;
    if (prev.kind == FieldKind::literal && next.kind == FieldKind::literal &&
        !prev.literal.empty() && prev.literal.back() == '"' && !next.literal.empty() &&
        next.literal.front() == '"') {
      prev.literal.pop_back();
      next.literal.erase(0, 1);
      raw[k].quoted = true;
    }
  }
  FormatString out;
  for (auto& d : raw) {
    if (d.kind == FieldKind::literal && d.literal.empty()) continue;
    if (d.kind == FieldKind::literal && !out.directives.empty() &&
        out.directives.back().kind == FieldKind::literal) {
      out.directives.back().literal += d.literal;
      continue;
    }
    out.directives.push_back(std::move(d));
  }
  return out;
}

std::string FormatString::to_string() const {
  std::string out;
  for (const auto& d : directives) {
    if (d.quoted) out += '"' + directive_text(d) + '"';
    else out += directive_text(d);
  }
  return out;
}

bool LogFormatSpec::has_quoted(FieldKind k) const {
  for (const auto& f : field_layout) {
    if (f.kind == k) return f.quoted;
  }
  return false;
}

bool LogFormatSpec::has_field(FieldKind k) const {
  for (const auto& f : field_layout) {
    if (f.kind == k) return true;
  }
  return false;
}

LogFormatSpec parse_format_spec(const FormatString& format) {
  if (format.directives.empty()) throw ConfigError("format has no directives");
  LogFormatSpec spec;
  spec.format = format;
  std::set<FieldKind> seen;
  bool has_timestamp = false;
  for (const auto& d : format.directives) {
    FieldDescriptor f;
    f.kind = d.kind;
    f.quoted = d.quoted;
    f.literal = d.literal;
    f.granularity = d.granularity;
    f.unit = d.unit;
    if (d.kind != FieldKind::literal) {
      if (!seen.insert(d.kind).second) {
        throw ConfigError("duplicate directive for field " + std::string(field_name(d.kind)));
      }
      f.name = std::string(field_name(d.kind));
    }
    switch (d.kind) {
      case FieldKind::client_ip: spec.has_client_ip = true; break;
      case FieldKind::timestamp:
        has_timestamp = true;
        spec.timestamp_granularity = d.granularity;
        break;
      case FieldKind::status: spec.has_status = true; break;
      case FieldKind::size: spec.has_size = true; break;
      case FieldKind::referer: spec.has_referer = true; break;
      case FieldKind::user_agent: spec.has_user_agent = true; break;
      case FieldKind::duration: spec.has_duration = true; break;
      default: break;
    }
    spec.field_layout.push_back(std::move(f));
  }
  if (!has_timestamp) throw ConfigError("format has no timestamp directive");
  if (!seen.count(FieldKind::request)) throw ConfigError("format has no request directive");
  if (!seen.count(FieldKind::status)) throw ConfigError("format has no status directive");
  return spec;
}

}  // namespace wapilog
