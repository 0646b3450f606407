#pragma once

// Declarative description of a log source, built from an Apache-style
// custom log format string.
//
// Supported directives:
//   %h            client IP (opaque)
//   %l %u         ident / authuser (read and discarded)
//   %t            [dd/Mon/yyyy:HH:mm:ss +zzzz], second granularity
//   %{ms}t        [dd/Mon/yyyy:HH:mm:ss.SSS +zzzz], millisecond granularity
//   %r            request line
//   %>s %s        status
//   %b %B         response size ("-" means absent)
//   %{Referer}i   referer
//   %{User-Agent}i user agent
//   %{ms}T        duration in milliseconds
//   %D            duration in microseconds (stored as milliseconds)
//   %%            literal percent sign
// A directive wrapped in double quotes ("%r") is a quoted field. Any other
// text is a literal separator; runs of whitespace match one or more blanks.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wapilog/log_model.hpp"

namespace wapilog {

enum class FieldKind {
  client_ip,
  ident,
  authuser,
  timestamp,
  request,
  status,
  size,
  referer,
  user_agent,
  duration,
  literal,
};

std::string_view field_name(FieldKind k);

enum class DurationUnit { milliseconds, microseconds };

struct Directive {
  FieldKind kind = FieldKind::literal;
  bool quoted = false;
  std::string literal;  // only for FieldKind::literal
  Granularity granularity = Granularity::second;     // only for timestamp
  DurationUnit unit = DurationUnit::milliseconds;    // only for duration

  friend bool operator==(const Directive&, const Directive&) = default;
};

struct FormatString {
  std::vector<Directive> directives;

  /// Tokenizes an Apache-style format string. Throws ConfigError on an
  /// unknown directive or a dangling '%'.
  static FormatString parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const FormatString&, const FormatString&) = default;
};

struct FieldDescriptor {
  std::string name;
  FieldKind kind = FieldKind::literal;
  bool quoted = false;
  std::string literal;
  Granularity granularity = Granularity::second;
  DurationUnit unit = DurationUnit::milliseconds;
};

struct LogFormatSpec {
  std::vector<FieldDescriptor> field_layout;
  bool has_client_ip = false;
  Granularity timestamp_granularity = Granularity::second;
  bool has_duration = false;
  bool has_referer = false;
  bool has_user_agent = false;
  bool has_status = false;
  bool has_size = false;
  FormatString format;

  bool has_quoted(FieldKind k) const;
  bool has_field(FieldKind k) const;
};

/// Builds the presence flags and layout. Throws ConfigError for an empty
/// directive list or a repeated non-literal directive.
LogFormatSpec parse_format_spec(const FormatString& format);

inline LogFormatSpec parse_format_spec(std::string_view text) {
  return parse_format_spec(FormatString::parse(text));
}

namespace formats {
// Apache combined log format, fully quoted free-text fields.
inline constexpr std::string_view combined =
    R"(%h %l %u %t "%r" %>s %b "%{Referer}i" "%{User-Agent}i")";
// Same fields, nothing quoted.
inline constexpr std::string_view combined_bare =
    R"(%h %l %u %t %r %>s %b %{Referer}i %{User-Agent}i)";
// Proxied deployment: no client address, second timestamps, duration.
inline constexpr std::string_view msf =
    R"(%l %u %t "%r" %>s %b %{ms}T "%{Referer}i" "%{User-Agent}i")";
// Direct deployment: client address, millisecond timestamps, no referer.
inline constexpr std::string_view widp =
    R"(%h %l %u %{ms}t "%r" %>s %b %{ms}T "%{User-Agent}i")";
// Everything recommended for session reconstruction.
inline constexpr std::string_view golden =
    R"(%h %l %u %{ms}t "%r" %>s %b %{ms}T "%{Referer}i" "%{User-Agent}i")";
}  // namespace formats

}  // namespace wapilog
