#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wapilog/format.hpp"
#include "wapilog/log_model.hpp"

namespace wapilog {

enum class DiagnosticKind { malformed_line, ambiguous_split, bad_timestamp, bad_status };

std::string_view to_string(DiagnosticKind k);
std::optional<DiagnosticKind> diagnostic_kind_from_string(std::string_view s);

struct ParseDiagnostic {
  std::string source_id;
  std::int64_t line_number = 1;  // 1-based
  DiagnosticKind kind = DiagnosticKind::malformed_line;
  std::string raw_line;
  std::string detail;

  friend bool operator==(const ParseDiagnostic&, const ParseDiagnostic&) = default;
};

/// Where a line came from. file_order of the resulting entry is
/// line_number - 1.
struct LineContext {
  std::string source_id;
  std::int64_t line_number = 1;
};

using ParseOutcome = std::variant<LogEntry, ParseDiagnostic>;
using RequestOutcome = std::variant<RequestLine, ParseDiagnostic>;

// Timestamps in the bracket-less layout "dd/Mon/yyyy:HH:mm:ss[.SSS] +zzzz".
struct ParsedTime {
  std::int64_t epoch_millis = 0;
  bool has_millis = false;
};
std::optional<ParsedTime> parse_clf_time(std::string_view text);
/// Always renders in UTC (+0000).
std::string format_clf_time(std::int64_t epoch_millis, bool with_millis);

std::string percent_encode(std::string_view s);
/// nullopt on a stray '%' or truncated escape.
std::optional<std::string> percent_decode(std::string_view s);

/// Splits "METHOD URI PROTOCOL" on the first and last space, then the URI
/// at the first '?', decoding query keys and values. A two-token
/// "METHOD /path" is accepted with an empty protocol.
RequestOutcome split_request(std::string_view request_field);

ParseOutcome parse_line(std::string_view line, const LogFormatSpec& spec,
                        const LineContext& ctx = {});

enum class ErrorPolicy { halt, skip_and_record };

struct ParseResult {
  std::vector<LogEntry> entries;
  std::vector<ParseDiagnostic> diagnostics;
  bool halted = false;
};

ParseResult parse_stream(const std::vector<std::string>& lines, const LogFormatSpec& spec,
                         ErrorPolicy policy, const std::string& source_id = "");

/// Streaming variant: reads `in` line by line and hands each outcome to the
/// callbacks in line order. Returns false when halted on a diagnostic.
/// Throws IoError if the stream fails for a reason other than EOF.
bool parse_stream(std::istream& in, const LogFormatSpec& spec, ErrorPolicy policy,
                  const std::string& source_id,
                  const std::function<void(LogEntry&&)>& on_entry,
                  const std::function<void(ParseDiagnostic&&)>& on_diagnostic);

}  // namespace wapilog
