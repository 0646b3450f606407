#pragma once

// JSON Lines interchange between subcommands. One object per line, absent
// optionals omitted.

#include <functional>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "wapilog/log_model.hpp"

namespace wapilog {

using json = nlohmann::ordered_json;

json entry_to_json(const LogEntry& e);
LogEntry entry_from_json(const json& j);

/// Writes `j` compactly followed by a newline.
void write_jsonl(std::ostream& out, const json& j);

/// Calls `fn` for each non-blank line parsed as JSON. Throws IoError on a
/// read failure or malformed JSON (with the line number).
void read_jsonl(std::istream& in, const std::string& name,
                const std::function<void(const json&)>& fn);

}  // namespace wapilog
