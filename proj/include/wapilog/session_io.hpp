#pragma once

// JSONL records for diagnostics, sessions and discarded entries.
//
// sessions.jsonl holds one object per session, in the order sessions were
// closed, followed by a single {"discarded": [...]} record.

#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <string>

#include "wapilog/jsonl.hpp"
#include "wapilog/parser.hpp"
#include "wapilog/sessionizer.hpp"

namespace wapilog {

json diagnostic_to_json(const ParseDiagnostic& d);
ParseDiagnostic diagnostic_from_json(const json& j);

json session_to_json(const Session& s);
Session session_from_json(const json& j);

json discarded_to_json(const DiscardedEntry& d);
DiscardedEntry discarded_from_json(const json& j);

/// Writes sessions as they close; discarded entries are spooled to a
/// temporary file so memory stays flat, then appended as the last record.
class SessionsWriter {
 public:
  explicit SessionsWriter(std::ostream& out);
  ~SessionsWriter();
  SessionsWriter(const SessionsWriter&) = delete;
  SessionsWriter& operator=(const SessionsWriter&) = delete;

  void session(const Session& s);
  void discarded(const DiscardedEntry& d);
  /// Emits the trailing discarded record. Throws IoError on spool failure.
  void finish();

 private:
  std::ostream& out_;
  std::FILE* spool_ = nullptr;
  std::size_t discarded_ = 0;
};

void read_sessions(std::istream& in, const std::string& name,
                   const std::function<void(Session&&)>& on_session,
                   const std::function<void(DiscardedEntry&&)>& on_discarded);

SessionizationResult read_sessions(std::istream& in, const std::string& name);

}  // namespace wapilog
