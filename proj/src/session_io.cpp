#include "wapilog/session_io.hpp"

#include "wapilog/errors.hpp"

namespace wapilog {

json diagnostic_to_json(const ParseDiagnostic& d) {
  json j;
  j["source_id"] = d.source_id;
  j["line_number"] = d.line_number;
  j["kind"] = to_string(d.kind);
  j["raw_line"] = d.raw_line;
  j["detail"] = d.detail;
  return j;
}

ParseDiagnostic diagnostic_from_json(const json& j) {
  ParseDiagnostic d;
  d.source_id = j.at("source_id").get<std::string>();
  d.line_number = j.at("line_number").get<std::int64_t>();
  auto kind = diagnostic_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw IoError("unknown diagnostic kind: " + j.at("kind").get<std::string>());
  d.kind = *kind;
  d.raw_line = j.value("raw_line", "");
  d.detail = j.value("detail", "");
  return d;
}

json session_to_json(const Session& s) {
  json j;
  j["session_id"] = s.session_id;
  if (s.app) j["app"] = *s.app;
  if (s.user_key) j["user_key"] = *s.user_key;
  j["opened_at"] = s.opened_at().epoch_millis;
  j["closed_at"] = s.closed_at().epoch_millis;
  j["size"] = s.entries.size();
  json entries = json::array();
  for (const auto& se : s.entries) {
    json e;
    if (se.app) e["app"] = *se.app;
    if (se.ambiguous) e["ambiguous"] = true;
    e["entry"] = entry_to_json(se.entry);
    entries.push_back(std::move(e));
  }
  j["entries"] = std::move(entries);
  return j;
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  if (j.contains("app")) s.app = j["app"].get<std::string>();
  if (j.contains("user_key")) s.user_key = j["user_key"].get<std::string>();
  for (const auto& e : j.at("entries")) {
    SessionEntry se;
    if (e.contains("app")) se.app = e["app"].get<std::string>();
    se.ambiguous = e.value("ambiguous", false);
    se.entry = entry_from_json(e.at("entry"));
    s.entries.push_back(std::move(se));
  }
  if (s.entries.empty()) throw IoError("session " + s.session_id + " has no entries");
  return s;
}

json discarded_to_json(const DiscardedEntry& d) {
  json j;
  j["reason"] = to_string(d.reason);
  j["entry"] = entry_to_json(d.entry);
  return j;
}

DiscardedEntry discarded_from_json(const json& j) {
  DiscardedEntry d;
  auto reason = discard_reason_from_string(j.at("reason").get<std::string>());
  if (!reason) throw IoError("unknown discard reason: " + j.at("reason").get<std::string>());
  d.reason = *reason;
  d.entry = entry_from_json(j.at("entry"));
  return d;
}

// ---------------------------------------------------------------------------

SessionsWriter::SessionsWriter(std::ostream& out) : out_(out) {}

SessionsWriter::~SessionsWriter() {
  if (spool_) std::fclose(spool_);
}

void SessionsWriter::session(const Session& s) { write_jsonl(out_, session_to_json(s)); }

void SessionsWriter::discarded(const DiscardedEntry& d) {
  if (!spool_) {
    spool_ = std::tmpfile();
    if (!spool_) throw IoError("cannot create a temporary file for discarded entries");
  }
  std::string text = (discarded_ ? "," : "") + discarded_to_json(d).dump();
  if (std::fwrite(text.data(), 1, text.size(), spool_) != text.size()) {
    throw IoError("cannot write discarded entries to the temporary file");
  }
  ++discarded_;
}

void SessionsWriter::finish() {
  out_ << "{\"discarded\":[";
  if (spool_) {
    std::rewind(spool_);
    char buf[1 << 16];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, spool_)) > 0) out_.write(buf, static_cast<std::streamsize>(n));
    if (std::ferror(spool_)) throw IoError("cannot read back discarded entries");
    std::fclose(spool_);
    spool_ = nullptr;
  }
  out_ << "]}\n";
  if (!out_) throw IoError("write failed");
}

void read_sessions(std::istream& in, const std::string& name,
                   const std::function<void(Session&&)>& on_session,
                   const std::function<void(DiscardedEntry&&)>& on_discarded) {
  read_jsonl(in, name, [&](const json& j) {
    if (j.contains("discarded")) {
      for (const auto& d : j["discarded"]) on_discarded(discarded_from_json(d));
    } else {
      on_session(session_from_json(j));
    }
  });
}

SessionizationResult read_sessions(std::istream& in, const std::string& name) {
  SessionizationResult r;
  read_sessions(
      in, name, [&](Session&& s) { r.sessions.push_back(std::move(s)); },
      [&](DiscardedEntry&& d) { r.discarded.push_back(std::move(d)); });
  return r;
}

}  // namespace wapilog
