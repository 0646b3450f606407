#include "wapilog/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "wapilog/config.hpp"
#include "wapilog/errors.hpp"
#include "wapilog/jsonl.hpp"
#include "wapilog/parser.hpp"
#include "wapilog/preprocess.hpp"
#include "wapilog/quality.hpp"
#include "wapilog/session_io.hpp"
#include "wapilog/stats.hpp"
#include "wapilog/synth.hpp"

namespace fs = std::filesystem;

namespace wapilog {

namespace {

// Input that violates a stage's precondition (not a config or I/O problem).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Env {
  std::ostream& out;
  std::ostream& err;
};

// An output path that is deleted again unless the command succeeds.
class Output {
 public:
  Output(const std::string& path, Env& env) : path_(path) {
    if (path == "-") {
      stream_ = &env.out;
      return;
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file_) throw IoError("cannot write " + path);
    stream_ = file_.get();
  }
  Output(const Output&) = delete;
  Output& operator=(const Output&) = delete;

  ~Output() {
    if (file_ && !committed_) {
      file_.reset();
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

  std::ostream& stream() { return *stream_; }

  void commit() {
    stream_->flush();
    if (!*stream_) throw IoError("write failed: " + path_);
    if (file_) file_->close();
    if (file_ && file_->fail()) throw IoError("write failed: " + path_);
    committed_ = true;
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
  bool committed_ = false;
};

// Reads a named input; "-" is standard input.
class Input {
 public:
  explicit Input(const std::string& path) : path_(path) {
    if (path == "-") {
      stream_ = &std::cin;
      return;
    }
    if (!fs::is_regular_file(path)) throw IoError("cannot read " + path);
    file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file_) throw IoError("cannot read " + path);
    stream_ = file_.get();
  }
  std::istream& stream() { return *stream_; }
  const std::string& name() const { return path_; }

 private:
  std::string path_;
  std::unique_ptr<std::ifstream> file_;
  std::istream* stream_ = nullptr;
};

std::string source_name(const std::string& path) { return path == "-" ? "stdin" : path; }

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(sep) : "") + v[i];
  return out;
}

// ---------------------------------------------------------------------------
// parse

struct ParseOptions {
  std::string format = std::string(formats::combined);
  ErrorPolicy policy = ErrorPolicy::skip_and_record;
  std::string out = "-";
  std::string diag;
  std::vector<std::string> inputs;
};

int cmd_parse(const ParseOptions& o, Env& env) {
  const auto spec = parse_format_spec(o.format);
  std::vector<Input> inputs;
  inputs.reserve(o.inputs.size());
  for (const auto& p : o.inputs) inputs.emplace_back(p);

  Output out(o.out, env);
  std::optional<Output> diag;
  if (!o.diag.empty()) diag.emplace(o.diag, env);
  std::int64_t entries = 0, diagnostics = 0;
  bool halted = false;
  for (auto& in : inputs) {
    const bool ok = parse_stream(
        in.stream(), spec, o.policy, source_name(in.name()),
        [&](LogEntry&& e) {
          write_jsonl(out.stream(), entry_to_json(e));
          ++entries;
        },
        [&](ParseDiagnostic&& d) {
          if (diag) write_jsonl(diag->stream(), diagnostic_to_json(d));
          ++diagnostics;
          if (o.policy == ErrorPolicy::halt) {
            env.err << "parse halted at " << d.source_id << ":" << d.line_number << ": "
                    << to_string(d.kind) << ": " << d.detail << "\n";
          }
        });
    if (!ok) {
      halted = true;
      break;
    }
  }
  out.commit();
  if (diag) diag->commit();
  env.err << "parsed " << entries << " entries, " << diagnostics << " diagnostics\n";
  return halted ? exit_code::failure : exit_code::ok;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
  CleaningRules cleaning;
  std::vector<GeneralizationRule> generalization;
  bool id_fallback = true;
  bool repair = true;
  std::size_t window = 4096;
  std::string out = "-";
  std::string dropped;
  std::vector<std::string> inputs;
};

// One lane per (file, source_id): each lane re-reads its file and keeps
// only its source, so several sources concatenated in one file still fuse
// in bounded memory.
class JsonlLane {
 public:
  JsonlLane(std::string path, std::shared_ptr<std::string> buffered, std::string source)
      : path_(std::move(path)), source_(std::move(source)) {
    if (buffered) {
      stream_ = std::make_unique<std::istringstream>(*buffered);
    } else {
      stream_ = std::make_unique<std::ifstream>(path_, std::ios::binary);
      if (!*stream_) throw IoError("cannot read " + path_);
    }
  }

  std::optional<LogEntry> next() {
    std::string line;
    while (std::getline(*stream_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      LogEntry e;
      try {
        e = entry_from_json(json::parse(line));
      } catch (const std::exception& ex) {
        throw IoError(path_ + ":" + std::to_string(line_no_) + ": " + ex.what());
      }
      if (e.source_id == source_) return e;
    }
    if (stream_->bad()) throw IoError("read failed: " + path_);
    return std::nullopt;
  }

 private:
  std::string path_;
  std::string source_;
  std::unique_ptr<std::istream> stream_;
  std::int64_t line_no_ = 0;
};

int cmd_preprocess(const PreprocessOptions& o, Env& env) {
  o.cleaning.validate();
  std::vector<std::shared_ptr<JsonlLane>> lanes;
  for (const auto& path : o.inputs) {
    std::shared_ptr<std::string> buffered;
    Input in(path);
    if (path == "-") {
      std::ostringstream ss;
      ss << in.stream().rdbuf();
      buffered = std::make_shared<std::string>(ss.str());
    }
    std::vector<std::string> sources;
    std::set<std::string> seen;
    std::istringstream from_buffer(buffered ? *buffered : std::string());
    read_jsonl(buffered ? static_cast<std::istream&>(from_buffer) : in.stream(), path, [&](const json& j) {
      auto s = j.at("source_id").get<std::string>();
      if (seen.insert(s).second) sources.push_back(s);
    });
    for (const auto& s : sources) lanes.push_back(std::make_shared<JsonlLane>(path, buffered, s));
  }
  std::vector<StreamFuser::Source> pulls;
  for (auto& lane : lanes) pulls.push_back([lane] { return lane->next(); });
  StreamFuser fuser(std::move(pulls), o.window);

  Output out(o.out, env);
  std::optional<Output> dropped;
  if (!o.dropped.empty()) dropped.emplace(o.dropped, env);
  TimestampRepairer repairer;
  std::int64_t kept = 0, dropped_count = 0;
  while (auto e = fuser.next()) {
    if (should_drop(*e, o.cleaning)) {
      if (dropped) write_jsonl(dropped->stream(), entry_to_json(*e));
      ++dropped_count;
      continue;
    }
    if (o.repair) repairer.apply(*e);
    e->generalized_path = generalize_path(e->request.path, o.generalization, o.id_fallback);
    write_jsonl(out.stream(), entry_to_json(*e));
    ++kept;
  }
  out.commit();
  if (dropped) dropped->commit();
  env.err << "kept " << kept << ", dropped " << dropped_count << ", repaired "
          << repairer.repaired() << " timestamps";
  if (fuser.late_entries()) env.err << ", " << fuser.late_entries() << " entries beyond the fusion window";
  env.err << "\n";
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// sessionize

struct SessionizeOptions {
  SessionizerConfig config;
  std::string log_format;
  std::string out = "-";
  std::vector<std::string> inputs;
};

int cmd_sessionize(const SessionizeOptions& o, Env& env) {
  std::optional<LogFormatSpec> spec;
  if (!o.log_format.empty()) spec = parse_format_spec(o.log_format);
  std::vector<Input> inputs;
  for (const auto& p : o.inputs) inputs.emplace_back(p);

  Output out(o.out, env);
  SessionsWriter writer(out.stream());
  std::int64_t sessions = 0, discarded = 0;
  Sessionizer s(
      o.config,
      [&](Session&& x) {
        writer.session(x);
        ++sessions;
      },
      [&](DiscardedEntry&& d) {
        writer.discarded(d);
        ++discarded;
      },
      spec ? &*spec : nullptr);
  std::optional<LogEntry> last;
  for (auto& in : inputs) {
    read_jsonl(in.stream(), in.name(), [&](const json& j) {
      LogEntry e = entry_from_json(j);
      if (last && entry_before(e, *last)) {
        throw DataError(in.name() + ": entries are not in timestamp order; run preprocess first");
      }
      last = e;
      s.push(std::move(e));
    });
  }
  s.finish();
  writer.finish();
  out.commit();
  env.err << sessions << " sessions, " << discarded << " discarded entries\n";
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// quality

struct QualityOptions {
  QualityConfig config;
  std::string log_format;
  std::string output_format = "json";
  std::string corpus_id;
  bool fail_on_critical = false;
  std::string out = "-";
  std::vector<std::string> inputs;
};

int cmd_quality(const QualityOptions& o, Env& env) {
  if (o.output_format != "json" && o.output_format != "text") {
    throw ConfigError("--format must be json or text");
  }
  std::optional<LogFormatSpec> spec;
  if (!o.log_format.empty()) spec = parse_format_spec(o.log_format);
  std::vector<Input> inputs;
  for (const auto& p : o.inputs) inputs.emplace_back(p);

  QualityScanner scanner(o.config);
  for (auto& in : inputs) {
    read_jsonl(in.stream(), in.name(), [&](const json& j) {
      if (j.contains("line_number") && j.contains("kind")) scanner.observe(diagnostic_from_json(j));
      else scanner.observe(entry_from_json(j));
    });
  }
  std::string corpus = o.corpus_id;
  if (corpus.empty()) corpus = o.inputs.empty() ? "stdin" : fs::path(source_name(o.inputs.front())).filename().string();
  const auto report = build_report(corpus, scanner, spec ? *spec : scanner.inferred_spec());

  Output out(o.out, env);
  out.stream() << (o.output_format == "json" ? report_to_json(report) : report_to_text(report));
  out.commit();
  if (o.fail_on_critical && report.has_critical()) {
    std::vector<std::string> kinds;
    for (const auto& i : report.issues) {
      if (i.severity == Severity::critical) kinds.emplace_back(to_string(i.kind));
    }
    env.err << "critical quality issue: " << join(kinds, ", ") << "\n";
    return exit_code::critical;
  }
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// stats

struct StatsOptions {
  int min_size = 3;
  bool per_app = false;
  bool generalized = true;
  std::string label = "sessions";
  std::string out = "-";
  std::vector<std::string> inputs;
};

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_stats(const StatsOptions& o, Env& env) {
  if (o.min_size < 0) throw ConfigError("--min-size must be non-negative");
  std::vector<Input> inputs;
  for (const auto& p : o.inputs) inputs.emplace_back(p);

  // Accumulated the same way session_stats does, without keeping sessions.
  std::int64_t count = 0, total_sessions = 0;
  double total_ms = 0, total_size = 0;
  std::map<std::string, std::set<std::string>> shapes;
  std::map<std::string, std::int64_t> reasons;
  std::int64_t discarded = 0;
  for (auto& in : inputs) {
    read_sessions(
        in.stream(), in.name(),
        [&](Session&& s) {
          ++total_sessions;
          if (static_cast<std::int64_t>(s.entries.size()) > o.min_size) {
            ++count;
            total_ms += static_cast<double>(s.closed_at().epoch_millis - s.opened_at().epoch_millis);
            total_size += static_cast<double>(s.entries.size());
          }
          if (o.per_app) {
            for (const auto& se : s.entries) {
              if (se.app) shapes[*se.app].insert(request_shape(se.entry, o.generalized));
            }
          }
        },
        [&](DiscardedEntry&& d) {
          ++discarded;
          ++reasons[std::string(to_string(d.reason))];
        });
  }
  json j;
  j["label"] = o.label;
  j["min_size"] = o.min_size;
  j["sessions_total"] = total_sessions;
  j["session_count"] = count;
  std::optional<double> dur, size;
  if (count > 0) {
    dur = total_ms / 1000.0 / static_cast<double>(count);
    size = total_size / static_cast<double>(count);
  }
  j["avg_duration_sec"] = optional_number(dur);
  j["avg_size"] = optional_number(size);
  j["discarded"] = discarded;
  json by_reason = json::object();
  for (const auto& [k, v] : reasons) by_reason[k] = v;
  j["discarded_by_reason"] = std::move(by_reason);
  if (o.per_app) {
    json apps = json::array();
    for (const auto& [app, set] : shapes) {
      json a;
      a["app"] = app;
      a["distinct_requests"] = set.size();
      json ex = json::array();
      for (const auto& shape : set) {
        if (ex.size() == 10) break;
        ex.push_back(shape);
      }
      a["examples"] = std::move(ex);
      apps.push_back(std::move(a));
    }
    j["per_app"] = std::move(apps);
  }
  Output out(o.out, env);
  out.stream() << j.dump(2) << "\n";
  out.commit();
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// compare

struct CompareOptions {
  std::vector<SessionizerConfig> configs;
  int min_size = 3;
  std::string log_format;
  std::string out = "-";
  std::string input;
};

std::vector<SessionizerConfig> default_compare_configs() {
  std::vector<SessionizerConfig> out;
  for (auto h : {Heuristic::time_total, Heuristic::navigation_time}) {
    for (std::int64_t minutes : {5, 15}) {
      SessionizerConfig c;
      c.heuristic = h;
      c.delta_ms = minutes * 60'000;
      out.push_back(c);
    }
  }
  return out;
}

int cmd_compare(const CompareOptions& o, Env& env) {
  std::optional<LogFormatSpec> spec;
  if (!o.log_format.empty()) spec = parse_format_spec(o.log_format);
  Input in(o.input);
  std::vector<LogEntry> entries;
  read_jsonl(in.stream(), in.name(), [&](const json& j) { entries.push_back(entry_from_json(j)); });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entry_before(entries[i], entries[i - 1])) {
      throw DataError(in.name() + ": entries are not in timestamp order; run preprocess first");
    }
  }
  const auto rows = compare_heuristics(entries, o.configs, o.min_size, spec ? &*spec : nullptr);
  Output out(o.out, env);
  out.stream() << comparison_csv(rows);
  out.commit();
  for (const auto& r : rows) {
    if (r.error) env.err << r.label << ": " << *r.error << "\n";
  }
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// synth / score

struct SynthOptions {
  WorkloadSpec spec;
  bool show_format = false;
  std::string out = "-";
  std::string truth;
};

int cmd_synth(const SynthOptions& o, Env& env) {
  o.spec.validate();
  if (o.show_format) {
    env.out << workload_format(o.spec) << "\n";
    return exit_code::ok;
  }
  const auto corpus = generate(o.spec);
  Output out(o.out, env);
  std::optional<Output> truth;
  if (!o.truth.empty()) truth.emplace(o.truth, env);
  for (const auto& line : corpus.lines) out.stream() << line << '\n';
  if (truth) write_truth_jsonl(truth->stream(), corpus.truth);
  out.commit();
  if (truth) truth->commit();
  env.err << corpus.lines.size() << " lines, format: " << workload_format(o.spec) << "\n";
  return exit_code::ok;
}

struct ScoreOptions {
  std::string truth;
  std::string sessions;
  std::string out = "-";
};

int cmd_score(const ScoreOptions& o, Env& env) {
  Input t(o.truth);
  Input s(o.sessions);
  auto truth = read_truth_jsonl(t.stream(), t.name());
  const auto result = read_sessions(s.stream(), s.name());
  // A log generated under one name and parsed under another still matches
  // when both sides hold a single source.
  std::set<std::string> truth_sources, result_sources;
  for (const auto& r : truth) truth_sources.insert(r.source_id);
  for (const auto& x : result.sessions) {
    for (const auto& se : x.entries) result_sources.insert(se.entry.source_id);
  }
  for (const auto& d : result.discarded) result_sources.insert(d.entry.source_id);
  if (truth_sources.size() == 1 && result_sources.size() == 1 && truth_sources != result_sources) {
    for (auto& r : truth) r.source_id = *result_sources.begin();
  }
  const auto sc = score(result, truth);
  Output out(o.out, env);
  out.stream() << score_to_json(sc);
  out.commit();
  return exit_code::ok;
}

// ---------------------------------------------------------------------------
// run

struct RunOptions {
  PipelineConfig config;
  std::string out_dir;
  bool fail_on_critical = false;
  std::vector<std::string> inputs;
};

int cmd_run(const RunOptions& o, Env& env) {
  const std::string format = o.config.format.value_or(std::string(formats::combined));
  parse_format_spec(format);
  for (const auto& p : o.inputs) Input check(p);
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec || !fs::is_directory(o.out_dir)) throw IoError("cannot create output directory " + o.out_dir);

  auto path = [&](const char* name) { return (fs::path(o.out_dir) / name).string(); };
  const std::vector<std::string> produced = {path("parsed.jsonl"), path("diag.jsonl"),
                                             path("report.json"), path("entries.jsonl"),
                                             path("sessions.jsonl"), path("stats.json")};
  try {
    ParseOptions p;
    p.format = format;
    p.policy = o.config.on_error;
    p.out = produced[0];
    p.diag = produced[1];
    p.inputs = o.inputs;
    if (cmd_parse(p, env) != exit_code::ok) throw DataError("parse halted on a malformed line");

    QualityOptions q;
    q.config = o.config.quality;
    q.log_format = format;
    q.corpus_id = fs::path(o.inputs.front()).filename().string();
    q.out = produced[2];
    q.inputs = {produced[0], produced[1]};
    cmd_quality(q, env);

    PreprocessOptions pp;
    pp.cleaning = o.config.cleaning;
    pp.generalization = o.config.generalization;
    pp.id_fallback = o.config.id_fallback;
    pp.repair = o.config.repair_timestamps;
    pp.window = o.config.fusion_window;
    pp.out = produced[3];
    pp.inputs = {produced[0]};
    cmd_preprocess(pp, env);

    SessionizeOptions s;
    s.config = o.config.sessionizer;
    s.log_format = format;
    s.out = produced[4];
    s.inputs = {produced[3]};
    cmd_sessionize(s, env);

    StatsOptions st;
    st.min_size = o.config.min_size;
    st.per_app = true;
    st.out = produced[5];
    st.inputs = {produced[4]};
    cmd_stats(st, env);

    if (o.fail_on_critical) {
      std::ifstream in(produced[2]);
      const auto report = json::parse(in);
      std::vector<std::string> kinds;
      for (const auto& i : report["issues"]) {
        if (i["severity"] == "critical") kinds.push_back(i["kind"].get<std::string>());
      }
      if (!kinds.empty()) {
        env.err << "critical quality issue: " << join(kinds, ", ") << "\n";
        return exit_code::critical;
      }
    }
    return exit_code::ok;
  } catch (...) {
    for (const auto& f : produced) fs::remove(f, ec);
    throw;
  }
}

// ---------------------------------------------------------------------------

std::int64_t duration_arg(const std::string& s, const char* flag) {
  auto d = parse_duration(s);
  if (!d) throw ConfigError(std::string(flag) + " expects a duration such as 5m, 90s or 500ms");
  return *d;
}

Heuristic heuristic_arg(const std::string& s) {
  auto h = heuristic_from_string(s);
  if (!h) throw ConfigError("--heuristic must be time, page-stay or nav");
  return *h;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Env env{out, err};
  CLI::App app{"wapilog: web API usage log pre-processing, sessionization and quality checks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "TOML configuration (default: $WAPILOG_CONFIG)");

  // Flags are captured raw and applied over the config file afterwards.
  std::string format, on_error = "skip", out_path = "-", diag_path, dropped_path, rules_path;
  std::string heuristic, delta, theta, app_open, user_key, log_format, profile;
  std::string output_format = "json", corpus_id, configs_path, preset = "golden", truth_path;
  std::string sessions_path, out_dir, label = "sessions";
  std::vector<std::string> inputs, id_locators;
  bool repair = false, no_repair = false, no_id_fallback = false, fail_on_critical = false;
  bool per_app = false, raw_paths = false, show_format = false;
  int min_size = 3, users = 0, visits = 0;
  std::uint64_t seed = 42;
  double concurrent = -1, corruption = -1;

  auto* parse = app.add_subcommand("parse", "Parse raw log lines into JSONL entries");
  parse->add_option("--format", format, "Apache-style log format string");
  parse->add_option("--on-error", on_error, "skip (record diagnostics) or halt")->check(CLI::IsMember({"skip", "halt"}));
  parse->add_option("--out", out_path, "Entries JSONL (- for stdout)");
  parse->add_option("--diag", diag_path, "Diagnostics JSONL");
  parse->add_option("inputs", inputs, "Log files (- for stdin)")->required();

  auto* pre = app.add_subcommand("preprocess", "Fuse, clean, repair timestamps and generalize paths");
  pre->add_option("--rules", rules_path, "TOML with [clean] and [[generalize]] sections");
  pre->add_flag("--repair-timestamps", repair, "Repair colliding timestamps (+1 ms)");
  pre->add_flag("--no-repair-timestamps", no_repair, "Leave timestamps untouched");
  pre->add_flag("--no-id-fallback", no_id_fallback, "Do not replace numeric/UUID segments with {id}");
  pre->add_option("--out", out_path, "Cleaned entries JSONL");
  pre->add_option("--dropped", dropped_path, "Dropped entries JSONL");
  pre->add_option("inputs", inputs, "Entry JSONL files")->required();

  auto* ses = app.add_subcommand("sessionize", "Reconstruct sessions");
  ses->add_option("--heuristic", heuristic, "time, page-stay or nav");
  ses->add_option("--delta", delta, "Session threshold, e.g. 5m, 15m, 30m");
  ses->add_option("--theta", theta, "Page-stay threshold, e.g. 10m");
  ses->add_option("--app-open-pattern", app_open, "Path pattern with one {app} segment");
  ses->add_option("--user-key", user_key, "Comma list of client_ip,user_agent");
  ses->add_option("--log-format", log_format, "Format of the original log (checks the referer is logged)");
  ses->add_option("--out", out_path, "Sessions JSONL");
  ses->add_option("inputs", inputs, "Ordered entry JSONL files")->required();

  auto* qual = app.add_subcommand("quality", "Detect log-quality issues");
  qual->add_option("--profile", profile, "nav-sessionization, time-sessionization, page-stay-sessionization, user-distinction");
  qual->add_option("--id-locator", id_locators, "query:<key> or path:<glob> (repeatable)");
  qual->add_option("--log-format", log_format, "Format of the original log (inferred when omitted)");
  qual->add_option("--format", output_format, "json or text");
  qual->add_option("--corpus-id", corpus_id, "Name used in the report");
  qual->add_flag("--fail-on-critical", fail_on_critical, "Exit 4 when a critical issue is found");
  qual->add_option("--out", out_path, "Report path");
  qual->add_option("inputs", inputs, "Entry and diagnostic JSONL files")->required();

  auto* sta = app.add_subcommand("stats", "Session statistics");
  sta->add_option("--min-size", min_size, "Count sessions with more than this many entries");
  sta->add_flag("--per-app", per_app, "Distinct request shapes per application");
  sta->add_flag("--raw-paths", raw_paths, "Use raw paths instead of generalized ones");
  sta->add_option("--label", label, "Label stored in the output");
  sta->add_option("--out", out_path, "Stats JSON");
  sta->add_option("inputs", inputs, "Sessions JSONL files")->required();

  auto* cmp = app.add_subcommand("compare", "Compare sessionizer configurations");
  cmp->add_option("--configs", configs_path, "TOML with [[config]] tables (default: time/nav x 5m/15m)");
  cmp->add_option("--min-size", min_size, "Count sessions with more than this many entries");
  cmp->add_option("--log-format", log_format, "Format of the original log");
  cmp->add_option("--out", out_path, "CSV table");
  cmp->add_option("inputs", inputs, "Ordered entry JSONL file")->required()->expected(1);

  auto* syn = app.add_subcommand("synth", "Generate a synthetic log with ground truth");
  syn->add_option("--preset", preset, "msf, widp or golden")->check(CLI::IsMember({"msf", "widp", "golden"}));
  syn->add_option("--users", users, "Simulated users");
  syn->add_option("--visits", visits, "Visits per user");
  syn->add_option("--seed", seed, "Random seed");
  syn->add_option("--concurrent-open-rate", concurrent, "Probability of a second app opened mid-visit");
  syn->add_option("--corruption-rate", corruption, "Fraction of lines made unparseable");
  syn->add_flag("--show-format", show_format, "Print the log format string and exit");
  syn->add_option("--out", out_path, "Log file");
  syn->add_option("--truth", truth_path, "Truth JSONL");

  auto* sco = app.add_subcommand("score", "Score sessions against ground truth");
  sco->add_option("--truth", truth_path, "Truth JSONL")->required();
  sco->add_option("--sessions", sessions_path, "Sessions JSONL")->required();
  sco->add_option("--out", out_path, "Score JSON");

  auto* run = app.add_subcommand("run", "parse, quality, preprocess, sessionize and stats in one go");
  run->add_option("--format", format, "Apache-style log format string");
  run->add_option("--heuristic", heuristic, "time, page-stay or nav");
  run->add_option("--delta", delta, "Session threshold");
  run->add_option("--out-dir", out_dir, "Directory for all outputs")->required();
  run->add_flag("--fail-on-critical", fail_on_critical, "Exit 4 when a critical issue is found");
  run->add_option("inputs", inputs, "Log files")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::config;
  }

  try {
    // Configuration is loaded and validated before any input is touched.
    if (config_path.empty()) {
      if (const char* envp = std::getenv("WAPILOG_CONFIG"); envp && *envp) config_path = envp;
    }
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (!format.empty()) {
      parse_format_spec(format);
      cfg.format = format;
    }
    if (!heuristic.empty()) cfg.sessionizer.heuristic = heuristic_arg(heuristic);
    if (!delta.empty()) {
      cfg.sessionizer.delta_ms = duration_arg(delta, "--delta");
      cfg.quality.delta_ms = cfg.sessionizer.delta_ms;
    }
    if (!theta.empty()) cfg.sessionizer.theta_ms = duration_arg(theta, "--theta");
    if (!app_open.empty()) {
      cfg.sessionizer.app_open_pattern = AppOpenPattern(app_open);
      cfg.quality.app_open_pattern = cfg.sessionizer.app_open_pattern;
    }
    if (!user_key.empty()) cfg.sessionizer.user_key_fields = user_key_fields_from_string(user_key);
    cfg.sessionizer.validate();
    if (!profile.empty()) cfg.quality.profile = AnalysisProfile::named(profile);
    if (!id_locators.empty()) {
      cfg.quality.id_locators.clear();
      for (const auto& l : id_locators) cfg.quality.id_locators.push_back(IdLocator::parse(l));
    }
    cfg.quality.validate();

    if (parse->parsed()) {
      ParseOptions o;
      o.format = cfg.format.value_or(std::string(formats::combined));
      o.policy = parse->count("--on-error") ? error_policy_from_string(on_error) : cfg.on_error;
      o.out = out_path;
      o.diag = diag_path;
      o.inputs = inputs;
      return cmd_parse(o, env);
    }
    if (pre->parsed()) {
      PreprocessOptions o;
      PipelineConfig rules = rules_path.empty() ? cfg : load_config(rules_path);
      o.cleaning = rules.cleaning;
      o.generalization = rules.generalization;
      o.id_fallback = no_id_fallback ? false : rules.id_fallback;
      o.repair = repair ? true : no_repair ? false : rules.repair_timestamps;
      o.window = rules.fusion_window;
      o.out = out_path;
      o.dropped = dropped_path;
      o.inputs = inputs;
      return cmd_preprocess(o, env);
    }
    if (ses->parsed()) {
      SessionizeOptions o;
      o.config = cfg.sessionizer;
      o.log_format = log_format;
      o.out = out_path;
      o.inputs = inputs;
      return cmd_sessionize(o, env);
    }
    if (qual->parsed()) {
      QualityOptions o;
      o.config = cfg.quality;
      o.log_format = log_format;
      o.output_format = output_format;
      o.corpus_id = corpus_id;
      o.fail_on_critical = fail_on_critical;
      o.out = out_path;
      o.inputs = inputs;
      return cmd_quality(o, env);
    }
    if (sta->parsed()) {
      StatsOptions o;
      o.min_size = sta->count("--min-size") ? min_size : cfg.min_size;
      o.per_app = per_app;
      o.generalized = !raw_paths;
      o.label = label;
      o.out = out_path;
      o.inputs = inputs;
      return cmd_stats(o, env);
    }
    if (cmp->parsed()) {
      CompareOptions o;
      o.configs = configs_path.empty() ? default_compare_configs() : load_compare_configs(configs_path);
      o.min_size = cmp->count("--min-size") ? min_size : cfg.min_size;
      o.log_format = log_format;
      o.out = out_path;
      o.input = inputs.front();
      return cmd_compare(o, env);
    }
    if (syn->parsed()) {
      SynthOptions o;
      o.spec = workload_preset(preset);
      o.spec.seed = seed;
      if (users > 0) o.spec.user_count = users;
      else if (syn->count("--users")) throw ConfigError("--users must be at least 1");
      if (visits > 0) o.spec.visits_per_user = visits;
      else if (syn->count("--visits")) throw ConfigError("--visits must be at least 1");
      if (syn->count("--concurrent-open-rate")) o.spec.concurrent_open_rate = concurrent;
      if (syn->count("--corruption-rate")) o.spec.corruption_rate = corruption;
      if (out_path != "-") o.spec.source_id = out_path;
      o.show_format = show_format;
      o.out = out_path;
      o.truth = truth_path;
      return cmd_synth(o, env);
    }
    if (sco->parsed()) {
      ScoreOptions o;
      o.truth = truth_path;
      o.sessions = sessions_path;
      o.out = out_path;
      return cmd_score(o, env);
    }
    if (run->parsed()) {
      RunOptions o;
      o.config = cfg;
      o.out_dir = out_dir;
      o.fail_on_critical = fail_on_critical;
      o.inputs = inputs;
      return cmd_run(o, env);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_code::io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::failure;
  }
  return exit_code::failure;
}

}  // namespace wapilog
