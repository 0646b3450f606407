#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "wapilog/cli.hpp"
#include "wapilog/jsonl.hpp"

using namespace wapilog;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("wapilog_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const std::string& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string preset_format(const std::string& preset) {
  auto r = cli({"synth", "--preset", preset, "--show-format"});
  REQUIRE(r.code == 0);
  REQUIRE(!r.out.empty());
  r.out.pop_back();
  return r.out;
}

/// Synthesizes a small log; returns its path.
std::string make_log(const TempDir& d, const std::string& preset, int users = 6, const std::string& seed = "7") {
  const auto log = d / (preset + ".log");
  auto r = cli({"synth", "--preset", preset, "--users", std::to_string(users), "--seed", seed, "--out", log,
                "--truth", d / (preset + ".truth.jsonl")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return log;
}

/// Scoped environment variable.
struct EnvVar {
  std::string name;
  EnvVar(const std::string& n, const std::string& v) : name(n) { setenv(n.c_str(), v.c_str(), 1); }
  ~EnvVar() { unsetenv(name.c_str()); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  TempDir d;
  CHECK(cli({"parse", "--no-such-flag", "x"}).code == exit_code::config);
  CHECK(cli({}).code == exit_code::config);
  CHECK(cli({"sessionize", "--heuristic", "bogus", d / "x"}).code == exit_code::config);
  CHECK(cli({"sessionize", "--delta", "5 minutes", d / "x"}).code == exit_code::config);
  CHECK(cli({"parse", d / "missing.log"}).code == exit_code::io);
  CHECK(cli({"parse", "--format", "%q", d / "missing.log"}).code == exit_code::config);

  auto help = cli({"--help"});
  CHECK(help.code == exit_code::ok);
  CHECK(help.out.find("sessionize") != std::string::npos);

  write(d / "bad.log", "this is not a log line\n");
  CHECK(cli({"parse", "--on-error", "halt", "--out", d / "p.jsonl", d / "bad.log"}).code == exit_code::failure);
  auto skip = cli({"parse", "--out", d / "p.jsonl", "--diag", d / "diag.jsonl", d / "bad.log"});
  CHECK(skip.code == exit_code::ok);
  CHECK(slurp(d / "p.jsonl").empty());
  CHECK(slurp(d / "diag.jsonl").find("bad.log") != std::string::npos);
}

TEST_CASE("a configuration error is reported before any output is written") {
  TempDir d;
  const auto log = make_log(d, "golden");
  write(d / "bad.toml", "[sessionize]\nheuristic = \"sideways\"\n");
  auto r = cli({"--config", d / "bad.toml", "run", "--out-dir", d / "out", log});
  CHECK(r.code == exit_code::config);
  CHECK(r.err.find("configuration error") != std::string::npos);
  CHECK((!fs::exists(d / "out") || fs::is_empty(d / "out")));

  write(d / "broken.toml", "[sessionize\n");
  EnvVar env("WAPILOG_CONFIG", d / "broken.toml");
  CHECK(cli({"run", "--out-dir", d / "out", log}).code == exit_code::config);
  CHECK((!fs::exists(d / "out") || fs::is_empty(d / "out")));
}

TEST_CASE("run equals the chained subcommands byte for byte") {
  TempDir d;
  const auto log = make_log(d, "golden", 8);
  const auto fmt = preset_format("golden");
  REQUIRE(cli({"run", "--format", fmt, "--heuristic", "nav", "--out-dir", d / "run", log}).code == 0);

  fs::create_directories(d.path / "chain");
  const auto c = [&](const std::string& n) { return d / ("chain/" + n); };
  REQUIRE(cli({"parse", "--format", fmt, "--out", c("parsed.jsonl"), "--diag", c("diag.jsonl"), log}).code == 0);
  REQUIRE(cli({"quality", "--log-format", fmt, "--corpus-id", "golden.log", "--out",
               c("report.json"), c("parsed.jsonl"), c("diag.jsonl")}).code == 0);
  REQUIRE(cli({"preprocess", "--out", c("entries.jsonl"), c("parsed.jsonl")}).code == 0);
  REQUIRE(cli({"sessionize", "--heuristic", "nav", "--log-format", fmt, "--out",
               c("sessions.jsonl"), c("entries.jsonl")}).code == 0);
  REQUIRE(cli({"stats", "--per-app", "--out", c("stats.json"), c("sessions.jsonl")}).code == 0);

  for (const char* f : {"parsed.jsonl", "diag.jsonl", "report.json", "entries.jsonl", "sessions.jsonl", "stats.json"}) {
    CAPTURE(f);
    const auto a = slurp(d / (std::string("run/") + f));
    if (std::string(f) != "diag.jsonl") CHECK(!a.empty());
    CHECK(a == slurp(c(f)));
  }
}

TEST_CASE("golden log runs clean and MSF fails on critical") {
  TempDir d;
  const auto golden = make_log(d, "golden");
  auto ok = cli({"run", "--format", preset_format("golden"), "--fail-on-critical", "--out-dir", d / "g", golden});
  CHECK_MESSAGE(ok.code == exit_code::ok, ok.err);
  const auto report = json::parse(slurp(d / "g/report.json"));
  CHECK(report["issues"].empty());
  CHECK(report["corpus_id"] == "golden.log");
  const auto stats = json::parse(slurp(d / "g/stats.json"));
  CHECK(stats["sessions_total"].get<int>() > 0);
  CHECK(stats.contains("per_app"));

  const auto msf = make_log(d, "msf", 20);
  auto bad = cli({"run", "--format", preset_format("msf"), "--fail-on-critical", "--out-dir", d / "m", msf});
  CHECK(bad.code == exit_code::critical);
  CHECK(bad.err.find("hidden_client_ip") != std::string::npos);
  // Outputs stay for inspection.
  CHECK(fs::exists(d / "m/report.json"));

  auto q = cli({"quality", "--fail-on-critical", "--log-format", preset_format("msf"), "--out", d / "q.json",
                d / "m/parsed.jsonl"});
  CHECK(q.code == exit_code::critical);
  auto text = cli({"quality", "--format", "text", "--log-format", preset_format("msf"), d / "m/parsed.jsonl"});
  CHECK(text.code == exit_code::ok);
  CHECK(text.out.find("hidden_client_ip") != std::string::npos);
}

TEST_CASE("partial outputs are removed when a later stage fails") {
  TempDir d;
  // No referer in the WIDP format, so the nav heuristic is rejected at the sessionize step.
  const auto log = make_log(d, "widp");
  auto r = cli({"run", "--format", preset_format("widp"), "--heuristic", "nav", "--out-dir", d / "w", log});
  CHECK(r.code == exit_code::config);
  CHECK(fs::is_empty(d / "w"));
}

TEST_CASE("dash output streams to stdout") {
  TempDir d;
  const auto log = make_log(d, "golden", 3);
  auto r = cli({"parse", "--format", preset_format("golden"), log});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    CHECK(json::parse(line).contains("timestamp"));
    ++n;
  }
  CHECK(n > 0);
  auto synth = cli({"synth", "--preset", "golden", "--users", "1"});
  CHECK(synth.code == 0);
  CHECK(!synth.out.empty());
}

TEST_CASE("WAPILOG_CONFIG supplies defaults and flags override it") {
  TempDir d;
  const auto log = make_log(d, "golden", 10);
  const auto fmt = preset_format("golden");
  REQUIRE(cli({"parse", "--format", fmt, "--out", d / "p.jsonl", log}).code == 0);
  REQUIRE(cli({"preprocess", "--out", d / "e.jsonl", d / "p.jsonl"}).code == 0);
  REQUIRE(cli({"sessionize", "--out", d / "s.jsonl", d / "e.jsonl"}).code == 0);

  write(d / "c.toml", "[stats]\nmin_size = 1\n");
  EnvVar env("WAPILOG_CONFIG", d / "c.toml");
  auto from_env = json::parse(cli({"stats", d / "s.jsonl"}).out);
  CHECK(from_env["min_size"] == 1);
  auto flag = json::parse(cli({"stats", "--min-size", "4", d / "s.jsonl"}).out);
  CHECK(flag["min_size"] == 4);
  CHECK(flag["session_count"].get<int>() <= from_env["session_count"].get<int>());

  write(d / "other.toml", "[stats]\nmin_size = 2\n");
  auto explicit_cfg = json::parse(cli({"--config", d / "other.toml", "stats", d / "s.jsonl"}).out);
  CHECK(explicit_cfg["min_size"] == 2);
}

TEST_CASE("synth, run and score") {
  TempDir d;
  const auto log = make_log(d, "golden", 12, "3");
  REQUIRE(cli({"run", "--format", preset_format("golden"), "--heuristic", "nav", "--out-dir", d / "r", log}).code == 0);
  auto s = cli({"score", "--truth", d / "golden.truth.jsonl", "--sessions", d / "r/sessions.jsonl"});
  REQUIRE_MESSAGE(s.code == 0, s.err);
  const auto j = json::parse(s.out);
  CHECK(j["pairwise_f1"].get<double>() > 0.5);
  CHECK(j["pairwise_f1"].get<double>() <= 1.0);

  // Truth from a different corpus does not line up.
  const auto other = make_log(d, "msf", 2);
  (void)other;
  auto mismatch = cli({"score", "--truth", d / "msf.truth.jsonl", "--sessions", d / "r/sessions.jsonl"});
  CHECK(mismatch.code == exit_code::failure);
}

TEST_CASE("compare prints one CSV row per configuration") {
  TempDir d;
  const auto log = make_log(d, "golden", 10);
  REQUIRE(cli({"parse", "--format", preset_format("golden"), "--out", d / "p.jsonl", log}).code == 0);
  REQUIRE(cli({"preprocess", "--out", d / "e.jsonl", d / "p.jsonl"}).code == 0);
  auto r = cli({"compare", d / "e.jsonl"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "heuristic,no_of_sessions,avg_duration_sec,avg_size,discarded");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("the installed binary behaves like the in-process entry point") {
  TempDir d;
  const std::string cmd = std::string(WAPILOG_BIN) + " synth --preset golden --users 2 --out " + (d / "x.log");
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::file_size(d / "x.log") > 0);
  const std::string bad = std::string(WAPILOG_BIN) + " parse " + (d / "nope.log") + " 2>/dev/null";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == exit_code::io);
}

}  // TEST_SUITE
