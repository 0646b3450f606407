#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "wapilog/errors.hpp"
#include "wapilog/preprocess.hpp"
#include "wapilog/sessionizer.hpp"
#include "wapilog/stats.hpp"
#include "wapilog/synth.hpp"

using namespace wapilog;

namespace {

constexpr std::int64_t kSec = 1000;
constexpr std::int64_t kMin = 60 * kSec;

struct Builder {
  std::vector<LogEntry> entries;

  Builder& add(std::int64_t ts, std::string method, std::string path,
               std::optional<std::string> referer = std::nullopt,
               std::optional<std::string> ip = std::nullopt) {
    LogEntry e;
    e.timestamp.epoch_millis = ts;
    e.request = {std::move(method), std::move(path), {}, "HTTP/1.1"};
    e.referer = std::move(referer);
    e.client_ip = std::move(ip);
    e.source_id = "t";
    e.file_order = static_cast<std::int64_t>(entries.size());
    entries.push_back(std::move(e));
    return *this;
  }
  Builder& open(std::int64_t ts, const std::string& app, std::optional<std::string> referer = std::nullopt) {
    return add(ts, "GET", "/" + app + "/index.action", std::move(referer));
  }
  Builder& req(std::int64_t ts, std::optional<std::string> referer = std::nullopt) {
    return add(ts, "GET", "/api/29/events", std::move(referer));
  }
};

SessionizerConfig config(Heuristic h, std::int64_t delta = 5 * kMin) {
  SessionizerConfig c;
  c.heuristic = h;
  c.delta_ms = delta;
  return c;
}

std::vector<std::int64_t> orders(const Session& s) {
  std::vector<std::int64_t> out;
  for (const auto& se : s.entries) out.push_back(se.entry.file_order);
  return out;
}

const Session& by_id(const SessionizationResult& r, const std::string& id) {
  for (const auto& s : r.sessions) {
    if (s.session_id == id) return s;
  }
  FAIL("no session " << id);
  throw std::logic_error("unreachable");
}

void check_partition(const std::vector<LogEntry>& input, const SessionizationResult& r) {
  std::multiset<std::int64_t> seen;
  for (const auto& s : r.sessions) {
    REQUIRE_FALSE(s.entries.empty());
    for (std::size_t i = 0; i < s.entries.size(); ++i) {
      seen.insert(s.entries[i].entry.file_order);
      if (i) CHECK(s.entries[i].entry.timestamp.epoch_millis > s.entries[i - 1].entry.timestamp.epoch_millis);
    }
    CHECK(s.opened_at() == s.entries.front().entry.timestamp);
    CHECK(s.closed_at() == s.entries.back().entry.timestamp);
  }
  for (const auto& d : r.discarded) seen.insert(d.entry.file_order);
  std::multiset<std::int64_t> expected;
  for (const auto& e : input) expected.insert(e.file_order);
  CHECK(seen == expected);
}

/// Strictly increasing timestamps, three apps, random referers and gaps.
std::vector<LogEntry> random_corpus(std::mt19937_64& rng, int n, std::int64_t max_gap) {
  static const char* apps[] = {"App1", "App2", "App3"};
  Builder b;
  std::int64_t t = 1'000'000;
  for (int i = 0; i < n; ++i) {
    t += 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_gap));
    const auto pick = rng() % 10;
    std::optional<std::string> ref;
    switch (rng() % 4) {
      case 0: break;
      case 1: ref = std::string("https://h/") + apps[rng() % 3] + "/index.action"; break;
      case 2: ref = apps[rng() % 3]; break;
      default: ref = "https://h/Other/x"; break;
    }
    if (pick < 2) b.open(t, apps[rng() % 3], ref);
    else if (pick == 2) b.add(t, "POST", std::string("/") + apps[rng() % 3] + "/index.action", ref);
    else b.req(t, ref);
  }
  return b.entries;
}

}  // namespace

TEST_SUITE("sessionizer") {

TEST_CASE("app opening detection") {
  AppOpenPattern p;
  Builder b;
  b.open(1, "dhis-web-tracker-capture").req(2).add(3, "POST", "/App1/index.action");
  CHECK(detect_app_open(b.entries[0], p) == "dhis-web-tracker-capture");
  CHECK_FALSE(detect_app_open(b.entries[1], p));
  CHECK_FALSE(detect_app_open(b.entries[2], p));

  AppOpenPattern custom("/apps/{app}/*");
  CHECK(custom.match_path("/apps/maps/start") == "maps");
  CHECK_FALSE(custom.match_path("/apps/maps"));
  CHECK(custom.app_from_referer("https://h/apps/maps/x?y=1") == "maps");
  CHECK_THROWS_AS(AppOpenPattern("/apps/x"), ConfigError);
  CHECK_THROWS_AS(AppOpenPattern("/{app}/{app}"), ConfigError);
}

TEST_CASE("referers name applications") {
  AppOpenPattern p;
  CHECK(p.app_from_referer("https://h/dhis-web-dashboard/index.html") == "dhis-web-dashboard");
  CHECK(p.app_from_referer("App1") == "App1");
  CHECK(p.app_from_referer("/App2/index.action") == "App2");
  CHECK_FALSE(p.app_from_referer("https://h"));
}

TEST_CASE("time heuristic follows the most recent opening") {
  const std::int64_t t1 = 1'000'000, t3 = t1 + 60 * kSec;
  Builder b;
  b.open(t1, "App1").req(t1 + 10 * kSec).open(t3, "App2").req(t3 + 20 * kSec).req(t3 + 30 * kSec);
  auto r = sessionize_time(b.entries, config(Heuristic::time_total));
  REQUIRE(r.sessions.size() == 2);
  CHECK(r.discarded.empty());
  CHECK(orders(by_id(r, "s1")) == std::vector<std::int64_t>{0, 1});
  CHECK(orders(by_id(r, "s2")) == std::vector<std::int64_t>{2, 3, 4});
  // App1 was still within delta, so the choice between the two sessions shows up as a flag.
  CHECK(by_id(r, "s2").entries[1].ambiguous);
  CHECK(by_id(r, "s2").entries[1].app == "App2");
}

TEST_CASE("single opening is a session of one") {
  Builder b;
  b.open(5, "App1");
  for (auto h : {Heuristic::time_total, Heuristic::navigation_time, Heuristic::page_stay}) {
    auto r = sessionize(b.entries, config(h));
    REQUIRE(r.sessions.size() == 1);
    CHECK(r.sessions[0].entries.size() == 1);
    CHECK(r.sessions[0].app == "App1");
  }
}

TEST_CASE("time heuristic discard reasons") {
  Builder b;
  b.req(1).open(2, "App1").req(3).req(3 + 6 * kMin);
  auto r = sessionize_time(b.entries, config(Heuristic::time_total));
  REQUIRE(r.discarded.size() == 2);
  CHECK(r.discarded[0].reason == DiscardReason::no_open_app);
  CHECK(r.discarded[1].reason == DiscardReason::over_threshold);
}

TEST_CASE("navigation heuristic follows the referer") {
  Builder b;
  b.open(1 * kSec, "App1").req(2 * kSec, "App1").open(3 * kSec, "App2", "App1").req(4 * kSec, "App2").req(5 * kSec, "App1");
  auto r = sessionize_navigation(b.entries, config(Heuristic::navigation_time));
  REQUIRE(r.sessions.size() == 2);
  CHECK(orders(by_id(r, "s1")) == std::vector<std::int64_t>{0, 1, 4});
  CHECK(orders(by_id(r, "s2")) == std::vector<std::int64_t>{2, 3});
  for (const auto& s : r.sessions) {
    for (const auto& se : s.entries) CHECK_FALSE(se.ambiguous);
  }
}

TEST_CASE("navigation heuristic flags two open sessions of one application") {
  Builder b;
  b.open(1 * kSec, "App1").req(2 * kSec, "App1").open(3 * kSec, "App1", "App1").req(4 * kSec, "App1").req(5 * kSec, "App1");
  auto r = sessionize_navigation(b.entries, config(Heuristic::navigation_time));
  REQUIRE(r.sessions.size() == 2);
  CHECK(orders(by_id(r, "s1")) == std::vector<std::int64_t>{0, 1});
  const auto& s2 = by_id(r, "s2");
  CHECK(orders(s2) == std::vector<std::int64_t>{2, 3, 4});
  CHECK(s2.entries[1].ambiguous);
  CHECK(s2.entries[2].ambiguous);
}

TEST_CASE("navigation without any referer discards every request") {
  Builder b;
  b.open(1, "App1").req(2).req(3).open(4, "App2").req(5);
  auto r = sessionize_navigation(b.entries, config(Heuristic::navigation_time));
  CHECK(r.sessions.size() == 2);
  REQUIRE(r.discarded.size() == 3);
  for (const auto& d : r.discarded) CHECK(d.reason == DiscardReason::no_open_app);
}

TEST_CASE("navigation refuses formats without a referer") {
  auto widp = parse_format_spec(formats::widp);
  CHECK_THROWS_AS(sessionize_navigation({}, config(Heuristic::navigation_time), &widp), ConfigError);
  CHECK_THROWS_AS(Sessionizer(config(Heuristic::navigation_time), [](Session&&) {}, [](DiscardedEntry&&) {}, &widp),
                  ConfigError);
  auto golden = parse_format_spec(formats::golden);
  CHECK_NOTHROW(sessionize_navigation({}, config(Heuristic::navigation_time), &golden));
}

TEST_CASE("heuristic-specific entry points check the config") {
  CHECK_THROWS_AS(sessionize_time({}, config(Heuristic::navigation_time)), ConfigError);
  CHECK_THROWS_AS(sessionize_page_stay({}, config(Heuristic::time_total)), ConfigError);
  CHECK_THROWS_AS(sessionize_navigation({}, config(Heuristic::page_stay)), ConfigError);
  auto bad = config(Heuristic::time_total, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto bad_theta = config(Heuristic::page_stay);
  bad_theta.theta_ms = 0;
  CHECK_THROWS_AS(bad_theta.validate(), ConfigError);
}

TEST_CASE("page-stay splits on long stays") {
  Builder b;
  std::int64_t t = 1'000'000;
  b.open(t, "App1");
  for (auto gap : {5, 5, 400, 5}) b.req(t += gap * kSec);
  auto c = config(Heuristic::page_stay);
  c.theta_ms = 300 * kSec;
  auto r = sessionize_page_stay(b.entries, c);
  REQUIRE(r.sessions.size() == 2);
  CHECK(r.sessions[0].entries.size() == 3);
  CHECK(r.sessions[1].entries.size() == 2);
  CHECK(r.sessions[0].app == "App1");
  CHECK_FALSE(r.sessions[1].app);

  Builder short_gaps;
  for (int i = 0; i < 10; ++i) short_gaps.req(t += 100 * kSec);
  CHECK(sessionize_page_stay(short_gaps.entries, c).sessions.size() == 1);
}

TEST_CASE("page-stay boundaries match the gap scan") {
  std::mt19937_64 rng(12);
  for (int round = 0; round < 50; ++round) {
    auto entries = random_corpus(rng, 300, 8 * kMin);
    auto c = config(Heuristic::page_stay);
    c.theta_ms = static_cast<std::int64_t>(1 + rng() % (6 * kMin));
    auto r = sessionize_page_stay(entries, c);
    CHECK(r.discarded.empty());
    std::vector<std::size_t> starts;
    for (const auto& s : r.sessions) starts.push_back(static_cast<std::size_t>(s.entries.front().entry.file_order));
    std::sort(starts.begin(), starts.end());
    CHECK(starts == oracle::page_stay_boundaries(entries, c.theta_ms));
    check_partition(entries, r);
  }
}

TEST_CASE("time and navigation agree with the brute-force replay") {
  std::mt19937_64 rng(13);
  for (int round = 0; round < 50; ++round) {
    auto entries = random_corpus(rng, 400, 3 * kMin);
    for (bool nav : {false, true}) {
      auto c = config(nav ? Heuristic::navigation_time : Heuristic::time_total,
                      static_cast<std::int64_t>(kMin + rng() % (5 * kMin)));
      auto r = sessionize(entries, c);
      auto want = oracle::replay_app_bound(entries, c.delta_ms, nav);
      REQUIRE(r.sessions.size() == want.sessions.size());
      for (std::size_t k = 0; k < want.sessions.size(); ++k) {
        const auto& s = by_id(r, "s" + std::to_string(k + 1));
        CHECK(orders(s) == want.sessions[k].members);
        CHECK(s.app == want.sessions[k].app);
        for (const auto& se : s.entries) CHECK(se.ambiguous == (want.ambiguous.count(se.entry.file_order) > 0));
      }
      REQUIRE(r.discarded.size() == want.discarded.size());
      for (const auto& d : r.discarded) {
        REQUIRE(want.discarded.count(d.entry.file_order));
        CHECK(to_string(d.reason) == want.discarded.at(d.entry.file_order));
      }
      check_partition(entries, r);
    }
  }
}

TEST_CASE("partition holds for every heuristic with user keys") {
  std::mt19937_64 rng(14);
  for (int round = 0; round < 30; ++round) {
    auto entries = random_corpus(rng, 300, 2 * kMin);
    for (auto& e : entries) {
      if (rng() % 3) e.client_ip = "10.0.0." + std::to_string(rng() % 4);
      if (rng() % 2) e.user_agent = rng() % 2 ? "ua-a" : "ua-b";
    }
    for (auto h : {Heuristic::time_total, Heuristic::page_stay, Heuristic::navigation_time}) {
      auto c = config(h);
      c.user_key_fields = {UserKeyField::client_ip, UserKeyField::user_agent};
      auto r = sessionize(entries, c);
      check_partition(entries, r);
      for (const auto& s : r.sessions) {
        for (const auto& se : s.entries) CHECK(user_key(se.entry, c.user_key_fields) == s.user_key);
      }
    }
  }
}

TEST_CASE("user keys") {
  LogEntry e;
  e.client_ip = "203.0.113.9";
  e.user_agent = "Mozilla/5.0 (X11)";
  CHECK(user_key(e, {UserKeyField::client_ip, UserKeyField::user_agent}) == "203.0.113.9|Mozilla/5.0 (X11)");
  e.client_ip.reset();
  CHECK(user_key(e, {UserKeyField::client_ip, UserKeyField::user_agent}) == "Mozilla/5.0 (X11)");
  e.user_agent.reset();
  CHECK_FALSE(user_key(e, {UserKeyField::client_ip, UserKeyField::user_agent}));
}

TEST_CASE("user keys separate concurrent users") {
  Builder b;
  b.open(1, "App1");
  b.entries.back().client_ip = "a";
  b.open(2, "App1");
  b.entries.back().client_ip = "b";
  b.req(3, "App1");
  b.entries.back().client_ip = "a";
  b.req(4, "App1");
  b.entries.back().client_ip = "c";
  auto c = config(Heuristic::navigation_time);
  c.user_key_fields = {UserKeyField::client_ip};
  auto r = sessionize(b.entries, c);
  CHECK(orders(by_id(r, "s1")) == std::vector<std::int64_t>{0, 2});
  CHECK_FALSE(by_id(r, "s1").entries[1].ambiguous);
  REQUIRE(r.discarded.size() == 1);
  CHECK(r.discarded[0].reason == DiscardReason::no_open_app);
}

TEST_CASE("sessionizer rejects unordered input") {
  Builder b;
  b.open(10, "App1").req(10);
  CHECK_THROWS_AS(sessionize(b.entries, config(Heuristic::time_total)), std::invalid_argument);
}

TEST_CASE("sessions stream out once they can no longer grow") {
  Builder b;
  b.open(0, "App1").req(kSec).open(20 * kMin, "App2").req(20 * kMin + kSec);
  std::vector<std::string> closed;
  Sessionizer s(config(Heuristic::time_total), [&](Session&& x) { closed.push_back(x.session_id); },
                [](DiscardedEntry&&) {});
  for (std::size_t i = 0; i < 3; ++i) s.push(b.entries[i]);
  CHECK(closed == std::vector<std::string>{"s1"});
  CHECK(s.open_sessions() == 1);
  s.push(b.entries[3]);
  s.finish();
  CHECK(closed == std::vector<std::string>{"s1", "s2"});
}

TEST_CASE("sessionization is deterministic") {
  std::mt19937_64 rng(15);
  auto entries = random_corpus(rng, 500, kMin);
  for (auto h : {Heuristic::time_total, Heuristic::page_stay, Heuristic::navigation_time}) {
    auto a = sessionize(entries, config(h));
    auto b = sessionize(entries, config(h));
    REQUIRE(a.sessions.size() == b.sessions.size());
    for (std::size_t i = 0; i < a.sessions.size(); ++i) {
      CHECK(a.sessions[i].session_id == b.sessions[i].session_id);
      CHECK(orders(a.sessions[i]) == orders(b.sessions[i]));
    }
  }
}

TEST_CASE("navigation yields fewer and larger sessions on concurrent workloads") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto spec = workload_preset("golden");
    spec.seed = seed;
    spec.user_count = 60;
    spec.visits_per_user = 4;
    spec.arrival_window_ms = 180 * kMin;
    spec.concurrent_open_rate = 0.3;
    spec.session_length = {1, 60, 1.5};
    auto corpus = generate(spec);
    auto entries = repair_timestamps(fuse({corpus.entries}));
    for (auto delta : {5 * kMin, 15 * kMin}) {
      auto time = session_stats(sessionize(entries, config(Heuristic::time_total, delta)));
      auto nav = session_stats(sessionize(entries, config(Heuristic::navigation_time, delta)));
      CHECK(nav.session_count <= time.session_count);
      REQUIRE(nav.avg_size);
      REQUIRE(time.avg_size);
      CHECK(*nav.avg_size >= *time.avg_size);
    }
  }
}

TEST_CASE("names round-trip") {
  for (auto h : {Heuristic::time_total, Heuristic::page_stay, Heuristic::navigation_time}) {
    CHECK(heuristic_from_string(to_string(h)) == h);
  }
  CHECK(heuristic_from_string("nav") == Heuristic::navigation_time);
  CHECK(heuristic_from_string("time") == Heuristic::time_total);
  CHECK(heuristic_from_string("page-stay") == Heuristic::page_stay);
  for (auto r : {DiscardReason::no_open_app, DiscardReason::over_threshold, DiscardReason::ambiguous}) {
    CHECK(discard_reason_from_string(to_string(r)) == r);
  }
  CHECK(parse_duration("5m") == 5 * kMin);
  CHECK(parse_duration("90s") == 90 * kSec);
  CHECK(parse_duration("1h") == 60 * kMin);
  CHECK(parse_duration("500ms") == 500);
  CHECK(parse_duration("250") == 250);
  CHECK_FALSE(parse_duration("5 parsecs"));
  CHECK(format_duration(15 * kMin) == "15m");
  CHECK(config(Heuristic::navigation_time, 15 * kMin).label() == "nav 15m");
}

}
