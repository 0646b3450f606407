#include <doctest.h>

#include <memory>
#include <random>

#include "oracles.hpp"
#include "wapilog/errors.hpp"
#include "wapilog/preprocess.hpp"
#include "wapilog/synth.hpp"

using namespace wapilog;

namespace {

LogEntry at(std::int64_t ts, std::string source, std::int64_t order, std::string path = "/") {
  LogEntry e;
  e.timestamp.epoch_millis = ts;
  e.source_id = std::move(source);
  e.file_order = order;
  e.request = {"GET", std::move(path), {}, "HTTP/1.1"};
  return e;
}

std::vector<LogEntry> random_source(std::mt19937_64& rng, const std::string& id, int n, std::int64_t spread) {
  std::vector<LogEntry> v;
  std::int64_t t = 0;
  for (int i = 0; i < n; ++i) {
    t += static_cast<std::int64_t>(rng() % spread);
    v.push_back(at(t, id, i));
  }
  return v;
}

using Key = std::tuple<std::int64_t, std::string, std::int64_t>;

std::vector<Key> keys(const std::vector<LogEntry>& v) {
  std::vector<Key> out;
  for (const auto& e : v) out.push_back(oracle::sort_key(e));
  return out;
}

std::vector<LogEntry> drain(StreamFuser& f) {
  std::vector<LogEntry> out;
  while (auto e = f.next()) out.push_back(std::move(*e));
  return out;
}

StreamFuser::Source from_vector(std::vector<LogEntry> v) {
  auto data = std::make_shared<std::vector<LogEntry>>(std::move(v));
  auto pos = std::make_shared<std::size_t>(0);
  return [data, pos]() -> std::optional<LogEntry> {
    if (*pos == data->size()) return std::nullopt;
    return (*data)[(*pos)++];
  };
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("fuse of one source is the identity") {
  std::mt19937_64 rng(1);
  auto a = random_source(rng, "a", 200, 5);
  CHECK(fuse({a}) == a);
  CHECK(fuse({}).empty());
}

TEST_CASE("fuse equals the oracle sort of the union") {
  std::mt19937_64 rng(2);
  for (int round = 0; round < 20; ++round) {
    auto a = random_source(rng, "a", 300, 4);
    auto b = random_source(rng, "b", 250, 6);
    auto c = random_source(rng, "c", 10, 100);
    std::vector<LogEntry> all = a;
    all.insert(all.end(), b.begin(), b.end());
    all.insert(all.end(), c.begin(), c.end());
    auto merged = fuse({a, b, c});
    CHECK(keys(merged) == keys(oracle::sorted(all)));
    // Associativity up to ordering.
    CHECK(keys(fuse({a, fuse({b, c})})) == keys(merged));
    CHECK(keys(fuse({fuse({a, b}), c})) == keys(merged));
  }
}

TEST_CASE("fuse keeps each source's order inside a shared second") {
  std::vector<LogEntry> a = {at(1000, "a", 0), at(1000, "a", 1), at(1000, "a", 2)};
  std::vector<LogEntry> b = {at(1000, "b", 0), at(1000, "b", 1)};
  auto merged = fuse({b, a});
  std::vector<std::int64_t> a_order, b_order;
  for (const auto& e : merged) (e.source_id == "a" ? a_order : b_order).push_back(e.file_order);
  CHECK(a_order == std::vector<std::int64_t>{0, 1, 2});
  CHECK(b_order == std::vector<std::int64_t>{0, 1});
}

TEST_CASE("fuse sorts sources that are out of order") {
  std::vector<LogEntry> a = {at(30, "a", 0), at(10, "a", 1), at(20, "a", 2)};
  CHECK(keys(fuse({a})) == keys(oracle::sorted(a)));
}

TEST_CASE("stream fuser absorbs disorder within its window") {
  std::mt19937_64 rng(4);
  auto a = random_source(rng, "a", 2000, 10);
  auto b = random_source(rng, "b", 2000, 10);
  // Local disorder: swap neighbours.
  auto a_shuffled = a;
  for (std::size_t i = 0; i + 1 < a_shuffled.size(); i += 2) {
    if (rng() % 2) std::swap(a_shuffled[i], a_shuffled[i + 1]);
  }
  StreamFuser f({from_vector(a_shuffled), from_vector(b)}, 16);
  auto out = drain(f);
  std::vector<LogEntry> all = a;
  all.insert(all.end(), b.begin(), b.end());
  CHECK(keys(out) == keys(oracle::sorted(all)));
  CHECK(f.late_entries() == 0);
}

TEST_CASE("stream fuser emits displaced entries late without losing them") {
  std::vector<LogEntry> a;
  for (int i = 0; i < 50; ++i) a.push_back(at(100 + i, "a", i));
  a.push_back(at(1, "a", 50));
  StreamFuser f({from_vector(a)}, 4);
  auto out = drain(f);
  CHECK(out.size() == a.size());
  CHECK(f.late_entries() == 1);
}

TEST_CASE("clean with empty rules keeps everything") {
  std::mt19937_64 rng(5);
  std::vector<LogEntry> v;
  for (int i = 0; i < 100; ++i) v.push_back(oracle::random_entry(rng, i));
  auto r = clean(v, {});
  CHECK(r.kept == v);
  CHECK(r.dropped.empty());
}

TEST_CASE("asset patterns drop only assets") {
  std::vector<LogEntry> v = {at(1, "s", 0, "/app/style.css"), at(2, "s", 1, "/api/29/events"),
                             at(3, "s", 2, "/img/logo.png"), at(4, "s", 3, "/dhis-web-dashboard/index.action")};
  CleaningRules rules;
  rules.drop_path_patterns = {"*.css", "*.png"};
  auto r = clean(v, rules);
  REQUIRE(r.kept.size() == 2);
  CHECK(r.kept[0].request.path == "/api/29/events");
  CHECK(r.kept[1].request.path == "/dhis-web-dashboard/index.action");
  CHECK(r.dropped.size() == 2);
}

TEST_CASE("clean partition agrees with a per-entry re-check") {
  std::mt19937_64 rng(6);
  static const char* pats[] = {"*.css", "/api/*", "*info", "/a?i/*", "*/events*", "/dhis-web-*/index.action"};
  static const char* prefixes[] = {"/api", "/dhis", "/x"};
  for (int round = 0; round < 50; ++round) {
    std::vector<LogEntry> v;
    for (int i = 0; i < 200; ++i) v.push_back(oracle::random_entry(rng, i));
    CleaningRules rules;
    for (int k = 0; k < 3; ++k) {
      if (rng() % 2) rules.drop_path_patterns.push_back(pats[rng() % 6]);
      if (rng() % 3 == 0) rules.drop_status.insert(100 + static_cast<int>(rng() % 500));
      if (rng() % 3 == 0) rules.drop_methods.insert(rng() % 2 ? "POST" : "DELETE");
    }
    if (rng() % 3 == 0) rules.keep_only_path_prefixes = std::vector<std::string>{prefixes[rng() % 3]};
    auto r = clean(v, rules);
    CHECK(r.kept.size() + r.dropped.size() == v.size());
    std::size_t ki = 0, di = 0;
    for (const auto& e : v) {
      bool drop = rules.drop_status.count(e.status) || rules.drop_methods.count(e.request.method);
      for (const auto& p : rules.drop_path_patterns) drop = drop || oracle::glob(p, e.request.path);
      if (rules.keep_only_path_prefixes) {
        bool inside = false;
        for (const auto& p : *rules.keep_only_path_prefixes) inside = inside || e.request.path.rfind(p, 0) == 0;
        drop = drop || !inside;
      }
      if (drop) {
        REQUIRE(di < r.dropped.size());
        CHECK(r.dropped[di++] == e);
      } else {
        REQUIRE(ki < r.kept.size());
        CHECK(r.kept[ki++] == e);
      }
    }
  }
}

TEST_CASE("invalid cleaning rules are rejected") {
  CleaningRules empty_glob;
  empty_glob.drop_path_patterns = {""};
  CHECK_THROWS_AS(empty_glob.validate(), ConfigError);
  CleaningRules open_bracket;
  open_bracket.drop_path_patterns = {"/api/[abc"};
  CHECK_THROWS_AS(open_bracket.validate(), ConfigError);
  CleaningRules empty_prefix;
  empty_prefix.keep_only_path_prefixes = std::vector<std::string>{""};
  CHECK_THROWS_AS(empty_prefix.validate(), ConfigError);
}

TEST_CASE("repair spreads one coarse second by one millisecond per entry") {
  const std::int64_t t = 1'561'392'355'000;  // 16:05:55
  std::vector<LogEntry> v = {at(t, "s", 0), at(t, "s", 1), at(t, "s", 2)};
  for (auto& e : v) e.timestamp.granularity = Granularity::second;
  auto r = repair_timestamps(v);
  CHECK(r[0].timestamp.epoch_millis == t);
  CHECK(r[1].timestamp.epoch_millis == t + 1);
  CHECK(r[2].timestamp.epoch_millis == t + 2);
  CHECK_FALSE(r[0].timestamp_repaired);
  CHECK(r[1].timestamp_repaired);
  CHECK(r[2].timestamp_repaired);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r[i].file_order == v[i].file_order);
}

TEST_CASE("repair leaves distinct timestamps alone") {
  std::vector<LogEntry> v = {at(1, "s", 0), at(5, "s", 1), at(9, "s", 2)};
  CHECK(repair_timestamps(v) == v);
}

TEST_CASE("repair may spill into the next second") {
  std::vector<LogEntry> v;
  for (int i = 0; i < 1200; ++i) v.push_back(at(5000, "s", i));
  v.push_back(at(6000, "s", 1200));
  auto r = repair_timestamps(v);
  CHECK(r[1199].timestamp.epoch_millis == 6199);
  CHECK(r[1200].timestamp.epoch_millis == 6200);
  CHECK(r[1200].timestamp_repaired);
}

TEST_CASE("repair is strictly monotone and never worsens the true order") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = workload_preset("golden");
    spec.seed = seed;
    spec.user_count = 15;
    spec.visits_per_user = 2;
    spec.arrival_window_ms = 5 * 60 * 1000;
    spec.think_time = {1500, 20'000};
    auto corpus = generate(spec);
    auto truncated = corpus.entries;
    std::vector<std::int64_t> truth;
    for (std::size_t i = 0; i < truncated.size(); ++i) {
      auto& e = truncated[i];
      e.timestamp.epoch_millis -= e.timestamp.epoch_millis % 1000;
      e.timestamp.granularity = Granularity::second;
    }
    auto ordered = fuse({truncated});
    for (const auto& e : ordered) truth.push_back(corpus.truth[static_cast<std::size_t>(e.file_order)].true_epoch_millis);
    auto repaired = repair_timestamps(ordered);
    std::vector<std::int64_t> before, after;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      before.push_back(ordered[i].timestamp.epoch_millis);
      after.push_back(repaired[i].timestamp.epoch_millis);
      CHECK(repaired[i].file_order == ordered[i].file_order);
      if (i) CHECK(after[i] > after[i - 1]);
    }
    CHECK(oracle::kendall_distance(truth, after) <= oracle::kendall_distance(truth, before));
  }
}

TEST_CASE("generalization examples") {
  GeneralizationRule rule("/api/<int>/system/info", "/api/{version}/system/info");
  CHECK(rule.capture_count() == 1);
  CHECK(generalize_path("/api/29/system/info", {rule}) == "/api/{version}/system/info");
  CHECK(generalize_path("/api/v1/system/info", {rule}) == "/api/v1/system/info");
  CHECK(generalize_path("/api/29/events/123", {}) == "/api/29/events/123");
  CHECK(generalize_path("/api/29/events/123", {}, true) == "/api/{id}/events/{id}");
  CHECK(generalize_ids("/api/events/0b6f5c1e-2a3d-4e5f-8a9b-0c1d2e3f4a5b/notes") == "/api/events/{id}/notes");
  CHECK(is_uuid("0B6F5C1E-2A3D-4E5F-8A9B-0C1D2E3F4A5B"));
  CHECK_FALSE(is_uuid("0b6f5c1e-2a3d-4e5f-8a9b"));
  GeneralizationRule first("/api/<seg>/events", "/api/{v}/events");
  GeneralizationRule second("/api/<int>/events", "/api/{n}/events");
  CHECK(generalize_path("/api/29/events", {first, second}) == "/api/{v}/events");

  CHECK_THROWS_AS(GeneralizationRule("/api/<int>/x", "/api/x"), ConfigError);
  CHECK_THROWS_AS(GeneralizationRule("/api/<float>/x", "/api/{v}/x"), ConfigError);
  CHECK_THROWS_AS(GeneralizationRule("/api/x", "/api/{v}/x"), ConfigError);
}

TEST_CASE("generalize sets generalized_path and keeps the original") {
  std::vector<LogEntry> v = {at(1, "s", 0, "/api/29/system/info"), at(2, "s", 1, "/x")};
  auto g = generalize(v, {GeneralizationRule("/api/<int>/system/info", "/api/{version}/system/info")});
  CHECK(g[0].generalized_path == "/api/{version}/system/info");
  CHECK(g[0].request.path == "/api/29/system/info");
  CHECK(g[1].generalized_path == "/x");
}

TEST_CASE("generalization is idempotent") {
  std::mt19937_64 rng(8);
  static const char* lits[] = {"api", "29", "events", "me", "system", "x"};
  static const char* caps[] = {"<int>", "<seg>", "<uuid>"};
  auto random_path = [&] {
    std::string p;
    const auto n = 1 + rng() % 4;
    for (std::size_t i = 0; i < n; ++i) {
      p += "/";
      const auto pick = rng() % 8;
      if (pick < 6) p += lits[pick];
      else if (pick == 6) p += std::to_string(rng() % 1000);
      else p += "0b6f5c1e-2a3d-4e5f-8a9b-0c1d2e3f4a5b";
    }
    return p;
  };
  for (int round = 0; round < 20; ++round) {
    std::vector<GeneralizationRule> rules;
    for (int r = 0; r < 4; ++r) {
      std::string match, tmpl;
      const auto n = 1 + rng() % 4;
      for (std::size_t i = 0; i < n; ++i) {
        if (rng() % 3 == 0) {
          match += std::string("/") + caps[rng() % 3];
          tmpl += "/{c" + std::to_string(i) + "}";
        } else {
          const std::string lit = lits[rng() % 6];
          match += "/" + lit;
          tmpl += "/" + lit;
        }
      }
      rules.emplace_back(match, tmpl);
    }
    const bool fallback = rng() % 2;
    for (int i = 0; i < 25; ++i) {
      auto once = generalize_path(random_path(), rules, fallback);
      CHECK(generalize_path(once, rules, fallback) == once);
    }
  }
}

}
