#include "wapilog/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "wapilog/errors.hpp"
#include "wapilog/jsonl.hpp"
#include "wapilog/parser.hpp"

namespace wapilog {

// ---------------------------------------------------------------------------
// Rendering

namespace {

bool has_space_or_control(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c <= ' ' || c == 0x7f; });
}

bool has_control(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return c == '\n' || c == '\r' || c == 0; });
}

bool is_method(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || c == '-' || c == '_';
  });
}

bool is_protocol(std::string_view t) {
  if (t.size() < 6 || t.substr(0, 5) != "HTTP/") return false;
  bool digit = false;
  for (char c : t.substr(5)) {
    if (c >= '0' && c <= '9') digit = true;
    else if (c != '.') return false;
  }
  return digit;
}

std::string request_text(const RequestLine& r, bool quoted) {
  if (!is_method(r.method)) throw RenderError("request method is not an upper-case token: " + r.method);
  if (r.path.empty() || r.path.front() != '/') throw RenderError("request path must start with '/'");
  if (has_space_or_control(r.path) || r.path.find('?') != std::string::npos) {
    throw RenderError("request path contains whitespace or '?': " + r.path);
  }
  if (has_space_or_control(r.protocol)) throw RenderError("protocol contains whitespace");
  if (!quoted && !is_protocol(r.protocol)) {
    throw RenderError("an unquoted request needs an HTTP/x.y protocol token");
  }
  std::string out = r.method + " " + r.path;
  for (std::size_t i = 0; i < r.query.size(); ++i) {
    out += i == 0 ? '?' : '&';
    out += percent_encode(r.query[i].first);
    out += '=';
    out += percent_encode(r.query[i].second);
  }
  if (!r.protocol.empty()) out += " " + r.protocol;
  return out;
}

void append_quoted(std::string& out, std::string_view v) {
  out += '"';
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
}

// Optional free text. Present values must survive "-" normalization.
void append_text(std::string& out, const std::optional<std::string>& v, bool quoted,
                 bool single_token, std::string_view name) {
  if (!v) {
    out += quoted ? "\"-\"" : "-";
    return;
  }
  if (v->empty() || *v == "-") throw RenderError(std::string(name) + " value '" + *v + "' reads back as absent");
  if (has_control(*v)) throw RenderError(std::string(name) + " contains a line break");
  if (quoted) {
    append_quoted(out, *v);
    return;
  }
  if (single_token && has_space_or_control(*v)) {
    throw RenderError(std::string(name) + " contains whitespace and the format does not quote it");
  }
  if (has_space_or_control(v->substr(0, 1)) || has_space_or_control(v->substr(v->size() - 1))) {
    throw RenderError(std::string(name) + " has surrounding whitespace");
  }
  out += *v;
}

void append_number(std::string& out, std::optional<std::int64_t> v, bool quoted) {
  std::string s = v ? std::to_string(*v) : "-";
  if (quoted) append_quoted(out, s);
  else out += s;
}

}  // namespace

std::string render(const LogEntry& e, const FormatString& format) {
  std::string out;
  out.reserve(256);
  for (const auto& d : format.directives) {
    switch (d.kind) {
      case FieldKind::literal: out += d.literal; break;
      case FieldKind::ident:
      case FieldKind::authuser: out += d.quoted ? "\"-\"" : "-"; break;
      case FieldKind::client_ip:
        append_text(out, e.client_ip, d.quoted, true, "client_ip");
        break;
      case FieldKind::timestamp: {
        const auto ms = e.timestamp.epoch_millis;
        if (ms < 0) throw RenderError("negative timestamp");
        const bool millis = d.granularity == Granularity::millisecond;
        if (!millis && ms % 1000 != 0) {
          throw RenderError("timestamp has milliseconds but the format logs whole seconds");
        }
        out += '[';
        out += format_clf_time(ms, millis);
        out += ']';
        break;
      }
      case FieldKind::request: {
        auto text = request_text(e.request, d.quoted);
        if (d.quoted) append_quoted(out, text);
        else out += text;
        break;
      }
      case FieldKind::status:
        if (e.status < 100 || e.status > 599) throw RenderError("status out of range");
        append_number(out, e.status, d.quoted);
        break;
      case FieldKind::size:
        if (e.object_size && *e.object_size < 0) throw RenderError("negative object size");
        append_number(out, e.object_size, d.quoted);
        break;
      case FieldKind::duration: {
        if (e.duration && *e.duration < 0) throw RenderError("negative duration");
        auto v = e.duration;
        if (v && d.unit == DurationUnit::microseconds) *v *= 1000;
        append_number(out, v, d.quoted);
        break;
      }
      case FieldKind::referer:
        append_text(out, e.referer, d.quoted, true, "referer");
        break;
      case FieldKind::user_agent:
        append_text(out, e.user_agent, d.quoted, false, "user_agent");
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random streams

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::mt19937_64 SplitRng::stream(std::string_view name, std::uint64_t index) const {
  std::uint64_t state = seed_ ^ fnv1a(name);
  state ^= splitmix64(state) + index;
  std::uint32_t words[4];
  for (auto& w : words) w = static_cast<std::uint32_t>(splitmix64(state) >> 32);
  std::seed_seq seq(std::begin(words), std::end(words));
  return std::mt19937_64(seq);
}

// ---------------------------------------------------------------------------
// Workload model

std::vector<AppSpec> default_catalog(std::size_t count) {
  if (count < 1 || count > 6) throw ConfigError("default catalog has 1 to 6 applications");
  const std::vector<EndpointShape> shared = {
      {"GET", "/api/29/me", {"fields"}},
      {"GET", "/api/29/system/info", {}},
      {"GET", "/api/29/userSettings", {}},
  };
  std::vector<AppSpec> apps = {
      {"dhis-web-tracker-capture",
       {{"GET", "/api/29/trackedEntityInstances/{id}", {"fields"}},
        {"GET", "/api/29/trackedEntityInstances", {"ou", "program", "pageSize"}},
        {"GET", "/api/29/enrollments/{id}", {}},
        {"POST", "/api/29/enrollments", {}},
        {"GET", "/api/29/programs/{id}/programStages", {"fields"}},
        {"GET", "/api/29/relationships", {"tei"}}}},
      {"dhis-web-event-capture",
       {{"GET", "/api/29/events", {"program", "orgUnit", "page"}},
        {"POST", "/api/29/events", {}},
        {"PUT", "/api/29/events/{uuid}", {}},
        {"GET", "/api/29/programs/{id}", {"fields"}},
        {"GET", "/api/29/optionSets/{id}", {}}}},
      {"dhis-web-event-reports",
       {{"GET", "/api/29/eventReports/{id}", {"fields"}},
        {"GET", "/api/29/analytics/events/query/{id}", {"dimension", "stage", "startDate"}},
        {"GET", "/api/29/analytics/events/aggregate/{id}", {"dimension"}},
        {"POST", "/api/29/eventReports", {}}}},
      {"HMIS-Dictionary",
       {{"GET", "/api/29/dataElements", {"fields", "paging"}},
        {"GET", "/api/29/indicators/{id}", {"fields"}},
        {"GET", "/api/29/dataSets/{id}/dataElements", {}},
        {"GET", "/api/29/categoryCombos", {"paging"}}}},
      {"dhis-web-dashboard",
       {{"GET", "/api/29/dashboards/{id}", {"fields"}},
        {"GET", "/api/29/charts/{id}/data", {"width", "height"}},
        {"GET", "/api/29/maps/{id}", {}},
        {"PUT", "/api/29/dashboards/{id}/items", {}}}},
      {"dhis-web-data-entry",
       {{"GET", "/api/29/dataValueSets", {"dataSet", "period", "orgUnit"}},
        {"POST", "/api/29/dataValues", {"de", "pe", "ou", "value"}},
        {"GET", "/api/29/completeDataSetRegistrations", {"ds", "pe"}},
        {"GET", "/api/29/dataSets/{id}/form", {}}}},
  };
  apps.resize(count);
  for (auto& a : apps) a.endpoints.insert(a.endpoints.end(), shared.begin(), shared.end());
  return apps;
}

void WorkloadSpec::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0,1]");
  };
  fraction(proxy_fraction, "proxy_fraction");
  fraction(concurrent_open_rate, "concurrent_open_rate");
  fraction(app_id_coverage, "app_id_coverage");
  fraction(corruption_rate, "corruption_rate");
  fraction(orphan_rate, "orphan_rate");
  if (user_count < 1) throw ConfigError("user_count must be at least 1");
  if (visits_per_user < 1) throw ConfigError("visits_per_user must be at least 1");
  if (session_length.min < 1 || session_length.max < session_length.min) {
    throw ConfigError("session_length needs 1 <= min <= max");
  }
  if (!(session_length.shape >= 0.0)) throw ConfigError("session_length shape must be non-negative");
  if (think_time.mean_ms <= 0 || think_time.max_ms <= 0) {
    throw ConfigError("think_time mean and max must be positive");
  }
  if (arrival_window_ms < 0 || visit_gap_mean_ms <= 0 || latency_mean_ms <= 0) {
    throw ConfigError("arrival window must be non-negative, visit gap and latency positive");
  }
  if (start_epoch_ms < 0) throw ConfigError("start_epoch_ms must be non-negative");
  if (app_catalog.empty()) throw ConfigError("app_catalog is empty");
  for (const auto& a : app_catalog) {
    if (a.name.empty() || a.name.find_first_of("/?# ") != std::string::npos) {
      throw ConfigError("application name must be a single path segment: '" + a.name + "'");
    }
    if (a.endpoints.empty()) throw ConfigError("application " + a.name + " has no endpoints");
    for (const auto& ep : a.endpoints) {
      if (ep.path.empty() || ep.path.front() != '/' || !is_method(ep.method)) {
        throw ConfigError("bad endpoint shape in " + a.name + ": " + ep.method + " " + ep.path);
      }
    }
  }
  if (source_id.empty()) throw ConfigError("source_id must not be empty");
}

WorkloadSpec workload_preset(std::string_view name) {
  WorkloadSpec s;
  if (name == "msf") {
    // Consumers behind a proxy that hides their address; coarse clock.
    s.client_ip_logged = false;
    s.proxy_fraction = 1.0;
    s.timestamp_granularity = Granularity::second;
    s.referer_logged = true;
  } else if (name == "widp") {
    s.client_ip_logged = true;
    s.proxy_fraction = 0.1;
    s.timestamp_granularity = Granularity::millisecond;
    s.referer_logged = false;
  } else if (name == "golden") {
    s.client_ip_logged = true;
    s.proxy_fraction = 0.0;
    s.timestamp_granularity = Granularity::millisecond;
    s.referer_logged = true;
    s.app_id_coverage = 1.0;
  } else {
    throw ConfigError("unknown workload preset: " + std::string(name) +
                      " (expected msf, widp or golden)");
  }
  s.source_id = std::string(name);
  return s;
}

std::string workload_format(const WorkloadSpec& spec) {
  auto q = [&](std::string_view d) {
    return spec.quoted_fields ? "\"" + std::string(d) + "\"" : std::string(d);
  };
  std::string f;
  if (spec.client_ip_logged) f += "%h ";
  f += "%l %u ";
  f += spec.timestamp_granularity == Granularity::second ? "%t " : "%{ms}t ";
  f += q("%r") + " %>s %b";
  if (spec.duration_logged) f += " %{ms}T";
  if (spec.referer_logged) f += " " + q("%{Referer}i");
  if (spec.user_agent_logged) f += " " + q("%{User-Agent}i");
  return f;
}

namespace {

constexpr std::string_view kBaseUrl = "https://dhis.example.org";
constexpr std::string_view kProxyIp = "203.0.113.7";

const std::vector<std::string>& user_agents() {
  static const std::vector<std::string> pool = {
      "Mozilla/5.0 (Windows NT 6.1; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
      "Chrome/75.0.3770.100 Safari/537.36",
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:67.0) Gecko/20100101 Firefox/67.0",
      "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_14_5) AppleWebKit/605.1.15 (KHTML, like Gecko) "
      "Version/12.1.1 Safari/605.1.15",
      "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:66.0) Gecko/20100101 Firefox/66.0",
      "Mozilla/5.0 (Linux; Android 9; SM-A505F) AppleWebKit/537.36 (KHTML, like Gecko) "
      "Chrome/74.0.3729.157 Mobile Safari/537.36",
      "Mozilla/5.0 (compatible; MSIE 10.0; Windows NT 6.2; Trident/6.0)",
      "DHIS2 Capture/1.2.1 (Android 8.1.0; Tecno, W5), okhttp/3.12.0",
  };
  return pool;
}

std::string user_ip(int u) {
  const int n = u + 1;
  return "10." + std::to_string((n >> 16) & 255) + "." + std::to_string((n >> 8) & 255) + "." +
         std::to_string(n & 255);
}

int draw_length(const LengthDistribution& d, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double lo = d.min;
  const double hi = d.max + 1.0;
  double x;
  if (std::abs(d.shape - 1.0) < 1e-12) {
    x = lo * std::pow(hi / lo, u);
  } else {
    const double a = 1.0 - d.shape;
    x = std::pow(std::pow(lo, a) + u * (std::pow(hi, a) - std::pow(lo, a)), 1.0 / a);
  }
  return std::clamp(static_cast<int>(std::floor(x)), d.min, d.max);
}

std::int64_t draw_exp(double mean, std::int64_t cap, std::mt19937_64& rng) {
  const double v = std::exponential_distribution<double>(1.0 / mean)(rng);
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::llround(v)), 1, cap);
}

std::string random_uuid(std::mt19937_64& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < 32; ++i) {
    if (i == 8 || i == 12 || i == 16 || i == 20) s += '-';
    s += kHex[rng() & 15];
  }
  return s;
}

std::string fill_path(const std::string& tmpl, std::mt19937_64& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.compare(i, 4, "{id}") == 0) {
      out += std::to_string(1000 + rng() % 90000);
      i += 4;
    } else if (tmpl.compare(i, 6, "{uuid}") == 0) {
      out += random_uuid(rng);
      i += 6;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::string query_value(const std::string& key, std::mt19937_64& rng) {
  if (key == "fields") return rng() % 2 ? "id,name,displayName" : "*";
  if (key == "paging") return rng() % 2 ? "true" : "false";
  if (key == "period" || key == "pe") return "2019" + std::to_string(1 + rng() % 12);
  return std::to_string(rng() % 100000);
}

struct Event {
  std::int64_t ts = 0;
  std::int64_t latency = 0;
  int user = 0;
  std::uint64_t seq = 0;
  LogEntry entry;
  TruthRecord truth;
};

struct Visit {
  std::string app;
  std::string session_id;
  int remaining = 0;
};

class UserSimulator {
 public:
  UserSimulator(const WorkloadSpec& spec, int user, std::mt19937_64 rng)
      : spec_(spec), user_(user), rng_(std::move(rng)) {
    const int proxies = static_cast<int>(std::llround(spec.proxy_fraction * spec.user_count));
    proxied_ = user < proxies;
    ip_ = proxied_ ? std::string(kProxyIp) : user_ip(user);
    ua_ = user_agents()[rng_() % user_agents().size()];
    name_ = "user" + std::to_string(user + 1);
  }

  void run(std::vector<Event>& out) {
    std::int64_t t = spec_.start_epoch_ms;
    if (spec_.arrival_window_ms > 0) {
      t += static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(spec_.arrival_window_ms));
    }
    std::string last_url = std::string(kBaseUrl) + "/";
    for (int v = 0; v < spec_.visits_per_user; ++v) {
      Visit a = new_visit();
      emit_open(out, t, a, last_url);
      const int split = static_cast<int>(rng_() % static_cast<std::uint64_t>(a.remaining + 1));
      const bool concurrent =
          std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < spec_.concurrent_open_rate;
      for (int i = 0; i < (concurrent ? split : a.remaining); ++i) {
        t += think();
        emit_request(out, t, a);
      }
      last_url = app_url(a.app);
      if (concurrent) {
        a.remaining -= split;
        Visit b = new_visit(&a.app);
        t += think();
        emit_open(out, t, b, app_url(a.app));
        // Two tabs: requests of both visits interleave.
        while (a.remaining + b.remaining > 0) {
          const auto pick = rng_() % static_cast<std::uint64_t>(a.remaining + b.remaining);
          Visit& cur = pick < static_cast<std::uint64_t>(a.remaining) ? a : b;
          --cur.remaining;
          t += think();
          emit_request(out, t, cur);
        }
        last_url = app_url(b.app);
      }
      t += draw_exp(static_cast<double>(spec_.visit_gap_mean_ms), INT64_MAX / 4, rng_);
    }
  }

 private:
  static std::string app_url(const std::string& app) {
    return std::string(kBaseUrl) + "/" + app + "/index.action";
  }

  Visit new_visit(const std::string* avoid = nullptr) {
    const auto& cat = spec_.app_catalog;
    std::size_t idx = rng_() % cat.size();
    if (avoid && cat.size() > 1 && cat[idx].name == *avoid) {
      idx = (idx + 1 + rng_() % (cat.size() - 1)) % cat.size();
    }
    Visit v;
    v.app = cat[idx].name;
    v.session_id = name_ + "-v" + std::to_string(++visits_);
    v.remaining = draw_length(spec_.session_length, rng_);
    app_index_[v.app] = idx;
    return v;
  }

  std::int64_t think() {
    return draw_exp(static_cast<double>(spec_.think_time.mean_ms), spec_.think_time.max_ms, rng_);
  }

  Event base(std::int64_t t, const Visit& v) {
    Event ev;
    ev.ts = t;
    ev.latency = draw_exp(static_cast<double>(spec_.latency_mean_ms), 30'000, rng_);
    ev.user = user_;
    ev.seq = seq_++;
    ev.entry.client_ip = ip_;
    ev.entry.user_agent = ua_;
    ev.entry.request.protocol = "HTTP/1.1";
    const auto roll = rng_() % 100;
    ev.entry.status = roll < 95 ? 200 : roll < 98 ? 304 : 404;
    ev.entry.object_size = ev.entry.status == 304 ? 0 : static_cast<std::int64_t>(200 + rng_() % 40000);
    ev.entry.duration = ev.latency;
    ev.truth.session_id = v.session_id;
    ev.truth.app = v.app;
    ev.truth.user = name_;
    return ev;
  }

  void emit_open(std::vector<Event>& out, std::int64_t t, const Visit& v, const std::string& from) {
    Event ev = base(t, v);
    ev.entry.request.method = "GET";
    ev.entry.request.path = "/" + v.app + "/index.action";
    ev.entry.referer = from;
    out.push_back(std::move(ev));
  }

  void emit_request(std::vector<Event>& out, std::int64_t t, const Visit& v) {
    Event ev = base(t, v);
    const auto& eps = spec_.app_catalog[app_index_.at(v.app)].endpoints;
    const auto& ep = eps[rng_() % eps.size()];
    ev.entry.request.method = ep.method;
    ev.entry.request.path = fill_path(ep.path, rng_);
    for (const auto& k : ep.query_keys) ev.entry.request.query.emplace_back(k, query_value(k, rng_));
    if (ep.method != "GET" && ev.entry.status == 304) ev.entry.status = 200;
    ev.entry.referer = app_url(v.app);
    out.push_back(std::move(ev));
  }

  const WorkloadSpec& spec_;
  int user_;
  std::mt19937_64 rng_;
  bool proxied_ = false;
  std::string ip_;
  std::string ua_;
  std::string name_;
  int visits_ = 0;
  std::uint64_t seq_ = 0;
  std::unordered_map<std::string, std::size_t> app_index_;
};

std::string corrupt_line(const std::string& line, std::mt19937_64& rng) {
  const auto open = line.find('[');
  const auto close = line.find(']');
  if (rng() % 2 == 0) {
    // Everything after the timestamp is lost.
    return line.substr(0, close + 1);
  }
  // Month that does not exist.
  std::string bad = line;
  bad.replace(open + 4, 3, "Foo");
  return bad;
}

}  // namespace

GroundTruthCorpus generate(const WorkloadSpec& spec) {
  spec.validate();
  const SplitRng split(spec.seed);
  std::vector<Event> events;
  for (int u = 0; u < spec.user_count; ++u) {
    UserSimulator(spec, u, split.stream("user", static_cast<std::uint64_t>(u))).run(events);
  }

  if (spec.orphan_rate > 0 && !events.empty()) {
    auto rng = split.stream("orphans");
    std::int64_t lo = INT64_MAX, hi = 0;
    for (const auto& e : events) {
      lo = std::min(lo, e.ts);
      hi = std::max(hi, e.ts);
    }
    const auto n = static_cast<std::int64_t>(std::llround(spec.orphan_rate * static_cast<double>(events.size())));
    for (std::int64_t i = 0; i < n; ++i) {
      Event ev;
      ev.ts = lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
      ev.latency = draw_exp(static_cast<double>(spec.latency_mean_ms), 30'000, rng);
      ev.user = spec.user_count;
      ev.seq = static_cast<std::uint64_t>(i);
      ev.entry.client_ip = "198.51.100.20";
      ev.entry.user_agent = "python-requests/2.22.0";
      ev.entry.request = {"GET", "/api/29/system/info", {}, "HTTP/1.1"};
      ev.entry.object_size = 891;
      ev.entry.duration = ev.latency;
      ev.truth.user = "script";
      events.push_back(std::move(ev));
    }
  }

  // The server writes a line when the response completes.
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    const auto ca = a.ts + a.latency, cb = b.ts + b.latency;
    if (ca != cb) return ca < cb;
    if (a.user != b.user) return a.user < b.user;
    return a.seq < b.seq;
  });

  GroundTruthCorpus corpus;
  const auto format = FormatString::parse(workload_format(spec));
  corpus.spec = parse_format_spec(format);
  auto id_rng = split.stream("app-ids");
  auto corrupt_rng = split.stream("corruption");
  std::bernoulli_distribution has_id(spec.app_id_coverage);
  std::bernoulli_distribution corrupted(spec.corruption_rate);
  const std::int64_t proxies = std::llround(spec.proxy_fraction * spec.user_count);
  corpus.lines.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto& ev = events[i];
    auto& e = ev.entry;
    if (has_id(id_rng)) {
      const std::string app = ev.truth.app ? *ev.truth.app : "script";
      e.request.query.emplace_back("key", "APP-" + app + "-prod");
    }
    e.source_id = spec.source_id;
    e.file_order = static_cast<std::int64_t>(i);
    if (spec.timestamp_granularity == Granularity::second) {
      e.timestamp = {ev.ts - ev.ts % 1000, Granularity::second};
    } else {
      e.timestamp = {ev.ts, Granularity::millisecond};
    }
    if (!spec.client_ip_logged) e.client_ip.reset();
    if (!spec.referer_logged) e.referer.reset();
    if (!spec.user_agent_logged) e.user_agent.reset();
    if (!spec.duration_logged) e.duration.reset();

    std::string line = render(e, format);
    if (corrupted(corrupt_rng)) {
      corpus.lines.push_back(corrupt_line(line, corrupt_rng));
      corpus.corrupted_lines.push_back(static_cast<std::int64_t>(i) + 1);
      continue;
    }
    corpus.lines.push_back(std::move(line));
    if (!spec.quoted_fields) {
      // Mirror what bare-field recovery reports.
      auto tokens = [](const std::string& s) { return std::count(s.begin(), s.end(), ' ') + 1; };
      const auto& r = e.request;
      std::string req = r.method + " " + r.path + " " + r.protocol;
      e.split_recovered = tokens(req) > 3 || (e.user_agent && tokens(*e.user_agent) > 1);
    }
    ev.truth.source_id = spec.source_id;
    ev.truth.file_order = e.file_order;
    ev.truth.true_epoch_millis = ev.ts;
    if (std::any_of(e.request.query.begin(), e.request.query.end(),
                    [](const QueryParam& q) { return q.first == "key" && !q.second.empty(); })) {
      ++corpus.entries_with_app_id;
    }
    if (ev.user < proxies) ++corpus.proxy_entries;
    corpus.truth.push_back(std::move(ev.truth));
    corpus.entries.push_back(std::move(e));
  }
  return corpus;
}

void write_truth_jsonl(std::ostream& out, const std::vector<TruthRecord>& truth) {
  for (const auto& t : truth) {
    json j;
    j["source_id"] = t.source_id;
    j["file_order"] = t.file_order;
    j["session_id"] = t.session_id ? json(*t.session_id) : json(nullptr);
    j["app"] = t.app ? json(*t.app) : json(nullptr);
    j["user"] = t.user;
    write_jsonl(out, j);
  }
}

std::vector<TruthRecord> read_truth_jsonl(std::istream& in, const std::string& name) {
  std::vector<TruthRecord> out;
  read_jsonl(in, name, [&](const json& j) {
    TruthRecord t;
    t.source_id = j.at("source_id").get<std::string>();
    t.file_order = j.at("file_order").get<std::int64_t>();
    if (j.contains("session_id") && !j["session_id"].is_null()) t.session_id = j["session_id"].get<std::string>();
    if (j.contains("app") && !j["app"].is_null()) t.app = j["app"].get<std::string>();
    if (j.contains("user")) t.user = j["user"].get<std::string>();
    out.push_back(std::move(t));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

double pairs(std::int64_t n) { return static_cast<double>(n) * static_cast<double>(n - 1) / 2.0; }

}  // namespace

AccuracyScore score(const SessionizationResult& result, const std::vector<TruthRecord>& truth) {
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!index.emplace(std::make_pair(truth[i].source_id, truth[i].file_order), i).second) {
      throw ScoringError("truth lists " + truth[i].source_id + ":" +
                         std::to_string(truth[i].file_order) + " twice");
    }
  }
  // Predicted cluster per truth record; -1 marks a singleton (discarded).
  std::vector<std::int64_t> predicted(truth.size(), -2);
  auto place = [&](const LogEntry& e, std::int64_t cluster) {
    auto it = index.find({e.source_id, e.file_order});
    if (it == index.end()) {
      throw ScoringError("entry " + e.source_id + ":" + std::to_string(e.file_order) + " is not in the truth");
    }
    if (predicted[it->second] != -2) {
      throw ScoringError("entry " + e.source_id + ":" + std::to_string(e.file_order) + " appears twice");
    }
    predicted[it->second] = cluster;
  };
  std::int64_t seen = 0;
  for (std::size_t s = 0; s < result.sessions.size(); ++s) {
    for (const auto& se : result.sessions[s].entries) {
      place(se.entry, static_cast<std::int64_t>(s));
      ++seen;
    }
  }
  for (const auto& d : result.discarded) {
    place(d.entry, -1);
    ++seen;
  }
  if (seen != static_cast<std::int64_t>(truth.size())) {
    throw ScoringError("sessionization covers " + std::to_string(seen) + " entries, truth has " +
                       std::to_string(truth.size()));
  }

  std::map<std::string, std::int64_t> true_size;
  std::map<std::int64_t, std::int64_t> pred_size;
  std::map<std::pair<std::string, std::int64_t>, std::int64_t> cell;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto p = predicted[i];
    if (p >= 0) ++pred_size[p];
    if (!truth[i].session_id) continue;
    ++true_size[*truth[i].session_id];
    if (p >= 0) ++cell[{*truth[i].session_id, p}];
  }

  double true_pairs = 0, pred_pairs = 0, both = 0;
  for (const auto& [k, n] : true_size) true_pairs += pairs(n);
  for (const auto& [k, n] : pred_size) pred_pairs += pairs(n);
  for (const auto& [k, n] : cell) both += pairs(n);

  AccuracyScore s;
  s.entries = static_cast<std::int64_t>(truth.size());
  s.discarded = static_cast<std::int64_t>(result.discarded.size());
  s.pairwise_precision = pred_pairs > 0 ? both / pred_pairs : (true_pairs > 0 ? 0.0 : 1.0);
  s.pairwise_recall = true_pairs > 0 ? both / true_pairs : (pred_pairs > 0 ? 0.0 : 1.0);
  const double ps = s.pairwise_precision + s.pairwise_recall;
  s.pairwise_f1 = ps > 0 ? 2 * s.pairwise_precision * s.pairwise_recall / ps : 0.0;

  // Each true session is matched to the reconstructed session holding most
  // of its entries (lowest index on ties).
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> best;  // session -> (count, cluster)
  for (const auto& [k, n] : cell) {
    auto [it, fresh] = best.try_emplace(k.first, n, k.second);
    if (!fresh && n > it->second.first) it->second = {n, k.second};
  }
  std::int64_t placed = 0;
  for (const auto& [k, v] : best) placed += v.first;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i].session_id && predicted[i] == -1) ++placed;  // orphan correctly left out
  }
  s.entry_assignment_accuracy =
      truth.empty() ? 1.0 : static_cast<double>(placed) / static_cast<double>(truth.size());

  std::int64_t discarded_with_session = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == -1 && truth[i].session_id) ++discarded_with_session;
  }
  s.discarded_true_positive_rate =
      s.discarded > 0 ? static_cast<double>(discarded_with_session) / static_cast<double>(s.discarded) : 0.0;
  return s;
}

std::string score_to_json(const AccuracyScore& s) {
  json j;
  j["pairwise_precision"] = s.pairwise_precision;
  j["pairwise_recall"] = s.pairwise_recall;
  j["pairwise_f1"] = s.pairwise_f1;
  j["entry_assignment_accuracy"] = s.entry_assignment_accuracy;
  j["discarded_true_positive_rate"] = s.discarded_true_positive_rate;
  j["entries"] = s.entries;
  j["discarded"] = s.discarded;
  return j.dump(2) + "\n";
}

}  // namespace wapilog
