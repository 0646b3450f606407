#include "wapilog/preprocess.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <queue>

#include "wapilog/errors.hpp"

namespace wapilog {

namespace {

// Heap comparator: the smallest entry sits on top.
bool heap_after(const LogEntry& a, const LogEntry& b) { return entry_before(b, a); }

}  // namespace

// ---------------------------------------------------------------------------
// Fusion

std::vector<LogEntry> fuse(std::vector<std::vector<LogEntry>> corpora) {
  if (corpora.size() == 1) {
    auto& only = corpora.front();
    if (!std::is_sorted(only.begin(), only.end(), entry_before)) {
      std::sort(only.begin(), only.end(), entry_before);
    }
    return std::move(only);
  }
  std::size_t total = 0;
  bool all_sorted = true;
  for (const auto& c : corpora) {
    total += c.size();
    all_sorted = all_sorted && std::is_sorted(c.begin(), c.end(), entry_before);
  }
  std::vector<LogEntry> out;
  out.reserve(total);
  if (!all_sorted) {
    for (auto& c : corpora) std::move(c.begin(), c.end(), std::back_inserter(out));
    std::sort(out.begin(), out.end(), entry_before);
    return out;
  }
  using Head = std::pair<std::size_t, std::size_t>;  // corpus, index
  auto later = [&](const Head& a, const Head& b) {
    return entry_before(corpora[b.first][b.second], corpora[a.first][a.second]);
  };
  std::priority_queue<Head, std::vector<Head>, decltype(later)> heads(later);
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    if (!corpora[i].empty()) heads.emplace(i, 0);
  }
  while (!heads.empty()) {
    auto [c, i] = heads.top();
    heads.pop();
    out.push_back(std::move(corpora[c][i]));
    if (i + 1 < corpora[c].size()) heads.emplace(c, i + 1);
  }
  return out;
}

StreamFuser::StreamFuser(std::vector<Source> sources, std::size_t window)
    : window_(std::max<std::size_t>(window, 1)) {
  lanes_.reserve(sources.size());
  for (auto& s : sources) lanes_.push_back(Lane{std::move(s), {}, false});
  for (auto& lane : lanes_) refill(lane);
}

void StreamFuser::refill(Lane& lane) {
  while (!lane.exhausted && lane.heap.size() < window_) {
    auto e = lane.pull();
    if (!e) {
      lane.exhausted = true;
      break;
    }
    lane.heap.push_back(std::move(*e));
    std::push_heap(lane.heap.begin(), lane.heap.end(), heap_after);
  }
}

std::optional<LogEntry> StreamFuser::pop(Lane& lane) {
  std::pop_heap(lane.heap.begin(), lane.heap.end(), heap_after);
  LogEntry e = std::move(lane.heap.back());
  lane.heap.pop_back();
  refill(lane);
  return e;
}

std::optional<LogEntry> StreamFuser::next() {
  Lane* best = nullptr;
  for (auto& lane : lanes_) {
    if (lane.heap.empty()) continue;
    if (!best || entry_before(lane.heap.front(), best->heap.front())) best = &lane;
  }
  if (!best) return std::nullopt;
  auto e = pop(*best);
  if (last_ && entry_before(*e, *last_)) ++late_;
  last_ = *e;
  return e;
}

// ---------------------------------------------------------------------------
// Cleaning

bool glob_match(std::string_view pattern, std::string_view text) {
  return fnmatch(std::string(pattern).c_str(), std::string(text).c_str(), 0) == 0;
}

void CleaningRules::validate() const {
  for (const auto& p : drop_path_patterns) {
    if (p.empty()) throw ConfigError("empty drop_path_patterns entry");
    int depth = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] == '\\') {
        ++i;
      } else if (p[i] == '[') {
        if (depth) throw ConfigError("nested '[' in pattern: " + p);
        depth = 1;
      } else if (p[i] == ']' && depth) {
        depth = 0;
      }
    }
    if (depth) throw ConfigError("unterminated '[' in pattern: " + p);
  }
  if (keep_only_path_prefixes) {
    for (const auto& prefix : *keep_only_path_prefixes) {
      if (prefix.empty()) throw ConfigError("empty keep_only_path_prefixes entry");
    }
  }
}

bool should_drop(const LogEntry& e, const CleaningRules& rules) {
  if (rules.drop_status.count(e.status)) return true;
  if (rules.drop_methods.count(e.request.method)) return true;
  for (const auto& p : rules.drop_path_patterns) {
    if (glob_match(p, e.request.path)) return true;
  }
  if (rules.keep_only_path_prefixes) {
    const auto& prefixes = *rules.keep_only_path_prefixes;
    bool inside = std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) {
      return e.request.path.compare(0, p.size(), p) == 0;
    });
    if (!inside) return true;
  }
  return false;
}

CleanResult clean(const std::vector<LogEntry>& entries, const CleaningRules& rules) {
  CleanResult out;
  for (const auto& e : entries) {
    (should_drop(e, rules) ? out.dropped : out.kept).push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timestamp repair

void TimestampRepairer::apply(LogEntry& e) {
  if (last_ && e.timestamp.epoch_millis <= *last_) {
    e.timestamp.epoch_millis = *last_ + 1;
    e.timestamp_repaired = true;
    ++repaired_;
  }
  last_ = e.timestamp.epoch_millis;
}

std::vector<LogEntry> repair_timestamps(std::vector<LogEntry> entries) {
  TimestampRepairer r;
  for (auto& e : entries) r.apply(e);
  return entries;
}

// ---------------------------------------------------------------------------
// Generalization

namespace {

std::vector<std::string_view> split_segments(std::string_view path) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t slash = path.find('/', start);
    if (slash == std::string_view::npos) slash = path.size();
    out.push_back(path.substr(start, slash - start));
    start = slash + 1;
  }
  return out;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::size_t count_placeholders(std::string_view tpl) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] != '{') continue;
    std::size_t close = tpl.find('}', i);
    if (close == std::string_view::npos) throw ConfigError("unterminated placeholder in " + std::string(tpl));
    if (close == i + 1) throw ConfigError("empty placeholder in " + std::string(tpl));
    ++n;
    i = close;
  }
  return n;
}

}  // namespace

bool is_uuid(std::string_view s) {
  if (s.size() != 36) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (i == 8 || i == 13 || i == 18 || i == 23) {
      if (c != '-') return false;
    } else if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F'))) {
      return false;
    }
  }
  return true;
}

GeneralizationRule::GeneralizationRule(std::string match_pattern, std::string path_template)
    : match_(std::move(match_pattern)), template_(std::move(path_template)) {
  if (match_.empty() || match_.front() != '/') {
    throw ConfigError("generalization pattern must start with '/': " + match_);
  }
  for (auto seg : split_segments(match_)) {
    if (seg.size() >= 2 && seg.front() == '<' && seg.back() == '>') {
      auto token = seg.substr(1, seg.size() - 2);
      SegKind kind;
      if (token == "int") kind = SegKind::integer;
      else if (token == "uuid") kind = SegKind::uuid;
      else if (token == "seg") kind = SegKind::any;
      else throw ConfigError("unknown capture <" + std::string(token) + "> in " + match_);
      segments_.push_back({kind, {}});
      ++captures_;
    } else {
      segments_.push_back({SegKind::literal, std::string(seg)});
    }
  }
  std::size_t placeholders = count_placeholders(template_);
  if (placeholders != captures_) {
    throw ConfigError("pattern " + match_ + " has " + std::to_string(captures_) +
                      " captures but template " + template_ + " has " +
                      std::to_string(placeholders) + " placeholders");
  }
}

bool GeneralizationRule::matches(std::string_view path) const {
  auto segs = split_segments(path);
  if (segs.size() != segments_.size()) return false;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segments_[i];
    switch (s.kind) {
      case SegKind::literal:
        if (segs[i] != s.text) return false;
        break;
      case SegKind::integer:
        if (!all_digits(segs[i])) return false;
        break;
      case SegKind::uuid:
        if (!is_uuid(segs[i])) return false;
        break;
      case SegKind::any:
        if (segs[i].empty()) return false;
        break;
    }
  }
  return true;
}

std::string generalize_ids(std::string_view path) {
  std::string out;
  out.reserve(path.size());
  bool first = true;
  for (auto seg : split_segments(path)) {
    if (!first) out.push_back('/');
    first = false;
    if (all_digits(seg) || is_uuid(seg)) out += "{id}";
    else out += seg;
  }
  return out;
}

std::string generalize_path(std::string_view path, const std::vector<GeneralizationRule>& rules,
                            bool id_fallback) {
  for (const auto& r : rules) {
    if (r.matches(path)) return r.path_template();
  }
  return id_fallback ? generalize_ids(path) : std::string(path);
}

std::vector<LogEntry> generalize(std::vector<LogEntry> entries,
                                 const std::vector<GeneralizationRule>& rules, bool id_fallback) {
  for (auto& e : entries) e.generalized_path = generalize_path(e.request.path, rules, id_fallback);
  return entries;
}

}  // namespace wapilog
