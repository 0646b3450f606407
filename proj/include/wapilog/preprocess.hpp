#pragma once

// Fusion, cleaning, timestamp repair and request generalization.

#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wapilog/log_model.hpp"

namespace wapilog {

// ---------------------------------------------------------------------------
// Fusion

/// Merges several sources into one list ordered by compare_entries. Sources
/// already in that order are k-way merged; otherwise the union is sorted.
std::vector<LogEntry> fuse(std::vector<std::vector<LogEntry>> corpora);

/// Streaming k-way merge. Each source is a pull function returning nullopt
/// at end of stream. A per-source reorder window absorbs local disorder
/// (entries written in completion order rather than arrival order); an
/// entry displaced further than the window is emitted late and counted.
class StreamFuser {
 public:
  using Source = std::function<std::optional<LogEntry>()>;

  explicit StreamFuser(std::vector<Source> sources, std::size_t window = 4096);

  std::optional<LogEntry> next();
  std::size_t late_entries() const { return late_; }

 private:
  struct Lane {
    Source pull;
    std::vector<LogEntry> heap;  // min-heap by compare_entries
    bool exhausted = false;
  };

  void refill(Lane& lane);
  std::optional<LogEntry> pop(Lane& lane);

  std::vector<Lane> lanes_;
  std::size_t window_;
  std::size_t late_ = 0;
  std::optional<LogEntry> last_;
};

// ---------------------------------------------------------------------------
// Cleaning

struct CleaningRules {
  std::set<int> drop_status;
  std::vector<std::string> drop_path_patterns;  // shell globs, '*' spans '/'
  std::set<std::string> drop_methods;
  std::optional<std::vector<std::string>> keep_only_path_prefixes;

  /// Throws ConfigError for an empty or unbalanced glob.
  void validate() const;
};

bool glob_match(std::string_view pattern, std::string_view text);

/// True when any drop rule matches or the path falls outside
/// keep_only_path_prefixes (when set).
bool should_drop(const LogEntry& e, const CleaningRules& rules);

struct CleanResult {
  std::vector<LogEntry> kept;
  std::vector<LogEntry> dropped;
};

CleanResult clean(const std::vector<LogEntry>& entries, const CleaningRules& rules);

// ---------------------------------------------------------------------------
// Timestamp repair

/// Single pass over an ordered stream: an entry whose timestamp does not
/// exceed its predecessor's (post-repair) is moved to predecessor + 1 ms
/// and flagged. Collisions may spill into the next second.
class TimestampRepairer {
 public:
  void apply(LogEntry& e);
  std::size_t repaired() const { return repaired_; }

 private:
  std::optional<std::int64_t> last_;
  std::size_t repaired_ = 0;
};

std::vector<LogEntry> repair_timestamps(std::vector<LogEntry> entries);

// ---------------------------------------------------------------------------
// Generalization

/// Segment-wise path pattern. Segments are literals or one of the capture
/// tokens <int> (digits), <uuid>, <seg> (any non-empty segment). The
/// template is emitted verbatim and must carry one {placeholder} per capture.
class GeneralizationRule {
 public:
  /// Throws ConfigError for an unknown capture token or a placeholder/capture
  /// count mismatch.
  GeneralizationRule(std::string match_pattern, std::string path_template);

  const std::string& match_pattern() const { return match_; }
  const std::string& path_template() const { return template_; }
  std::size_t capture_count() const { return captures_; }

  bool matches(std::string_view path) const;

 private:
  enum class SegKind { literal, integer, uuid, any };
  struct Segment {
    SegKind kind;
    std::string text;
  };
  std::string match_;
  std::string template_;
  std::vector<Segment> segments_;
  std::size_t captures_ = 0;
};

bool is_uuid(std::string_view s);

/// Replaces all-digit and UUID-shaped segments with {id}.
std::string generalize_ids(std::string_view path);

/// First matching rule wins. Without a match the path is returned as is,
/// or passed through generalize_ids when `id_fallback` is set.
std::string generalize_path(std::string_view path, const std::vector<GeneralizationRule>& rules,
                            bool id_fallback = false);

std::vector<LogEntry> generalize(std::vector<LogEntry> entries,
                                 const std::vector<GeneralizationRule>& rules,
                                 bool id_fallback = false);

}  // namespace wapilog
