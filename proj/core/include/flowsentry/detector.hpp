#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowsentry/flag_interval.hpp"
#include "flowsentry/ingest.hpp"
#include "flowsentry/levelset.hpp"

namespace flowsentry::detector {

using levelset::ExitSide;

enum class Mode { duration_threshold, severity_threshold };

struct DetectorConfig {
  Mode mode = Mode::severity_threshold;
  /// Informational in duration mode: the percentile the threshold came from.
  double duration_percentile = 0.0;
  /// Minimum excursion length, in minutes, for a duration-mode flag.
  double duration_threshold_min = 0.0;
  double severity_threshold = 0.0;
  /// Missing minutes between valid samples that close an open excursion.
  int gap_termination_min = 2;

  static DetectorConfig severity(double threshold) {
    DetectorConfig c;
    c.mode = Mode::severity_threshold;
    c.severity_threshold = threshold;
    return c;
  }
  static DetectorConfig duration(double minutes, double percentile = 0.0) {
    DetectorConfig c;
    c.mode = Mode::duration_threshold;
    c.duration_threshold_min = minutes;
    c.duration_percentile = percentile;
    return c;
  }

  void validate() const;
};

struct ExcursionRecord {
  std::string link_id;
  Minute start;
  Minute end; // last exterior minute
  long long duration_min = 0;
  double max_severity = 0.0;
  ExitSide exit_side = ExitSide::right;
  bool flagged = false;
  std::optional<Minute> flag_onset;
};

/// A Deviation-from-Typical-Behaviour flag. Covers [timestamp, end].
struct DftbFlag {
  std::string link_id;
  Minute timestamp;
  Minute end;
  double severity = 0.0;
  std::size_t excursion = 0; // index into the excursion list

  FlagInterval interval() const { return {timestamp, end}; }
};

/// 0 inside the region, otherwise boundary distance over the training
/// normaliser. Throws Error(not_calibrated) for an uncalibrated region.
double severity(Point p, const levelset::TypicalRegion& region);

/// Sets the normaliser to the largest boundary distance of an exterior
/// training point. Throws when every point is interior.
levelset::TypicalRegion calibrate_normalizer(const levelset::TypicalRegion& region,
                                             std::span<const Point> training);

/// Per-minute classification of a stream against a region.
struct ScoredMinute {
  Minute timestamp;
  bool valid = false; // density available
  bool exterior = false;
  ExitSide side = ExitSide::right;
  double severity = 0.0;
};

std::vector<ScoredMinute> score_stream(std::span<const ingest::TrafficSample> samples,
                                       const levelset::TypicalRegion& region);

struct TrackResult {
  std::vector<ExcursionRecord> excursions;
  std::vector<DftbFlag> flags;
  std::size_t applications = 0; // minutes with a usable density
};

/// Streaming excursion state machine for one link.
///
/// An excursion opens at an exterior minute and closes at the next interior
/// minute, at a change of exit side, or when at least `gap_termination_min`
/// minutes are missing. Minutes without a density leave the state alone.
class ExcursionTracker {
public:
  ExcursionTracker(std::string link_id, DetectorConfig config);

  /// Feed minutes in strictly increasing time order.
  void push(const ScoredMinute& m);
  /// Close any open excursion.
  void finish();

  const TrackResult& result() const { return result_; }
  TrackResult take() { return std::move(result_); }

private:
  void open(const ScoredMinute& m);
  void close();

  std::string link_id_;
  DetectorConfig config_;
  TrackResult result_;
  std::optional<Minute> last_time_;
  std::optional<Minute> last_valid_;
  bool open_ = false;
  ExcursionRecord current_;
};

TrackResult track_scored(std::span<const ScoredMinute> minutes, const std::string& link_id,
                         const DetectorConfig& config);

/// Scores and tracks a time-ordered stream. Throws on unordered input.
TrackResult track(std::span<const ingest::TrafficSample> samples,
                  const levelset::TypicalRegion& region, const DetectorConfig& config);

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest duration (the
/// minimum at p = 0). Needs at least 10 durations.
double duration_threshold_from_percentile(std::span<const long long> durations, double percentile);

std::vector<FlagInterval> flag_intervals(std::span<const DftbFlag> flags);

/// `link_id,start,end,duration_min,max_severity,exit_side,flagged`
void write_excursions_csv(std::ostream& out, std::span<const ExcursionRecord> excursions);

/// One row per flag in the excursion schema; start is the flag onset.
void write_flags_csv(std::ostream& out, std::span<const DftbFlag> flags, bool with_header = true);

/// Same schema for baseline alarms (severity column 0, exit side right).
void write_alarm_csv(std::ostream& out, const std::string& link_id,
                     std::span<const FlagInterval> alarms, bool with_header = true);

/// Reads any file in the excursion schema; rows with flagged=false are
/// skipped. Keyed by link id.
std::map<std::string, std::vector<FlagInterval>> read_flags_csv(std::istream& in);

} // namespace flowsentry::detector
