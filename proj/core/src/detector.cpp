#include "flowsentry/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <istream>
#include <ostream>

#include "flowsentry/error.hpp"
#include "text.hpp"

namespace flowsentry::detector {

void DetectorConfig::validate() const {
  if (!(duration_percentile >= 0.0 && duration_percentile <= 100.0))
    throw Error(ErrorKind::invalid_argument, "duration percentile must lie in [0, 100]");
  if (!(severity_threshold >= 0.0))
    throw Error(ErrorKind::invalid_argument, "severity threshold must be nonnegative");
  if (!(duration_threshold_min >= 0.0))
    throw Error(ErrorKind::invalid_argument, "duration threshold must be nonnegative");
  if (gap_termination_min < 1)
    throw Error(ErrorKind::invalid_argument, "gap termination must be at least 1 minute");
}

double severity(Point p, const levelset::TypicalRegion& region) {
  const auto norm = region.max_training_distance();
  if (!norm) throw Error(ErrorKind::not_calibrated, "typical region has no severity normaliser");
  if (region.contains(p)) return 0.0;
  return region.distance_to_boundary(p) / *norm;
}

levelset::TypicalRegion calibrate_normalizer(const levelset::TypicalRegion& region,
                                             std::span<const Point> training) {
  double worst = 0.0;
  bool any = false;
  for (const auto& p : training) {
    if (region.contains(p)) continue;
    any = true;
    worst = std::max(worst, region.distance_to_boundary(p));
  }
  if (!any)
    throw Error(ErrorKind::degenerate_data, "no training point lies outside the typical region");
  return region.with_normalizer(worst);
}

std::vector<ScoredMinute> score_stream(std::span<const ingest::TrafficSample> samples,
                                       const levelset::TypicalRegion& region) {
  const auto norm = region.max_training_distance();
  if (!norm) throw Error(ErrorKind::not_calibrated, "typical region has no severity normaliser");
  std::vector<ScoredMinute> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    ScoredMinute m;
    m.timestamp = s.timestamp;
    m.valid = s.has_density();
    if (m.valid) {
      const Point p = s.point();
      if (!region.contains(p)) {
        m.exterior = true;
        const auto hit = region.nearest_boundary(p);
        const double d = hit.distance > 0.0 ? hit.distance : std::numeric_limits<double>::denorm_min();
        m.severity = d / *norm;
        m.side = (p.rho <= hit.point.rho && p.flow >= hit.point.flow) ? ExitSide::left
                                                                       : ExitSide::right;
      }
    }
    out.push_back(m);
  }
  return out;
}

ExcursionTracker::ExcursionTracker(std::string link_id, DetectorConfig config)
    : link_id_(std::move(link_id)), config_(config) {
  config_.validate();
}

void ExcursionTracker::push(const ScoredMinute& m) {
  if (last_time_ && m.timestamp <= *last_time_)
    throw Error(ErrorKind::malformed_input, "stream is not strictly time-ordered at " +
                                                format_timestamp(m.timestamp));
  last_time_ = m.timestamp;
  if (!m.valid) return;
  ++result_.applications;

  if (open_ && last_valid_) {
    const long long missing = minutes_between(*last_valid_, m.timestamp) - 1;
    if (missing >= config_.gap_termination_min) close();
  }
  last_valid_ = m.timestamp;

  if (!m.exterior) {
    if (open_) close();
    return;
  }
  if (open_ && current_.exit_side != m.side) close();
  if (!open_) {
    open(m);
    return;
  }
  current_.end = m.timestamp;
  current_.duration_min = minutes_between(current_.start, current_.end) + 1;
  current_.max_severity = std::max(current_.max_severity, m.severity);
  if (config_.mode == Mode::severity_threshold && !current_.flagged &&
      current_.exit_side == ExitSide::right && m.severity >= config_.severity_threshold) {
    current_.flagged = true;
    current_.flag_onset = m.timestamp;
    result_.flags.push_back({link_id_, m.timestamp, m.timestamp, m.severity, result_.excursions.size()});
  }
}

void ExcursionTracker::open(const ScoredMinute& m) {
  open_ = true;
  current_ = ExcursionRecord{link_id_, m.timestamp, m.timestamp, 1, m.severity, m.side, false, std::nullopt};
  if (config_.mode == Mode::severity_threshold && m.side == ExitSide::right &&
      m.severity >= config_.severity_threshold) {
    current_.flagged = true;
    current_.flag_onset = m.timestamp;
    result_.flags.push_back({link_id_, m.timestamp, m.timestamp, m.severity, result_.excursions.size()});
  }
}

void ExcursionTracker::close() {
  if (!open_) return;
  open_ = false;
  if (config_.mode == Mode::duration_threshold) {
    if (current_.exit_side == ExitSide::right &&
        static_cast<double>(current_.duration_min) >= config_.duration_threshold_min) {
      current_.flagged = true;
      current_.flag_onset = current_.start;
      result_.flags.push_back(
          {link_id_, current_.start, current_.end, current_.max_severity, result_.excursions.size()});
    }
  } else if (current_.flagged) {
    result_.flags.back().end = current_.end;
  }
  result_.excursions.push_back(current_);
}

void ExcursionTracker::finish() { close(); }

TrackResult track_scored(std::span<const ScoredMinute> minutes, const std::string& link_id,
                         const DetectorConfig& config) {
  ExcursionTracker tracker(link_id, config);
  for (const auto& m : minutes) tracker.push(m);
  tracker.finish();
  return tracker.take();
}

TrackResult track(std::span<const ingest::TrafficSample> samples,
                  const levelset::TypicalRegion& region, const DetectorConfig& config) {
  config.validate();
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (samples[i].timestamp <= samples[i - 1].timestamp)
      throw Error(ErrorKind::malformed_input, "stream is not strictly time-ordered at " +
                                                  format_timestamp(samples[i].timestamp));
  const std::string link = samples.empty() ? std::string() : samples.front().link_id;
  return track_scored(score_stream(samples, region), link, config);
}

double duration_threshold_from_percentile(std::span<const long long> durations, double percentile) {
  if (durations.size() < 10)
    throw Error(ErrorKind::insufficient_data,
                "need at least 10 training excursions, have " + std::to_string(durations.size()));
  if (!(percentile >= 0.0 && percentile <= 100.0))
    throw Error(ErrorKind::invalid_argument, "percentile must lie in [0, 100]");
  std::vector<long long> sorted(durations.begin(), durations.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile * n / 100.0 - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return static_cast<double>(sorted[rank - 1]);
}

std::vector<FlagInterval> flag_intervals(std::span<const DftbFlag> flags) {
  std::vector<FlagInterval> out;
  out.reserve(flags.size());
  for (const auto& f : flags) out.push_back(f.interval());
  return out;
}

namespace {
constexpr const char* kFlagHeader = "link_id,start,end,duration_min,max_severity,exit_side,flagged";
const char* side_name(ExitSide s) { return s == ExitSide::left ? "left" : "right"; }
} // namespace

void write_excursions_csv(std::ostream& out, std::span<const ExcursionRecord> excursions) {
  out << kFlagHeader << '\n';
  for (const auto& e : excursions)
    out << e.link_id << ',' << format_timestamp(e.start) << ',' << format_timestamp(e.end) << ','
        << e.duration_min << ',' << detail::format_double(e.max_severity) << ','
        << side_name(e.exit_side) << ',' << (e.flagged ? "true" : "false") << '\n';
}

void write_flags_csv(std::ostream& out, std::span<const DftbFlag> flags, bool with_header) {
  if (with_header) out << kFlagHeader << '\n';
  for (const auto& f : flags)
    out << f.link_id << ',' << format_timestamp(f.timestamp) << ',' << format_timestamp(f.end) << ','
        << f.interval().minutes() << ',' << detail::format_double(f.severity) << ",right,true\n";
}

void write_alarm_csv(std::ostream& out, const std::string& link_id,
                     std::span<const FlagInterval> alarms, bool with_header) {
  if (with_header) out << kFlagHeader << '\n';
  for (const auto& a : alarms)
    out << link_id << ',' << format_timestamp(a.start) << ',' << format_timestamp(a.end) << ','
        << a.minutes() << ",0,right,true\n";
}

std::map<std::string, std::vector<FlagInterval>> read_flags_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kFlagHeader)
    throw Error(ErrorKind::malformed_input, std::string("flag file header must be ") + kFlagHeader);
  std::map<std::string, std::vector<FlagInterval>> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_csv(t);
    if (f.size() != 7)
      throw Error(ErrorKind::malformed_input, "flag file line " + std::to_string(lineno) + ": expected 7 fields");
    if (f[6] != "true" && f[6] != "false")
      throw Error(ErrorKind::malformed_input, "flag file line " + std::to_string(lineno) + ": bad flagged value");
    if (f[6] == "false") continue;
    FlagInterval iv{parse_timestamp(f[1]), parse_timestamp(f[2])};
    if (iv.end < iv.start)
      throw Error(ErrorKind::malformed_input, "flag file line " + std::to_string(lineno) + ": end before start");
    out[std::string(f[0])].push_back(iv);
  }
  return out;
}

} // namespace flowsentry::detector
