#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowsentry/geometry.hpp"
#include "flowsentry/time.hpp"

namespace flowsentry::ingest {

inline constexpr double kMaxSpeedKmh = 250.0;
inline constexpr double kMaxFlowVph = 12000.0;
inline constexpr double kMinLinkLengthM = 200.0;
inline constexpr double kMaxLinkLengthM = 10000.0;

/// One minute of link-level data. `density` is derived, never parsed:
/// flow / speed when both are present and speed > 0, missing otherwise.
struct TrafficSample {
  std::string link_id;
  Minute timestamp;
  std::optional<double> speed_kmh;
  std::optional<double> flow_vph;
  std::optional<double> travel_time_s;
  std::optional<double> density;

  bool has_density() const { return density.has_value(); }
  Point point() const { return {*density, *flow_vph}; }
};

/// Builds a sample and derives its density. Throws Error(malformed_input)
/// when speed or flow lie outside the accepted physical range.
TrafficSample make_sample(std::string link_id, Minute timestamp,
                          std::optional<double> speed_kmh,
                          std::optional<double> flow_vph,
                          std::optional<double> travel_time_s = std::nullopt);

struct LinkMeta {
  std::string link_id;
  double length_m = 0.0;
  std::string location_label;
};

/// Throws on non-positive length; returns a warning for lengths outside
/// the 200..10000 m band.
std::vector<std::string> validate(const LinkMeta& meta);

enum class EventCategory {
  accident,
  obstruction,
  breakdown,
  deviation_from_profile,
  roadworks,
  weather,
  other,
};

std::string_view to_string(EventCategory c);
std::optional<EventCategory> category_from_string(std::string_view token);

struct EventLabel {
  std::string link_id;
  EventCategory category = EventCategory::other;
  Minute start;
  Minute end;

  long long duration_minutes() const { return minutes_between(start, end); }
};

/// Non-fatal observations made while parsing.
struct Diagnostics {
  std::vector<std::string> warnings;
};

/// Parses `link_id,timestamp,speed_kmh,flow_vph[,travel_time_s]`.
/// Timestamps must be strictly increasing within each link; empty numeric
/// fields are read as missing. Gaps are kept as gaps.
std::vector<TrafficSample> parse_series(std::istream& in,
                                        Diagnostics* diag = nullptr);
std::vector<TrafficSample> read_series(const std::filesystem::path& path,
                                       Diagnostics* diag = nullptr);

/// Writes the travel-time column only when at least one sample has it.
void write_series(std::ostream& out, std::span<const TrafficSample> samples);

/// Parses `link_id,category,start,end`. Unknown categories become `other`
/// with a warning.
std::vector<EventLabel> parse_events(std::istream& in,
                                     Diagnostics* diag = nullptr);
std::vector<EventLabel> read_events(const std::filesystem::path& path,
                                    Diagnostics* diag = nullptr);
void write_events(std::ostream& out, std::span<const EventLabel> labels);

/// Drops roadworks and weather labels.
std::vector<EventLabel> nonrecurrent_filter(std::span<const EventLabel> labels);

std::map<std::string, std::vector<TrafficSample>>
split_by_link(std::span<const TrafficSample> samples);

std::vector<EventLabel> labels_for_link(std::span<const EventLabel> labels,
                                        std::string_view link_id);

/// Density-flow points of the samples that have a density.
std::vector<Point> density_flow_points(std::span<const TrafficSample> samples);

} // namespace flowsentry::ingest
