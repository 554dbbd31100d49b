#include "flowsentry/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "flowsentry/error.hpp"
#include "text.hpp"

namespace flowsentry::ingest {
namespace {

using detail::format_double;
using detail::parse_double;
using detail::split_csv;
using detail::trim;

[[noreturn]] void row_error(std::size_t row, const std::string& msg) {
  throw Error(ErrorKind::malformed_input, "row " + std::to_string(row) + ": " + msg);
}

std::optional<double> numeric_field(std::string_view field, std::size_t row,
                                    const char* name) {
  if (trim(field).empty()) return std::nullopt;
  auto v = parse_double(field);
  if (!v || !std::isfinite(*v))
    row_error(row, std::string("unparsable ") + name + " '" + std::string(field) + "'");
  return v;
}

bool blank(std::string_view line) { return trim(line).empty(); }

} // namespace

TrafficSample make_sample(std::string link_id, Minute timestamp,
                          std::optional<double> speed_kmh,
                          std::optional<double> flow_vph,
                          std::optional<double> travel_time_s) {
  if (speed_kmh && !(*speed_kmh >= 0.0 && *speed_kmh <= kMaxSpeedKmh))
    throw Error(ErrorKind::malformed_input,
                "speed " + format_double(*speed_kmh) + " km/h outside [0, 250]");
  if (flow_vph && !(*flow_vph >= 0.0 && *flow_vph <= kMaxFlowVph))
    throw Error(ErrorKind::malformed_input,
                "flow " + format_double(*flow_vph) + " veh/h outside [0, 12000]");
  if (travel_time_s && !(*travel_time_s >= 0.0 && std::isfinite(*travel_time_s)))
    throw Error(ErrorKind::malformed_input, "negative travel time");

  TrafficSample s{std::move(link_id), timestamp, speed_kmh, flow_vph, travel_time_s, std::nullopt};
  if (speed_kmh && flow_vph && *speed_kmh > 0.0) s.density = *flow_vph / *speed_kmh;
  return s;
}

std::vector<std::string> validate(const LinkMeta& meta) {
  if (meta.link_id.empty())
    throw Error(ErrorKind::invalid_argument, "link id is empty");
  if (!(meta.length_m > 0.0))
    throw Error(ErrorKind::invalid_argument,
                "link " + meta.link_id + " has non-positive length");
  std::vector<std::string> warnings;
  if (meta.length_m < kMinLinkLengthM || meta.length_m > kMaxLinkLengthM)
    warnings.push_back("link " + meta.link_id + " length " + format_double(meta.length_m) +
                       " m outside the usual 200..10000 m range");
  return warnings;
}

std::string_view to_string(EventCategory c) {
  switch (c) {
  case EventCategory::accident: return "accident";
  case EventCategory::obstruction: return "obstruction";
  case EventCategory::breakdown: return "breakdown";
  case EventCategory::deviation_from_profile: return "deviation_from_profile";
  case EventCategory::roadworks: return "roadworks";
  case EventCategory::weather: return "weather";
  case EventCategory::other: return "other";
  }
  return "other";
}

std::optional<EventCategory> category_from_string(std::string_view token) {
  for (auto c : {EventCategory::accident, EventCategory::obstruction,
                 EventCategory::breakdown, EventCategory::deviation_from_profile,
                 EventCategory::roadworks, EventCategory::weather, EventCategory::other})
    if (token == to_string(c)) return c;
  return std::nullopt;
}

std::vector<TrafficSample> parse_series(std::istream& in, Diagnostics* diag) {
  std::string line;
  std::size_t row = 0;
  bool has_tt = false;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) continue;
    auto cols = split_csv(line);
    bool base = cols.size() >= 4 && cols[0] == "link_id" && cols[1] == "timestamp" &&
                cols[2] == "speed_kmh" && cols[3] == "flow_vph";
    if (!base || cols.size() > 5 || (cols.size() == 5 && cols[4] != "travel_time_s"))
      row_error(row, "expected header link_id,timestamp,speed_kmh,flow_vph[,travel_time_s]");
    has_tt = cols.size() == 5;
    break;
  }
  if (row == 0) throw Error(ErrorKind::malformed_input, "empty series input");

  const std::size_t width = has_tt ? 5 : 4;
  std::vector<TrafficSample> out;
  std::unordered_map<std::string, Minute> last_seen;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) continue;
    auto cols = split_csv(line);
    if (cols.size() != width)
      row_error(row, "expected " + std::to_string(width) + " fields, found " +
                         std::to_string(cols.size()));
    if (cols[0].empty()) row_error(row, "empty link_id");
    Minute t;
    try {
      t = parse_timestamp(cols[1]);
    } catch (const Error& e) {
      row_error(row, e.what());
    }
    auto speed = numeric_field(cols[2], row, "speed");
    auto flow = numeric_field(cols[3], row, "flow");
    std::optional<double> tt;
    if (has_tt) tt = numeric_field(cols[4], row, "travel time");

    std::string link(cols[0]);
    if (auto it = last_seen.find(link); it != last_seen.end()) {
      if (t == it->second) row_error(row, "duplicate timestamp " + format_timestamp(t));
      if (t < it->second) row_error(row, "timestamp " + format_timestamp(t) + " is out of order");
    }
    last_seen[link] = t;
    try {
      out.push_back(make_sample(link, t, speed, flow, tt));
    } catch (const Error& e) {
      row_error(row, e.what());
    }
  }
  if (diag && out.empty()) diag->warnings.push_back("series input has no data rows");
  return out;
}

std::vector<TrafficSample> read_series(const std::filesystem::path& path, Diagnostics* diag) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_series(in, diag);
}

void write_series(std::ostream& out, std::span<const TrafficSample> samples) {
  bool has_tt = std::any_of(samples.begin(), samples.end(),
                            [](const TrafficSample& s) { return s.travel_time_s.has_value(); });
  out << "link_id,timestamp,speed_kmh,flow_vph" << (has_tt ? ",travel_time_s" : "") << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& s : samples) {
    out << s.link_id << ',' << format_timestamp(s.timestamp) << ',' << opt(s.speed_kmh) << ','
        << opt(s.flow_vph);
    if (has_tt) out << ',' << opt(s.travel_time_s);
    out << '\n';
  }
}

std::vector<EventLabel> parse_events(std::istream& in, Diagnostics* diag) {
  std::string line;
  std::size_t row = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) continue;
    auto cols = split_csv(line);
    if (cols.size() != 4 || cols[0] != "link_id" || cols[1] != "category" ||
        cols[2] != "start" || cols[3] != "end")
      row_error(row, "expected header link_id,category,start,end");
    header = true;
    break;
  }
  if (!header) throw Error(ErrorKind::malformed_input, "empty events input");

  std::vector<EventLabel> out;
  while (std::getline(in, line)) {
    ++row;
    if (blank(line)) continue;
    auto cols = split_csv(line);
    if (cols.size() != 4)
      row_error(row, "expected 4 fields, found " + std::to_string(cols.size()));
    if (cols[0].empty()) row_error(row, "empty link_id");
    EventLabel label;
    label.link_id = std::string(cols[0]);
    if (auto c = category_from_string(cols[1])) {
      label.category = *c;
    } else {
      label.category = EventCategory::other;
      if (diag)
        diag->warnings.push_back("row " + std::to_string(row) + ": unknown category '" +
                                 std::string(cols[1]) + "' mapped to other");
    }
    try {
      label.start = parse_timestamp(cols[2]);
      label.end = parse_timestamp(cols[3]);
    } catch (const Error& e) {
      row_error(row, e.what());
    }
    if (label.end < label.start) row_error(row, "event ends before it starts");
    out.push_back(std::move(label));
  }
  return out;
}

std::vector<EventLabel> read_events(const std::filesystem::path& path, Diagnostics* diag) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_events(in, diag);
}

void write_events(std::ostream& out, std::span<const EventLabel> labels) {
  out << "link_id,category,start,end\n";
  for (const auto& l : labels)
    out << l.link_id << ',' << to_string(l.category) << ',' << format_timestamp(l.start) << ','
        << format_timestamp(l.end) << '\n';
}

std::vector<EventLabel> nonrecurrent_filter(std::span<const EventLabel> labels) {
  std::vector<EventLabel> out;
  for (const auto& l : labels)
    if (l.category != EventCategory::roadworks && l.category != EventCategory::weather)
      out.push_back(l);
  return out;
}

std::map<std::string, std::vector<TrafficSample>>
split_by_link(std::span<const TrafficSample> samples) {
  std::map<std::string, std::vector<TrafficSample>> out;
  for (const auto& s : samples) out[s.link_id].push_back(s);
  return out;
}

std::vector<EventLabel> labels_for_link(std::span<const EventLabel> labels,
                                        std::string_view link_id) {
  std::vector<EventLabel> out;
  for (const auto& l : labels)
    if (l.link_id == link_id) out.push_back(l);
  return out;
}

std::vector<Point> density_flow_points(std::span<const TrafficSample> samples) {
  std::vector<Point> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    if (s.has_density()) out.push_back(s.point());
  return out;
}

} // namespace flowsentry::ingest
