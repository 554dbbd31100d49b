#pragma once

#include <span>
#include <string>
#include <vector>

#include "flowsentry/flag_interval.hpp"
#include "flowsentry/ingest.hpp"
#include "flowsentry/levelset.hpp"

// Static SVG figures. Output depends only on the inputs.
namespace flowsentry::plot {

/// Density-flow scatter; with a region, one closed `<path class="region">`
/// per ring. At most `max_points` points are drawn, evenly strided.
std::string scatter_svg(std::span<const Point> points, const levelset::TypicalRegion* region,
                        std::size_t max_points = 20000);

/// Travel time against time with one `<rect class="flag-marker">` per flag.
std::string travel_time_svg(std::span<const ingest::TrafficSample> samples,
                            std::span<const FlagInterval> flags);

struct Histogram {
  double lo = 0.0;
  double width = 1.0;
  std::vector<std::size_t> counts;
};

/// Equal-width bins from the smallest to the largest duration.
Histogram duration_histogram(std::span<const long long> durations, std::size_t bins = 20);

/// One `<rect class="bar">` per bin, carrying a data-count attribute.
std::string histogram_svg(const Histogram& h, const std::string& title);

} // namespace flowsentry::plot
